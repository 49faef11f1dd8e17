//! Benchmark harness: seeded solver runs fanned out over a worker pool and
//! written as CSV.

use std::io::Write;
use std::time::Instant;

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{generate, GenError, GenSpec};
use crate::rational::{self, Rational};
use crate::solver::{move_bound, solve, SolverConfig, SolverError};
use crate::verify::{approximation_factor, Factor};

pub const CSV_HEADER: [&str; 11] =
    ["n", "d", "psi", "seed", "moves", "phases", "ms", "rho_star", "bound", "ok", "move_bound"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One solver run on one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub d: usize,
    pub psi: u32,
    pub seed: u64,
    pub moves: usize,
    pub phases: usize,
    /// Wall time in milliseconds.
    pub ms: f64,
    pub rho_star: Factor,
    #[serde(with = "rational::serde_str")]
    pub bound: Rational,
    pub ok: bool,
    pub move_bound: BigInt,
}

impl BenchRecord {
    fn row(&self) -> [String; 11] {
        [
            self.n.to_string(),
            self.d.to_string(),
            self.psi.to_string(),
            self.seed.to_string(),
            self.moves.to_string(),
            self.phases.to_string(),
            format!("{:.3}", self.ms),
            self.rho_star.to_string(),
            rational::format(&self.bound),
            self.ok.to_string(),
            self.move_bound.to_string(),
        ]
    }
}

/// Generates the instance for `spec`, solves it and verifies the final state.
pub fn run_one(spec: &GenSpec, config: &SolverConfig) -> Result<BenchRecord, BenchError> {
    let game = generate(spec)?;
    let start = Instant::now();
    let outcome = solve(&game, config)?;
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    let rho_star = approximation_factor(&game, outcome.final_state()).rho;
    let ok = rho_star.le(&outcome.params.bound);
    Ok(BenchRecord {
        n: game.num_players(),
        d: outcome.params.d,
        psi: config.psi,
        seed: spec.seed,
        moves: outcome.trace.moves.len(),
        phases: outcome.trace.phases.len(),
        ms,
        rho_star,
        bound: outcome.params.bound.clone(),
        ok,
        move_bound: move_bound(game.num_players(), outcome.params.d, config.psi),
    })
}

/// Runs every spec in parallel; results keep the input order.
pub fn run_all(specs: &[GenSpec], config: &SolverConfig) -> Vec<Result<BenchRecord, BenchError>> {
    specs.par_iter().map(|s| run_one(s, config)).collect()
}

/// Linear-style specs for every `n` in `ns` and `seeds` consecutive seeds.
pub fn sweep(ns: &[usize], seeds: u64, first_seed: u64, resources: usize, degree: usize) -> Vec<GenSpec> {
    ns.iter()
        .flat_map(|&n| (0..seeds).map(move |i| GenSpec { degree, ..GenSpec::linear(first_seed + i, n, resources) }))
        .collect()
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.row())?;
    }
    w.flush()?;
    Ok(())
}
