//! Circuit-to-game reduction: congestion games whose exact equilibria
//! encode local minima of a Flip instance, with at most two players per
//! resource and linear latencies given as value pairs.

mod build;
mod circuit;

pub use build::{build_flip_game, check_equilibria, EquilibriumCheck, FlipGame, Layout};
pub use circuit::{
    derive_subcircuits, flip_is_local_min, flip_objective, random_flip_instance, Circuit, CircuitBundle, FlipGate,
    FlipInstance, Gate, Ref, Wire,
};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{has_integer_latencies, CongestionGame, LatencyFunction, Mode};
use crate::rational::{self, big, int, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HardnessError {
    #[error("invalid circuit: {0}")]
    Circuit(String),
    #[error("bundle is missing a circuit: {0}")]
    MissingCircuit(String),
    #[error("invalid gadget parameters: {0}")]
    Params(String),
    #[error("latencies must be integers at loads 1 and 2 (resource {0})")]
    NonInteger(usize),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
}

/// Latency values at one and two players.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyPair {
    #[serde(with = "rational::serde_str")]
    pub a: Rational,
    #[serde(with = "rational::serde_str")]
    pub b: Rational,
}

impl LatencyPair {
    pub fn new(a: Rational, b: Rational) -> Self {
        Self { a, b }
    }

    /// A single table value: the same latency at both loads.
    pub fn constant(c: Rational) -> Self {
        Self { a: c.clone(), b: c }
    }
}

/// `f(x) = (b - a) x + 2a - b`, so `f(1) = a` and `f(2) = b`.
pub fn pair_to_linear(pair: &LatencyPair) -> LatencyFunction {
    LatencyFunction::affine(&pair.b - &pair.a, int(2) * &pair.a - &pair.b)
}

/// Magnitudes of the gadget latencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadgetParams {
    #[serde(with = "rational::serde_str")]
    pub alpha: Rational,
    #[serde(with = "rational::serde_str")]
    pub beta: Rational,
    #[serde(with = "rational::serde_str")]
    pub gamma: Rational,
    #[serde(with = "rational::serde_str")]
    pub big_m: Rational,
    #[serde(with = "rational::serde_str")]
    pub rho: Rational,
    /// Total gate count the parameters were derived for.
    pub gates: usize,
}

impl GadgetParams {
    /// `α = ⌈max(ρ, 2)⌉`, `β = α^{2K+1}`, `γ = 2αβ` and, unless overridden,
    /// `M = α^6 γ^{m+1}`.
    pub fn new(rho: &Rational, gates: usize, outputs: usize, big_m: Option<Rational>) -> Result<Self, HardnessError> {
        let alpha = big(rational::ceil_int(&rho.clone().max(int(2))));
        Self::with_alpha(alpha, rho, gates, outputs, big_m)
    }

    pub fn with_alpha(
        alpha: Rational,
        rho: &Rational,
        gates: usize,
        outputs: usize,
        big_m: Option<Rational>,
    ) -> Result<Self, HardnessError> {
        let beta = rational::pow(&alpha, 2 * gates as i32 + 1);
        let gamma = int(2) * &alpha * &beta;
        let big_m = big_m.unwrap_or_else(|| rational::pow(&alpha, 6) * rational::pow(&gamma, outputs as i32 + 1));
        let p = Self { alpha, beta, gamma, big_m, rho: rho.clone(), gates };
        p.validate()?;
        Ok(p)
    }

    pub fn for_bundle(bundle: &CircuitBundle, rho: &Rational) -> Result<Self, HardnessError> {
        Self::new(rho, bundle.total_gates(), bundle.outputs, None)
    }

    pub fn validate(&self) -> Result<(), HardnessError> {
        let bad = |m: String| Err(HardnessError::Params(m));
        if !self.alpha.is_integer() {
            return bad("alpha must be an integer".into());
        }
        if self.alpha < self.rho.clone().max(int(2)) {
            return bad(format!("alpha {} is below max(rho, 2)", rational::format(&self.alpha)));
        }
        if self.beta != rational::pow(&self.alpha, 2 * self.gates as i32 + 1) {
            return bad("beta must equal alpha^(2K+1)".into());
        }
        if self.gamma != int(2) * &self.alpha * &self.beta {
            return bad("gamma must equal 2 alpha beta".into());
        }
        if !(self.alpha < self.beta && self.beta < self.gamma && self.gamma < self.big_m) {
            return bad("need alpha < beta < gamma < M".into());
        }
        if !self.big_m.is_integer() {
            return bad("M must be an integer".into());
        }
        Ok(())
    }
}

/// Raises every zero `f(1)` to 1 and multiplies every other table value by
/// `|E| α`. The result keeps all strict preferences of the input game.
pub fn positivize(
    game: &CongestionGame,
    alpha: &Rational,
    resource_count: usize,
) -> Result<CongestionGame, HardnessError> {
    if *alpha < int(2) {
        return Err(HardnessError::Params("alpha must be at least 2".into()));
    }
    if !has_integer_latencies(game, 2) {
        let e = (0..game.num_resources())
            .find(|&e| (1..=2).any(|x| !game.latency(e).eval(x).expect("positive load").is_integer()))
            .unwrap_or(0);
        return Err(HardnessError::NonInteger(e));
    }
    let factor = int(resource_count as i64) * alpha;
    let latencies = game
        .latencies()
        .iter()
        .map(|f| {
            let a = f.eval(1).expect("positive load");
            let b = f.eval(2).expect("positive load");
            let a = if a.is_zero() { Rational::one() } else { &a * &factor };
            pair_to_linear(&LatencyPair::new(a, &b * &factor))
        })
        .collect();
    let players = (0..game.num_players()).map(|u| game.strategies(u).to_vec()).collect();
    let mut out = CongestionGame::new(Mode::Hardness, latencies, players)?;
    if let Some(labels) = game.labels() {
        out = out.with_labels(labels.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharingViolation {
    pub resource: usize,
    pub players: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralReport {
    /// Distinct players mentioning each resource.
    pub players_per_resource: Vec<usize>,
    pub max_players: usize,
    pub sharing_violations: Vec<SharingViolation>,
    /// Resources with a negative latency at load 1 or 2.
    pub negative: Vec<usize>,
    pub pass: bool,
}

/// At most two players per resource and `f(1), f(2) ≥ 0`.
pub fn structural_check(game: &CongestionGame) -> StructuralReport {
    let mut mentions: Vec<Vec<usize>> = vec![Vec::new(); game.num_resources()];
    for u in 0..game.num_players() {
        for s in game.strategies(u) {
            for &e in s {
                if mentions[e].last() != Some(&u) {
                    mentions[e].push(u);
                }
            }
        }
    }
    let players_per_resource: Vec<usize> = mentions.iter().map(Vec::len).collect();
    let sharing_violations: Vec<SharingViolation> = mentions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.len() > 2)
        .map(|(e, p)| SharingViolation { resource: e, players: p.clone() })
        .collect();
    let negative: Vec<usize> = (0..game.num_resources())
        .filter(|&e| (1..=2).any(|x| game.latency(e).eval(x).expect("positive load").is_negative()))
        .collect();
    let pass = sharing_violations.is_empty() && negative.is_empty();
    StructuralReport {
        max_players: players_per_resource.iter().copied().max().unwrap_or(0),
        players_per_resource,
        sharing_violations,
        negative,
        pass,
    }
}
