//! Phased best-response algorithm for approximate pure equilibria.
//!
//! Players are grouped into blocks by their optimistic cost. Phase `i`
//! lets block `B_i` make best-response `p`-moves and block `B_{i+1}` make
//! best-response `q`-moves until neither kind of move remains. The final
//! state is a `p(1 + 4 n^-ψ)`-approximate equilibrium.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{optimistic_cost, threshold_move_with_loads, PhaseSummary, Profile, RunTrace, TraceSummary};
use crate::game::{CongestionGame, GameView, Mode, State};
use crate::rational::{self, big, int, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("solver requires a standard-mode game")]
    NotStandard,
    #[error("degree {0} latencies need an explicit theta: no closed-form potential ratio bound is known for d >= 2 (pass a theta override)")]
    MissingTheta(usize),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("instance too small for psi: {0}")]
    Parameter(String),
    #[error("contract violation: move cap {cap} reached")]
    CapExceeded { cap: u128, trace: Box<RunTrace> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheduler {
    /// Lowest-index eligible `B_i` player, else lowest-index eligible `B_{i+1}` player.
    #[default]
    RoundRobin,
    /// Uniform choice among all currently eligible players.
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub psi: u32,
    /// Potential ratio bound to use instead of the linear closed form.
    /// Required for degree 2 and above; ignored for linear games.
    pub theta_override: Option<Rational>,
    /// Defaults to four times the dominant term of [`move_bound`].
    pub move_cap: Option<u128>,
    pub scheduler: Scheduler,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { psi: 1, theta_override: None, move_cap: None, scheduler: Scheduler::RoundRobin }
    }
}

impl SolverConfig {
    pub fn with_psi(psi: u32) -> Self {
        Self { psi, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.psi == 0 {
            return Err(SolverError::Config("psi must be a positive integer".into()));
        }
        if let Some(t) = &self.theta_override {
            if *t <= Rational::one() {
                return Err(SolverError::Config(format!("theta must exceed 1 (got {})", rational::format(t))));
            }
        }
        Ok(())
    }
}

/// Ratio bound between the potential of a `q`-approximate equilibrium and
/// the minimum potential: `2q/(2-q)` for linear games, `over` otherwise.
pub fn theta(d: usize, q: &Rational, over: Option<&Rational>) -> Result<Rational, SolverError> {
    if d <= 1 {
        let two = int(2);
        if *q < Rational::one() || *q >= two {
            return Err(SolverError::Parameter(format!("q must lie in [1, 2) (got {})", rational::format(q))));
        }
        Ok(&two * q / (&two - q))
    } else {
        over.cloned().ok_or(SolverError::MissingTheta(d))
    }
}

/// Exact algorithm parameters for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameters {
    pub n: usize,
    pub d: usize,
    pub psi: u32,
    #[serde(with = "rational::serde_str")]
    pub q: Rational,
    #[serde(with = "rational::serde_str")]
    pub theta: Rational,
    #[serde(with = "rational::serde_str")]
    pub p: Rational,
    /// Guaranteed approximation factor `p(1 + 4 n^-ψ)`.
    #[serde(with = "rational::serde_str")]
    pub bound: Rational,
}

fn n_pow_neg_psi(n: usize, psi: u32) -> Rational {
    rational::pow(&int(n as i64), -(psi as i32))
}

pub fn parameters(n: usize, d: usize, config: &SolverConfig) -> Result<Parameters, SolverError> {
    config.validate()?;
    if n < 2 {
        return Err(SolverError::Parameter(format!("need at least 2 players (got {n})")));
    }
    let d = d.max(1);
    let eps = n_pow_neg_psi(n, config.psi);
    let q = Rational::one() + &eps;
    let theta = theta(d, &q, config.theta_override.as_ref())?;
    let denom = theta.recip() - &eps;
    if !denom.is_positive() {
        return Err(SolverError::Parameter(format!(
            "1/theta = {} does not exceed n^-psi = {} (n={n}, psi={})",
            rational::format(&theta.recip()),
            rational::format(&eps),
            config.psi
        )));
    }
    let p = denom.recip();
    let bound = &p * (Rational::one() + int(4) * &eps);
    Ok(Parameters { n, d, psi: config.psi, q, theta, p, bound })
}

fn big_pow(base: u64, exp: u64) -> BigInt {
    num_traits::pow(BigInt::from(base), exp as usize)
}

/// `2^{2d+2} n^{5ψ+3d+3} + n 2^{d+2} n^{4ψ+2d+2} + n`.
pub fn move_bound(n: usize, d: usize, psi: u32) -> BigInt {
    let (n64, d64, p64) = (n as u64, d as u64, psi as u64);
    let first = big_pow(2, 2 * d64 + 2) * big_pow(n64, 5 * p64 + 3 * d64 + 3);
    let second = BigInt::from(n64) * big_pow(2, d64 + 2) * big_pow(n64, 4 * p64 + 2 * d64 + 2);
    first + second + BigInt::from(n64)
}

/// `4 · 2^{2d+2} n^{5ψ+3d+3}`, saturating at `u128::MAX`.
pub fn default_move_cap(n: usize, d: usize, psi: u32) -> u128 {
    let v = BigInt::from(4u8) * big_pow(2, 2 * d as u64 + 2) * big_pow(n as u64, 5 * psi as u64 + 3 * d as u64 + 3);
    v.to_u128().unwrap_or(u128::MAX)
}

/// Assignment of positive-ℓ players to blocks `B_1..B_m` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub base: BigInt,
    pub m: usize,
    /// `b_1, ..., b_{m+1}`.
    #[serde(with = "rational::serde_vec")]
    pub boundaries: Vec<Rational>,
    /// Block index per player, `None` for zero-ℓ players.
    pub block: Vec<Option<usize>>,
    pub zero_players: Vec<usize>,
}

impl BlockPartition {
    pub fn members(&self, i: usize) -> Vec<usize> {
        (0..self.block.len()).filter(|&u| self.block[u] == Some(i)).collect()
    }

    pub fn non_empty_blocks(&self) -> usize {
        let mut seen: Vec<usize> = self.block.iter().flatten().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

pub fn block_base(n: usize, d: usize, psi: u32) -> BigInt {
    let d = d.max(1) as u64;
    big_pow(2, d + 1) * big_pow(n as u64, 2 * psi as u64 + d + 1)
}

/// `None` when every ℓ is zero.
pub fn partition_blocks(ell: &[Rational], n: usize, d: usize, psi: u32) -> Option<BlockPartition> {
    let positive: Vec<&Rational> = ell.iter().filter(|l| l.is_positive()).collect();
    let l_max = (*positive.iter().max()?).clone();
    let l_min = (*positive.iter().min()?).clone();
    let base = block_base(n, d, psi);
    let b = big(base.clone());
    // m - 1 = ceil(log_B(l_max / l_min)) by repeated multiplication
    let ratio = &l_max / &l_min;
    let mut m = 1;
    let mut power = Rational::one();
    while power < ratio {
        power *= &b;
        m += 1;
    }
    let mut boundaries = vec![l_max.clone()];
    for _ in 0..m {
        let next = boundaries.last().unwrap() / &b;
        boundaries.push(next);
    }
    let block = ell
        .iter()
        .map(|l| {
            if !l.is_positive() {
                return None;
            }
            let mut i = 1;
            while *l <= boundaries[i] {
                i += 1;
            }
            Some(i)
        })
        .collect();
    let zero_players = (0..ell.len()).filter(|&u| !ell[u].is_positive()).collect();
    Some(BlockPartition { base, m, boundaries, block, zero_players })
}

/// Result of one solver run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub params: Parameters,
    pub partition: Option<BlockPartition>,
    #[serde(with = "rational::serde_vec")]
    pub optimistic: Vec<Rational>,
    pub trace: RunTrace,
}

impl SolveOutcome {
    pub fn final_state(&self) -> &State {
        self.trace.final_state()
    }
}

/// Phase `i` runs when `B_i` is non-empty and either `i < m`, or `i = m`
/// and phase `m-1` did not run (otherwise `B_m` would never be checked).
fn phase_runs(partition: &BlockPartition, i: usize, sizes: &[usize]) -> bool {
    if sizes[i] == 0 {
        return false;
    }
    i < partition.m || i == 1 || sizes[i - 1] == 0
}

pub fn solve(game: &CongestionGame, config: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    if game.mode() != Mode::Standard {
        return Err(SolverError::NotStandard);
    }
    let n = game.num_players();
    let d = game.degree().max(1);
    let params = parameters(n, d, config)?;
    let cap = config.move_cap.unwrap_or_else(|| default_move_cap(n, d, config.psi));

    let (optimistic, start): (Vec<Rational>, Vec<usize>) = (0..n).map(|u| optimistic_cost(game, u)).unzip();
    let initial = State::new(start);
    let partition = partition_blocks(&optimistic, n, d, config.psi);
    let mut profile = Profile::new(game, initial.clone());
    let mut moves = Vec::new();
    let mut phases = Vec::new();
    let mut rng = match config.scheduler {
        Scheduler::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Scheduler::RoundRobin => None,
    };

    if let Some(part) = &partition {
        let members: Vec<Vec<usize>> = (0..=part.m + 1).map(|i| part.members(i)).collect();
        let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
        for i in 1..=part.m {
            if !phase_runs(part, i, &sizes) {
                continue;
            }
            let before = moves.len();
            loop {
                let mover = match rng.as_mut() {
                    None => next_mover(game, &profile, &members[i], &members[i + 1], &params),
                    Some(rng) => {
                        let all = eligible_movers(game, &profile, &members[i], &members[i + 1], &params);
                        (!all.is_empty()).then(|| all[rng.gen_range(0..all.len())])
                    }
                };
                let Some((u, k)) = mover else { break };
                if moves.len() as u128 >= cap {
                    let summary = TraceSummary {
                        moves: moves.len(),
                        final_potential: profile.potential(),
                        final_state: profile.state().clone(),
                    };
                    phases.push(PhaseSummary { index: i, block_size: sizes[i], moves: moves.len() - before });
                    let trace = RunTrace { initial_state: initial, moves, phases, truncated: true, summary };
                    return Err(SolverError::CapExceeded { cap, trace: Box::new(trace) });
                }
                let step = moves.len();
                moves.push(profile.record_move(step, u, k, Some(i)));
            }
            phases.push(PhaseSummary { index: i, block_size: sizes[i], moves: moves.len() - before });
        }
    }

    let summary =
        TraceSummary { moves: moves.len(), final_potential: profile.potential(), final_state: profile.into_state() };
    let trace = RunTrace { initial_state: initial, moves, phases, truncated: false, summary };
    Ok(SolveOutcome { params, partition, optimistic, trace })
}

fn next_mover(
    game: &CongestionGame,
    profile: &Profile<'_>,
    p_block: &[usize],
    q_block: &[usize],
    params: &Parameters,
) -> Option<(usize, usize)> {
    let scan = |block: &[usize], t: &Rational| {
        block
            .iter()
            .find_map(|&u| threshold_move_with_loads(game, profile.state(), profile.loads(), u, t).map(|(k, _)| (u, k)))
    };
    scan(p_block, &params.p).or_else(|| scan(q_block, &params.q))
}

fn eligible_movers(
    game: &CongestionGame,
    profile: &Profile<'_>,
    p_block: &[usize],
    q_block: &[usize],
    params: &Parameters,
) -> Vec<(usize, usize)> {
    let blocks = [(p_block, &params.p), (q_block, &params.q)];
    blocks
        .iter()
        .flat_map(|(block, t)| {
            block.iter().filter_map(move |&u| {
                threshold_move_with_loads(game, profile.state(), profile.loads(), u, t).map(|(k, _)| (u, k))
            })
        })
        .collect()
}

/// Replay-based audit of a solver trace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisciplineReport {
    pub moves_checked: usize,
    pub phases_checked: usize,
    pub violations: Vec<String>,
}

impl DisciplineReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks every logged move against its phase and threshold, replays the
/// trace, and rescans for remaining eligible moves at every phase end.
pub fn check_discipline(game: &CongestionGame, outcome: &SolveOutcome) -> DisciplineReport {
    let mut report = DisciplineReport::default();
    let trace = &outcome.trace;
    let Some(part) = &outcome.partition else {
        if !trace.moves.is_empty() {
            report.violations.push("moves logged without a block partition".into());
        }
        return report;
    };
    let params = &outcome.params;
    let mut profile = Profile::new(game, trace.initial_state.clone());
    let mut cursor = 0;
    for phase in &trace.phases {
        let i = phase.index;
        for m in &trace.moves[cursor..cursor + phase.moves] {
            report.moves_checked += 1;
            let u = m.player;
            if m.phase != Some(i) {
                report.violations.push(format!("step {}: logged phase {:?}, expected {i}", m.step, m.phase));
            }
            let threshold = match part.block[u] {
                Some(t) if t == i => &params.p,
                Some(t) if t == i + 1 => &params.q,
                other => {
                    report
                        .violations
                        .push(format!("step {}: player {u} in block {other:?} moved in phase {i}", m.step));
                    continue;
                }
            };
            if profile.state().choice(u) != m.from || profile.cost(u) != m.cost_before {
                report.violations.push(format!("step {}: replay mismatch before move", m.step));
            }
            if !(&m.cost_after * threshold < m.cost_before) {
                report.violations.push(format!("step {}: threshold not met", m.step));
            }
            if !m.is_consistent() {
                report.violations.push(format!("step {}: potential and cost deltas differ", m.step));
            }
            let (br, _) = profile.best_response(u);
            if br != m.to {
                report.violations.push(format!("step {}: move is not the best response", m.step));
            }
            profile.apply(u, m.to);
            if profile.cost(u) != m.cost_after {
                report.violations.push(format!("step {}: replay mismatch after move", m.step));
            }
        }
        cursor += phase.moves;
        report.phases_checked += 1;
        let residual = eligible_movers(game, &profile, &part.members(i), &part.members(i + 1), params);
        if let Some((u, _)) = residual.first() {
            report.violations.push(format!("phase {i} ended with player {u} still eligible"));
        }
    }
    if cursor != trace.moves.len() {
        report.violations.push("phase move counts do not cover the trace".into());
    }
    if profile.state() != trace.final_state() {
        report.violations.push("replayed final state differs from the trace".into());
    }
    // a player of block t must not move in any later phase
    for m in &trace.moves {
        if let (Some(t), Some(ph)) = (part.block[m.player], m.phase) {
            if ph > t {
                report.violations.push(format!("step {}: block {t} player moved in phase {ph}", m.step));
            }
        }
    }
    report
}

/// Zero-ℓ players hold an all-zero strategy; true when they all still do.
pub fn zero_players_pinned(game: &CongestionGame, outcome: &SolveOutcome) -> bool {
    outcome
        .partition
        .as_ref()
        .is_none_or(|p| p.zero_players.iter().all(|&u| game.player_cost(outcome.final_state(), u).is_zero()))
}
