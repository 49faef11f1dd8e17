//! Best-response oracles and improvement dynamics.

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{CongestionGame, GameView, State};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DynamicsError {
    #[error("threshold q must be at least 1 (got {0})")]
    InvalidThreshold(String),
    #[error("epsilon must be positive (got {0})")]
    InvalidEpsilon(String),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
}

/// One executed deviation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub step: usize,
    pub player: usize,
    pub from: usize,
    pub to: usize,
    #[serde(with = "rational::serde_str")]
    pub cost_before: Rational,
    #[serde(with = "rational::serde_str")]
    pub cost_after: Rational,
    #[serde(with = "rational::serde_str")]
    pub potential_before: Rational,
    #[serde(with = "rational::serde_str")]
    pub potential_after: Rational,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<usize>,
}

impl MoveRecord {
    /// Strict improvement and exact potential/cost agreement.
    pub fn is_consistent(&self) -> bool {
        self.cost_after < self.cost_before
            && &self.potential_after - &self.potential_before == &self.cost_after - &self.cost_before
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSummary {
    #[serde(rename = "i")]
    pub index: usize,
    pub block_size: usize,
    pub moves: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub moves: usize,
    #[serde(with = "rational::serde_str")]
    pub final_potential: Rational,
    pub final_state: State,
}

/// Ordered move log of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub initial_state: State,
    pub moves: Vec<MoveRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<PhaseSummary>,
    /// Set when a move cap stopped the run early.
    pub truncated: bool,
    pub summary: TraceSummary,
}

impl RunTrace {
    pub fn final_state(&self) -> &State {
        &self.summary.final_state
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Columns: step, player, cost_before, cost_after, potential.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "player", "cost_before", "cost_after", "potential"]).expect("in-memory csv");
        for m in &self.moves {
            w.write_record([
                m.step.to_string(),
                m.player.to_string(),
                rational::format(&m.cost_before),
                rational::format(&m.cost_after),
                rational::format(&m.potential_after),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// A game state with its load profile kept current across moves.
#[derive(Debug, Clone)]
pub struct Profile<'g> {
    game: &'g CongestionGame,
    state: State,
    loads: Vec<usize>,
}

impl<'g> Profile<'g> {
    pub fn new(game: &'g CongestionGame, state: State) -> Self {
        let loads = game.loads(&state);
        Self { game, state, loads }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    pub fn cost(&self, u: usize) -> Rational {
        self.game.player_cost_with_loads(&self.state, &self.loads, u)
    }

    pub fn potential(&self) -> Rational {
        self.game.potential_with_loads(&self.loads)
    }

    pub fn best_response(&self, u: usize) -> (usize, Rational) {
        best_response_with_loads(self.game, &self.state, &self.loads, u)
    }

    /// Switch `u` to strategy `k`, touching only resources that change.
    pub fn apply(&mut self, u: usize, k: usize) {
        let old = self.game.chosen(&self.state, u);
        let new = self.game.strategy(u, k);
        for e in old.iter().filter(|e| new.binary_search(e).is_err()) {
            self.loads[*e] -= 1;
        }
        for e in new.iter().filter(|e| old.binary_search(e).is_err()) {
            self.loads[*e] += 1;
        }
        self.state.0[u] = k;
        debug_assert_eq!(self.loads, self.game.loads(&self.state));
    }

    /// Executes a best-response move and logs it.
    pub fn record_move(&mut self, step: usize, u: usize, to: usize, phase: Option<usize>) -> MoveRecord {
        let from = self.state.0[u];
        let cost_before = self.cost(u);
        let potential_before = self.potential();
        self.apply(u, to);
        MoveRecord {
            step,
            player: u,
            from,
            to,
            cost_before,
            cost_after: self.cost(u),
            potential_before,
            potential_after: self.potential(),
            phase,
        }
    }

    pub fn into_state(self) -> State {
        self.state
    }
}

/// Minimum cost of `u` when alone in the game, with the argmin strategy
/// (lowest index on ties).
pub fn optimistic_cost(game: &CongestionGame, u: usize) -> (Rational, usize) {
    let mut best: Option<(Rational, usize)> = None;
    for (k, s) in game.strategies(u).iter().enumerate() {
        let c: Rational = s.iter().map(|&e| game.latency(e).at(1)).sum();
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, k));
        }
    }
    best.expect("every player has a strategy")
}

pub(crate) fn best_response_with_loads<V: GameView + ?Sized>(
    view: &V,
    state: &State,
    loads: &[usize],
    u: usize,
) -> (usize, Rational) {
    let mut best: Option<(usize, Rational)> = None;
    for k in 0..view.game().strategies(u).len() {
        let c = view.deviation_cost_with_loads(state, loads, u, k);
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((k, c));
        }
    }
    best.expect("every player has a strategy")
}

/// Globally cheapest deviation of `u`; lowest strategy index wins ties.
pub fn best_response<V: GameView + ?Sized>(view: &V, state: &State, u: usize) -> (usize, Rational) {
    best_response_with_loads(view, state, &view.loads(state), u)
}

pub(crate) fn threshold_move_with_loads<V: GameView + ?Sized>(
    view: &V,
    state: &State,
    loads: &[usize],
    u: usize,
    q: &Rational,
) -> Option<(usize, Rational)> {
    let current = view.player_cost_with_loads(state, loads, u);
    if current.is_zero() {
        return None;
    }
    let (k, c) = best_response_with_loads(view, state, loads, u);
    // c < current / q, kept division-free
    (&c * q < current).then_some((k, c))
}

/// The best response of `u` if it is a q-move (`cost < c_u(S) / q`).
pub fn find_threshold_move<V: GameView + ?Sized>(
    view: &V,
    state: &State,
    u: usize,
    q: &Rational,
) -> Result<Option<(usize, Rational)>, DynamicsError> {
    if *q < Rational::one() {
        return Err(DynamicsError::InvalidThreshold(rational::format(q)));
    }
    Ok(threshold_move_with_loads(view, state, &view.loads(state), u, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlayerOrder {
    #[default]
    RoundRobin,
    /// Fresh seeded shuffle for every pass over the players.
    Shuffled(u64),
}

/// Repeated (1+ε)-moves until none remains or `move_cap` is reached.
pub fn epsilon_br_dynamics(
    game: &CongestionGame,
    start: State,
    epsilon: &Rational,
    move_cap: usize,
    order: PlayerOrder,
) -> Result<RunTrace, DynamicsError> {
    if !epsilon.is_positive() {
        return Err(DynamicsError::InvalidEpsilon(rational::format(epsilon)));
    }
    game.check_state(&start)?;
    let q = Rational::one() + epsilon;
    let n = game.num_players();
    let mut rng = match order {
        PlayerOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        PlayerOrder::RoundRobin => None,
    };
    let mut profile = Profile::new(game, start.clone());
    let mut moves = Vec::new();
    let mut truncated = false;
    let mut players: Vec<usize> = (0..n).collect();
    'outer: loop {
        if let Some(rng) = rng.as_mut() {
            players.shuffle(rng);
        }
        let mut moved = false;
        for &u in &players {
            let found = threshold_move_with_loads(game, profile.state(), profile.loads(), u, &q);
            if let Some((k, _)) = found {
                if moves.len() >= move_cap {
                    truncated = true;
                    break 'outer;
                }
                let step = moves.len();
                moves.push(profile.record_move(step, u, k, None));
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let summary =
        TraceSummary { moves: moves.len(), final_potential: profile.potential(), final_state: profile.into_state() };
    Ok(RunTrace { initial_state: start, moves, phases: Vec::new(), truncated, summary })
}

/// [`optimistic_cost`] for every player.
pub fn optimistic_costs(game: &CongestionGame) -> Vec<(Rational, usize)> {
    (0..game.num_players()).map(|u| optimistic_cost(game, u)).collect()
}
