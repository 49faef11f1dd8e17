//! Congestion game model: latency functions, states, loads, costs and the
//! Rosenthal potential, plus subgames in which some players are frozen.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("latency functions are only defined at positive loads (got {0})")]
    InvalidLoad(usize),
    #[error("player {player} has no strategies")]
    NoStrategies { player: usize },
    #[error("player {player}, strategy {strategy} is empty")]
    EmptyStrategy { player: usize, strategy: usize },
    #[error("player {player}, strategy {strategy} references unknown resource {resource}")]
    UnknownResource { player: usize, strategy: usize, resource: usize },
    #[error("resource {resource} has a negative coefficient, not allowed in standard mode")]
    NegativeCoefficient { resource: usize },
    #[error("resource {resource} has negative latency {value} at load {load}")]
    NegativeLatency { resource: usize, load: usize, value: String },
    #[error("state has {got} entries but the game has {expected} players")]
    StateLength { expected: usize, got: usize },
    #[error("player {player} has no strategy with index {strategy}")]
    InvalidStrategy { player: usize, strategy: usize },
    #[error("player index {0} out of range")]
    InvalidPlayer(usize),
    #[error("malformed instance: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Polynomial latencies with non-negative coefficients.
    Standard,
    /// Affine latencies that may carry a negative offset but stay
    /// non-negative at every load a game can produce.
    Hardness,
}

/// `f(x) = a_0 + a_1 x + ... + a_d x^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatencyFunction {
    #[serde(with = "rational::serde_vec")]
    coeffs: Vec<Rational>,
}

impl LatencyFunction {
    pub fn new(coeffs: Vec<Rational>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![Rational::zero()] }
    }

    pub fn constant(c: Rational) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `slope * x + offset`
    pub fn affine(slope: Rational, offset: Rational) -> Self {
        Self { coeffs: vec![offset, slope] }
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    /// Index of the highest non-zero coefficient (0 for constants).
    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| !c.is_zero()).unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn has_nonnegative_coeffs(&self) -> bool {
        self.coeffs.iter().all(|c| !c.is_negative())
    }

    pub fn eval(&self, load: usize) -> Result<Rational, GameError> {
        if load == 0 {
            return Err(GameError::InvalidLoad(load));
        }
        Ok(self.at(load))
    }

    /// Horner evaluation; callers guarantee `load >= 1`.
    pub(crate) fn at(&self, load: usize) -> Rational {
        let x = rational::int(load as i64);
        self.coeffs.iter().rev().fold(Rational::zero(), |acc, c| acc * &x + c)
    }

    pub fn scaled(&self, factor: &Rational) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }
}

pub type Strategy = Vec<usize>;

/// Explicit-strategy congestion game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CongestionGame {
    mode: Mode,
    resources: Vec<LatencyFunction>,
    players: Vec<Vec<Strategy>>,
    labels: Option<Labels>,
}

/// Human-readable names for players, strategies and resources.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub players: Vec<String>,
    pub strategies: Vec<Vec<String>>,
    pub resources: Vec<String>,
}

impl CongestionGame {
    /// Validates and normalizes (sorts, dedups) every strategy.
    pub fn new(mode: Mode, resources: Vec<LatencyFunction>, players: Vec<Vec<Strategy>>) -> Result<Self, GameError> {
        let mut players = players;
        for (u, strategies) in players.iter_mut().enumerate() {
            if strategies.is_empty() {
                return Err(GameError::NoStrategies { player: u });
            }
            for (k, s) in strategies.iter_mut().enumerate() {
                if s.is_empty() {
                    return Err(GameError::EmptyStrategy { player: u, strategy: k });
                }
                s.sort_unstable();
                s.dedup();
                if let Some(&e) = s.iter().find(|&&e| e >= resources.len()) {
                    return Err(GameError::UnknownResource { player: u, strategy: k, resource: e });
                }
            }
        }
        let n = players.len();
        for (e, f) in resources.iter().enumerate() {
            match mode {
                Mode::Standard => {
                    if !f.has_nonnegative_coeffs() {
                        return Err(GameError::NegativeCoefficient { resource: e });
                    }
                }
                Mode::Hardness => {
                    for x in 1..=n.max(1) {
                        let v = f.at(x);
                        if v.is_negative() {
                            return Err(GameError::NegativeLatency {
                                resource: e,
                                load: x,
                                value: rational::format(&v),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self { mode, resources, players, labels: None })
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn latency(&self, e: usize) -> &LatencyFunction {
        &self.resources[e]
    }

    pub fn latencies(&self) -> &[LatencyFunction] {
        &self.resources
    }

    pub fn strategies(&self, u: usize) -> &[Strategy] {
        &self.players[u]
    }

    pub fn strategy(&self, u: usize, k: usize) -> &Strategy {
        &self.players[u][k]
    }

    /// Maximum degree over all latency functions.
    pub fn degree(&self) -> usize {
        self.resources.iter().map(LatencyFunction::degree).max().unwrap_or(0)
    }

    /// Product of strategy-set sizes, saturating.
    pub fn state_count(&self) -> u128 {
        self.players.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }

    pub fn check_state(&self, state: &State) -> Result<(), GameError> {
        if state.0.len() != self.players.len() {
            return Err(GameError::StateLength { expected: self.players.len(), got: state.0.len() });
        }
        for (u, &k) in state.0.iter().enumerate() {
            if k >= self.players[u].len() {
                return Err(GameError::InvalidStrategy { player: u, strategy: k });
            }
        }
        Ok(())
    }

    /// Resources used by player `u` in `state`.
    pub fn chosen(&self, state: &State, u: usize) -> &Strategy {
        &self.players[u][state.0[u]]
    }

    /// Subgame among `active` players, others frozen at `freeze`.
    pub fn subgame(&self, active: &[usize], freeze: &State) -> SubgameView<'_> {
        SubgameView::new(self, active, freeze)
    }
}

/// One strategy index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn new(choice: Vec<usize>) -> Self {
        Self(choice)
    }

    pub fn choice(&self, u: usize) -> usize {
        self.0[u]
    }

    pub fn with(&self, u: usize, k: usize) -> State {
        let mut next = self.clone();
        next.0[u] = k;
        next
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Shared cost/potential logic for a full game and for subgames.
///
/// A view decides which players count towards loads and how much frozen
/// load sits on each resource; latencies become `f_e(x + frozen_e)`.
pub trait GameView {
    fn game(&self) -> &CongestionGame;

    fn frozen_load(&self, _resource: usize) -> usize {
        0
    }

    fn is_active(&self, _player: usize) -> bool {
        true
    }

    /// Latency of `e` when `load >= 1` active players use it.
    fn latency_at(&self, e: usize, load: usize) -> Rational {
        self.game().latency(e).at(load + self.frozen_load(e))
    }

    /// Per-resource count of active players.
    fn loads(&self, state: &State) -> Vec<usize> {
        let game = self.game();
        let mut loads = vec![0; game.num_resources()];
        for u in (0..game.num_players()).filter(|&u| self.is_active(u)) {
            for &e in game.chosen(state, u) {
                loads[e] += 1;
            }
        }
        loads
    }

    fn player_cost_with_loads(&self, state: &State, loads: &[usize], u: usize) -> Rational {
        self.game().chosen(state, u).iter().map(|&e| self.latency_at(e, loads[e])).sum()
    }

    /// Cost of `u` after switching to `alt`, adjusting only the loads
    /// in the symmetric difference of the two strategies.
    fn deviation_cost_with_loads(&self, state: &State, loads: &[usize], u: usize, alt: usize) -> Rational {
        let game = self.game();
        let current = game.chosen(state, u);
        game.strategy(u, alt)
            .iter()
            .map(|&e| {
                let extra = usize::from(current.binary_search(&e).is_err());
                self.latency_at(e, loads[e] + extra)
            })
            .sum()
    }

    /// Cost of an active player; frozen players are evaluated in the full game.
    fn player_cost(&self, state: &State, u: usize) -> Rational {
        if !self.is_active(u) {
            let game = self.game();
            return game.player_cost_with_loads(state, &game.loads(state), u);
        }
        self.player_cost_with_loads(state, &self.loads(state), u)
    }

    fn deviation_cost(&self, state: &State, u: usize, alt: usize) -> Result<Rational, GameError> {
        let game = self.game();
        if u >= game.num_players() {
            return Err(GameError::InvalidPlayer(u));
        }
        if alt >= game.strategies(u).len() {
            return Err(GameError::InvalidStrategy { player: u, strategy: alt });
        }
        if !self.is_active(u) {
            return Ok(game.deviation_cost_with_loads(state, &game.loads(state), u, alt));
        }
        Ok(self.deviation_cost_with_loads(state, &self.loads(state), u, alt))
    }

    fn potential_with_loads(&self, loads: &[usize]) -> Rational {
        let mut total = Rational::zero();
        for (e, &load) in loads.iter().enumerate() {
            for j in 1..=load {
                total += self.latency_at(e, j);
            }
        }
        total
    }

    /// Rosenthal potential over the active players.
    fn potential(&self, state: &State) -> Rational {
        self.potential_with_loads(&self.loads(state))
    }
}

impl GameView for CongestionGame {
    fn game(&self) -> &CongestionGame {
        self
    }
}

/// Players outside the active set are frozen at the strategies they play
/// in the freezing state; they contribute a fixed load to every resource.
#[derive(Debug, Clone)]
pub struct SubgameView<'g> {
    game: &'g CongestionGame,
    active: Vec<bool>,
    frozen: Vec<usize>,
}

impl<'g> SubgameView<'g> {
    pub fn new(game: &'g CongestionGame, active_players: &[usize], freeze: &State) -> Self {
        let mut active = vec![false; game.num_players()];
        for &u in active_players {
            active[u] = true;
        }
        let mut frozen = vec![0; game.num_resources()];
        for u in (0..game.num_players()).filter(|&u| !active[u]) {
            for &e in game.chosen(freeze, u) {
                frozen[e] += 1;
            }
        }
        Self { game, active, frozen }
    }

    pub fn frozen_loads(&self) -> &[usize] {
        &self.frozen
    }

    pub fn active_players(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(u, _)| u)
    }
}

impl GameView for SubgameView<'_> {
    fn game(&self) -> &CongestionGame {
        self.game
    }

    fn frozen_load(&self, resource: usize) -> usize {
        self.frozen[resource]
    }

    fn is_active(&self, player: usize) -> bool {
        self.active[player]
    }
}

pub fn load_profile(game: &CongestionGame, state: &State) -> Vec<usize> {
    game.loads(state)
}

/// `(Σ_e f_e(n_e), Φ, Σ_u c_u)` at one state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateMetrics {
    pub latency_sum: Rational,
    pub potential: Rational,
    pub total_cost: Rational,
}

impl AggregateMetrics {
    /// `latency_sum <= potential <= total_cost`
    pub fn sandwich_holds(&self) -> bool {
        self.latency_sum <= self.potential && self.potential <= self.total_cost
    }
}

pub fn aggregate_metrics(game: &CongestionGame, state: &State) -> AggregateMetrics {
    let loads = game.loads(state);
    let latency_sum = loads.iter().enumerate().filter(|(_, &l)| l > 0).map(|(e, &l)| game.latency(e).at(l)).sum();
    let potential = game.potential_with_loads(&loads);
    let total_cost = (0..game.num_players()).map(|u| game.player_cost_with_loads(state, &loads, u)).sum();
    AggregateMetrics { latency_sum, potential, total_cost }
}

/// Latency of every resource at loads `1..=max_load`, scaled by a common
/// denominator so comparisons reduce to big-integer arithmetic.
#[derive(Debug, Clone)]
pub struct IntegerCostTable {
    /// `table[e][k-1] = scale * f_e(k)`
    table: Vec<Vec<num_bigint::BigInt>>,
    scale: num_bigint::BigInt,
}

impl IntegerCostTable {
    pub fn new(game: &CongestionGame) -> Self {
        let max_load = game.num_players().max(1);
        let values: Vec<Vec<Rational>> =
            game.latencies().iter().map(|f| (1..=max_load).map(|k| f.at(k)).collect()).collect();
        let scale = rational::common_denominator(values.iter().flatten());
        let scale_q = rational::big(scale.clone());
        let table =
            values.into_iter().map(|row| row.into_iter().map(|v| (v * &scale_q).to_integer()).collect()).collect();
        Self { table, scale }
    }

    pub fn scale(&self) -> &num_bigint::BigInt {
        &self.scale
    }

    #[inline]
    pub fn at(&self, e: usize, load: usize) -> &num_bigint::BigInt {
        &self.table[e][load - 1]
    }

    pub fn to_rational(&self, v: &num_bigint::BigInt) -> Rational {
        Rational::new(v.clone(), self.scale.clone())
    }
}

// ---------------------------------------------------------------------------
// Instance file format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResourceRecord {
    #[serde(with = "rational::serde_vec")]
    coeffs: Vec<Rational>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlayerRecord {
    strategies: Vec<Strategy>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRecord {
    mode: Mode,
    resources: Vec<ResourceRecord>,
    players: Vec<PlayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<LabelsRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelsRecord {
    players: BTreeMap<usize, String>,
    #[serde(default)]
    strategies: BTreeMap<String, String>,
    resources: BTreeMap<usize, String>,
}

impl From<&Labels> for LabelsRecord {
    fn from(l: &Labels) -> Self {
        let mut strategies = BTreeMap::new();
        for (u, names) in l.strategies.iter().enumerate() {
            for (k, name) in names.iter().enumerate() {
                strategies.insert(format!("{u}.{k}"), name.clone());
            }
        }
        Self {
            players: l.players.iter().cloned().enumerate().collect(),
            strategies,
            resources: l.resources.iter().cloned().enumerate().collect(),
        }
    }
}

impl CongestionGame {
    pub fn to_json(&self) -> String {
        let record = InstanceRecord {
            mode: self.mode,
            resources: self.resources.iter().map(|f| ResourceRecord { coeffs: f.coeffs.clone() }).collect(),
            players: self.players.iter().map(|s| PlayerRecord { strategies: s.clone() }).collect(),
            labels: self.labels.as_ref().map(LabelsRecord::from),
        };
        serde_json::to_string_pretty(&record).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GameError> {
        let record: InstanceRecord = serde_json::from_str(text).map_err(|e| GameError::Format(e.to_string()))?;
        let resources = record.resources.into_iter().map(|r| LatencyFunction::new(r.coeffs)).collect();
        let players = record.players.into_iter().map(|p| p.strategies).collect();
        let game = Self::new(record.mode, resources, players)?;
        Ok(match record.labels {
            None => game,
            Some(l) => {
                let mut strategies: Vec<Vec<String>> =
                    game.players.iter().map(|s| vec![String::new(); s.len()]).collect();
                for (key, name) in l.strategies {
                    let parsed = key
                        .split_once('.')
                        .and_then(|(u, k)| Some((u.parse::<usize>().ok()?, k.parse::<usize>().ok()?)));
                    if let Some((u, k)) = parsed {
                        if let Some(slot) = strategies.get_mut(u).and_then(|v| v.get_mut(k)) {
                            *slot = name;
                        }
                    }
                }
                let labels = Labels {
                    players: (0..game.num_players()).map(|u| l.players.get(&u).cloned().unwrap_or_default()).collect(),
                    strategies,
                    resources: (0..game.num_resources())
                        .map(|e| l.resources.get(&e).cloned().unwrap_or_default())
                        .collect(),
                };
                game.with_labels(labels)
            }
        })
    }
}

/// `true` when every coefficient of every latency is an integer.
pub fn has_integer_latencies(game: &CongestionGame, max_load: usize) -> bool {
    game.latencies().iter().all(|f| (1..=max_load).all(|x| f.at(x).is_integer()))
}
