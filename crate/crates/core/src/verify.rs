//! Exact equilibrium verification, exhaustive oracles and potential audits.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dynamics::{epsilon_br_dynamics, PlayerOrder, Profile};
use crate::game::{
    aggregate_metrics, CongestionGame, GameError, GameView, IntegerCostTable, LatencyFunction, Mode, State, SubgameView,
};
use crate::rational::{self, int, ratio, Rational};

pub const DEFAULT_BUDGET: u128 = 1 << 20;
/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_ENV: &str = "CONGAME_ENUM_BUDGET";

/// Enumeration budget, honouring [`BUDGET_ENV`] when it parses.
pub fn enumeration_budget() -> u128 {
    std::env::var(BUDGET_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_BUDGET)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("refusing to enumerate {needed} states/nodes (budget {budget})")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("operation requires a standard-mode game")]
    NotStandard,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
}

/// A ratio that may be infinite (positive cost over zero cost).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Factor {
    Finite(Rational),
    Infinite,
}

impl Factor {
    pub fn one() -> Self {
        Factor::Finite(Rational::one())
    }

    /// `num / den` with 0/0 = 1 and x/0 = infinity.
    pub fn ratio(num: &Rational, den: &Rational) -> Self {
        if den.is_zero() {
            if num.is_zero() {
                Factor::one()
            } else {
                Factor::Infinite
            }
        } else {
            Factor::Finite(num / den)
        }
    }

    pub fn as_finite(&self) -> Option<&Rational> {
        match self {
            Factor::Finite(r) => Some(r),
            Factor::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Factor::Infinite)
    }

    pub fn le(&self, bound: &Rational) -> bool {
        self.as_finite().is_some_and(|r| r <= bound)
    }

    pub fn parse(s: &str) -> Result<Self, rational::ParseRationalError> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Factor::Infinite),
            t => rational::parse(t).map(Factor::Finite),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Finite(r) => f.write_str(&rational::format(r)),
            Factor::Infinite => f.write_str("inf"),
        }
    }
}

impl Ord for Factor {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Factor::Finite(a), Factor::Finite(b)) => a.cmp(b),
            (Factor::Finite(_), Factor::Infinite) => Ordering::Less,
            (Factor::Infinite, Factor::Finite(_)) => Ordering::Greater,
            (Factor::Infinite, Factor::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Factor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Factor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Factor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Factor::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub player: usize,
    pub strategy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub rho: Factor,
    /// First (player, strategy) attaining `rho`; `None` when `rho = 1`.
    pub witness: Option<Witness>,
    pub per_player: Vec<Factor>,
}

impl ApproxReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

fn player_ratio<V: GameView + ?Sized>(view: &V, state: &State, loads: &[usize], u: usize) -> (Factor, usize) {
    let cost = view.player_cost_with_loads(state, loads, u);
    let mut best = (Factor::one(), state.choice(u));
    for k in 0..view.game().strategies(u).len() {
        let r = Factor::ratio(&cost, &view.deviation_cost_with_loads(state, loads, u, k));
        if r > best.0 {
            best = (r, k);
        }
    }
    best
}

/// Exhaustive worst deviation ratio over every player and strategy.
pub fn approximation_factor(game: &CongestionGame, state: &State) -> ApproxReport {
    let loads = game.loads(state);
    let mut rho = Factor::one();
    let mut witness = None;
    let mut per_player = Vec::with_capacity(game.num_players());
    for u in 0..game.num_players() {
        let (r, k) = player_ratio(game, state, &loads, u);
        if r > rho {
            rho = r.clone();
            witness = Some(Witness { player: u, strategy: k });
        }
        per_player.push(r);
    }
    ApproxReport { rho, witness, per_player }
}

fn player_within(game: &CongestionGame, state: &State, loads: &[usize], u: usize, rho: &Factor) -> bool {
    let Factor::Finite(rho) = rho else { return true };
    let cost = game.player_cost_with_loads(state, loads, u);
    (0..game.strategies(u).len()).all(|k| cost <= rho * game.deviation_cost_with_loads(state, loads, u, k))
}

/// True when no player has a deviation improving her cost by more than `rho`.
pub fn is_approx_equilibrium(game: &CongestionGame, state: &State, rho: &Factor) -> bool {
    let loads = game.loads(state);
    rho >= &Factor::one() && (0..game.num_players()).all(|u| player_within(game, state, &loads, u, rho))
}

fn check_budget(game: &CongestionGame, budget: u128) -> Result<u128, VerifyError> {
    let total = game.state_count();
    if total > budget {
        return Err(VerifyError::BudgetExceeded { needed: total, budget });
    }
    Ok(total)
}

/// The `index`-th state in lexicographic order (last player varies fastest).
fn decode(game: &CongestionGame, mut index: u128) -> State {
    let mut choice = vec![0; game.num_players()];
    for u in (0..game.num_players()).rev() {
        let radix = game.strategies(u).len() as u128;
        choice[u] = (index % radix) as usize;
        index /= radix;
    }
    State::new(choice)
}

/// Advances to the lexicographic successor; false after the last state.
fn step(game: &CongestionGame, profile: &mut Profile<'_>) -> bool {
    for u in (0..game.num_players()).rev() {
        let k = profile.state().choice(u);
        if k + 1 < game.strategies(u).len() {
            profile.apply(u, k + 1);
            return true;
        }
        if k != 0 {
            profile.apply(u, 0);
        }
    }
    false
}

/// Splits `[0, total)` into contiguous chunks and folds each in parallel.
fn scan_chunks<T: Send>(
    game: &CongestionGame,
    total: u128,
    visit: impl Fn(u128, &Profile<'_>, &mut T) + Sync,
    init: impl Fn() -> T + Sync,
) -> Vec<T> {
    let chunks: u128 = total.clamp(1, 64);
    let size = total.div_ceil(chunks);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let start = c * size;
            let end = (start + size).min(total);
            if start >= end {
                return acc;
            }
            let mut profile = Profile::new(game, decode(game, start));
            let mut idx = start;
            loop {
                visit(idx, &profile, &mut acc);
                idx += 1;
                if idx >= end || !step(game, &mut profile) {
                    break;
                }
            }
            acc
        })
        .collect()
}

/// Global potential minimum; the lexicographically smallest argmin on ties.
pub fn brute_min_potential(game: &CongestionGame, budget: u128) -> Result<(State, Rational), VerifyError> {
    let total = check_budget(game, budget)?;
    let parts = scan_chunks(
        game,
        total,
        |idx, profile, best: &mut Option<(u128, Rational)>| {
            let phi = profile.potential();
            if best.as_ref().is_none_or(|(_, b)| phi < *b) {
                *best = Some((idx, phi));
            }
        },
        || None,
    );
    let (idx, phi) =
        parts.into_iter().flatten().min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0))).expect("at least one state");
    Ok((decode(game, idx), phi))
}

/// Every state whose approximation factor is at most `rho`, in lexicographic order.
pub fn enumerate_equilibria(game: &CongestionGame, rho: &Factor, budget: u128) -> Result<Vec<State>, VerifyError> {
    let total = check_budget(game, budget)?;
    if *rho < Factor::one() {
        return Ok(Vec::new());
    }
    let parts = scan_chunks(
        game,
        total,
        |_, profile, found: &mut Vec<State>| {
            let ok = (0..game.num_players()).all(|u| player_within(game, profile.state(), profile.loads(), u, rho));
            if ok {
                found.push(profile.state().clone());
            }
        },
        Vec::new,
    );
    Ok(parts.into_iter().flatten().collect())
}

/// Exact equilibria by backtracking: a player is checked as soon as every
/// player sharing a resource with any of her strategies is assigned. When
/// all latencies are non-decreasing, assigned players are also pruned early
/// if even the most crowded completion of a deviation beats the least
/// crowded completion of their current strategy.
/// `node_budget` bounds the number of partial assignments explored.
pub fn search_equilibria(game: &CongestionGame, rho: &Factor, node_budget: u128) -> Result<Vec<State>, VerifyError> {
    let n = game.num_players();
    if *rho < Factor::one() {
        return Ok(Vec::new());
    }
    // players touching each resource through any strategy
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); game.num_resources()];
    let mut footprint: Vec<Vec<usize>> = Vec::with_capacity(n);
    for u in 0..n {
        let mut es: Vec<usize> = game.strategies(u).iter().flatten().copied().collect();
        es.sort_unstable();
        es.dedup();
        for &e in &es {
            touching[e].push(u);
        }
        footprint.push(es);
    }
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut nb: Vec<usize> = footprint[u].iter().flat_map(|&e| touching[e].iter().copied()).collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect();

    // greedy order: most already-placed neighbours first
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&u| !placed[u])
            .max_by_key(|&u| (neighbours[u].iter().filter(|&&v| placed[v]).count(), std::cmp::Reverse(u)))
            .expect("an unplaced player");
        placed[next] = true;
        order.push(next);
    }
    let mut position = vec![0; n];
    for (i, &u) in order.iter().enumerate() {
        position[u] = i;
    }
    // ready[t]: players whose neighbourhood is fully assigned once order[..=t] is
    let mut ready: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ready_at = vec![0; n];
    for u in 0..n {
        let t = neighbours[u].iter().map(|&v| position[v]).max().unwrap_or(position[u]).max(position[u]);
        ready[t].push(u);
        ready_at[u] = t;
    }

    let table = IntegerCostTable::new(game);
    let monotone = (0..game.num_resources()).all(|e| (1..n).all(|x| table.at(e, x) <= table.at(e, x + 1)));
    let (num, den) = match rho {
        Factor::Finite(r) => (r.numer().clone(), r.denom().clone()),
        Factor::Infinite => (BigInt::one(), BigInt::zero()),
    };

    struct Search<'a> {
        game: &'a CongestionGame,
        table: IntegerCostTable,
        num: BigInt,
        den: BigInt,
        monotone: bool,
        order: Vec<usize>,
        ready: Vec<Vec<usize>>,
        ready_at: Vec<usize>,
        position: Vec<usize>,
        neighbours: Vec<Vec<usize>>,
        footprint: Vec<Vec<usize>>,
        state: State,
        loads: Vec<usize>,
        pending: Vec<usize>,
        nodes: u128,
        budget: u128,
        found: Vec<State>,
    }

    impl Search<'_> {
        fn cost(&self, s: &[usize], load: impl Fn(usize) -> usize) -> BigInt {
            s.iter().map(|&e| self.table.at(e, load(e).clamp(1, self.game.num_players()))).sum()
        }

        /// `v` beats `rho` against some deviation in the fully assigned neighbourhood.
        fn unstable_exact(&self, v: usize) -> bool {
            if self.den.is_zero() {
                return false;
            }
            let own = self.game.chosen(&self.state, v);
            let c = self.cost(own, |e| self.loads[e]);
            (0..self.game.strategies(v).len()).any(|k| {
                let alt = self
                    .cost(self.game.strategy(v, k), |e| self.loads[e] + 1 - usize::from(own.binary_search(&e).is_ok()));
                &c * &self.den > &self.num * alt
            })
        }

        /// `v` deviates in every completion of the current partial state.
        fn unstable_bound(&self, v: usize) -> bool {
            if self.den.is_zero() {
                return false;
            }
            let own = self.game.chosen(&self.state, v);
            let lo = self.cost(own, |e| self.loads[e]);
            (0..self.game.strategies(v).len()).any(|k| {
                let hi = self.cost(self.game.strategy(v, k), |e| {
                    self.loads[e] + self.pending[e] + 1 - usize::from(own.binary_search(&e).is_ok())
                });
                &lo * &self.den > &self.num * hi
            })
        }

        fn go(&mut self, depth: usize) -> Result<(), VerifyError> {
            if depth == self.order.len() {
                self.found.push(self.state.clone());
                return Ok(());
            }
            let u = self.order[depth];
            for &e in &self.footprint[u] {
                self.pending[e] -= 1;
            }
            let mut res = Ok(());
            for k in 0..self.game.strategies(u).len() {
                self.nodes += 1;
                if self.nodes > self.budget {
                    res = Err(VerifyError::BudgetExceeded { needed: self.nodes, budget: self.budget });
                    break;
                }
                self.state.0[u] = k;
                for &e in self.game.strategy(u, k) {
                    self.loads[e] += 1;
                }
                let mut ok = self.ready[depth].iter().all(|&v| !self.unstable_exact(v));
                if ok && self.monotone {
                    ok = self.neighbours[u]
                        .iter()
                        .filter(|&&v| self.position[v] <= depth && self.ready_at[v] > depth)
                        .all(|&v| !self.unstable_bound(v));
                }
                let r = if ok { self.go(depth + 1) } else { Ok(()) };
                for &e in self.game.strategy(u, k) {
                    self.loads[e] -= 1;
                }
                if r.is_err() {
                    res = r;
                    break;
                }
            }
            self.state.0[u] = 0;
            for &e in &self.footprint[u] {
                self.pending[e] += 1;
            }
            res
        }
    }

    let pending = touching.iter().map(Vec::len).collect();
    let mut search = Search {
        game,
        table,
        num,
        den,
        monotone,
        order,
        ready,
        ready_at,
        position,
        neighbours,
        footprint,
        state: State::new(vec![0; n]),
        loads: vec![0; game.num_resources()],
        pending,
        nodes: 0,
        budget: node_budget,
        found: Vec::new(),
    };
    search.go(0)?;
    let mut found = search.found;
    found.sort_by(|a, b| a.as_slice().cmp(b.as_slice()));
    Ok(found)
}

/// Largest `Φ(S)/Φ(S*)` over exact equilibria `S` (`None` if there are none).
pub fn equilibrium_potential_ratio(game: &CongestionGame, budget: u128) -> Result<Option<Factor>, VerifyError> {
    let (_, min) = brute_min_potential(game, budget)?;
    let eqs = enumerate_equilibria(game, &Factor::one(), budget)?;
    Ok(eqs.iter().map(|s| Factor::ratio(&game.potential(s), &min)).max())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub property: String,
    pub instance: serde_json::Value,
    pub state: State,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub trials: usize,
    pub violations: Vec<Counterexample>,
}

impl PropertyCheck {
    fn record(
        &mut self,
        ok: bool,
        game: &CongestionGame,
        property: &str,
        state: &State,
        detail: impl FnOnce() -> String,
    ) {
        self.trials += 1;
        if !ok {
            self.violations.push(Counterexample {
                property: property.to_string(),
                instance: serde_json::from_str(&game.to_json()).expect("instance json"),
                state: state.clone(),
                detail: detail(),
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rosenthal: PropertyCheck,
    pub sandwich: PropertyCheck,
    pub subadditivity: PropertyCheck,
    /// Potential at `q`-approximate states against `2q/(2-q)` times the minimum;
    /// for degree 2 and above the ratio is only recorded.
    pub ratio: PropertyCheck,
    #[serde(with = "rational::serde_str")]
    pub q: Rational,
    pub max_ratio: Option<Factor>,
}

impl AuditReport {
    pub fn violation_count(&self) -> usize {
        [&self.rosenthal, &self.sandwich, &self.subadditivity, &self.ratio].iter().map(|c| c.violations.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn random_state(game: &CongestionGame, rng: &mut impl Rng) -> State {
    State::new((0..game.num_players()).map(|u| rng.gen_range(0..game.strategies(u).len())).collect())
}

/// Sampled checks of the potential identities; the ratio check enumerates
/// the state space once and so respects `budget`.
pub fn audit_identities(
    game: &CongestionGame,
    seed: u64,
    trials: usize,
    budget: u128,
) -> Result<AuditReport, VerifyError> {
    if game.mode() != Mode::Standard {
        return Err(VerifyError::NotStandard);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = game.num_players();
    let mut rosenthal = PropertyCheck::default();
    let mut sandwich = PropertyCheck::default();
    let mut subadditivity = PropertyCheck::default();

    for _ in 0..trials {
        let s = random_state(game, &mut rng);
        let u = rng.gen_range(0..n);
        let k = rng.gen_range(0..game.strategies(u).len());
        let t = s.with(u, k);
        let d_phi = game.potential(&t) - game.potential(&s);
        let d_cost = game.player_cost(&t, u) - game.player_cost(&s, u);
        rosenthal.record(d_phi == d_cost, game, "rosenthal", &s, || {
            format!("player {u} to {k}: dPhi={} dCost={}", rational::format(&d_phi), rational::format(&d_cost))
        });

        let m = aggregate_metrics(game, &s);
        sandwich.record(m.sandwich_holds(), game, "sandwich", &s, || {
            format!(
                "latency_sum={} potential={} total_cost={}",
                rational::format(&m.latency_sum),
                rational::format(&m.potential),
                rational::format(&m.total_cost)
            )
        });

        let mut players: Vec<usize> = (0..n).collect();
        players.shuffle(&mut rng);
        let cut = rng.gen_range(0..=n);
        let (f, rest) = players.split_at(cut);
        let phi = game.potential(&s);
        let phi_f = SubgameView::new(game, f, &s).potential(&s);
        let phi_rest = SubgameView::new(game, rest, &s).potential(&s);
        let ok = phi <= &phi_f + &phi_rest && phi >= phi_f;
        subadditivity.record(ok, game, "subadditivity", &s, || {
            format!(
                "F={f:?}: Phi={} Phi_F={} Phi_rest={}",
                rational::format(&phi),
                rational::format(&phi_f),
                rational::format(&phi_rest)
            )
        });
    }

    let epsilon = ratio(1, 10);
    let q = Rational::one() + &epsilon;
    let theta = int(2) * &q / (int(2) - &q);
    let linear = game.degree() <= 1;
    let mut check = PropertyCheck::default();
    let mut max_ratio: Option<Factor> = None;
    if trials > 0 {
        let (_, min) = brute_min_potential(game, budget)?;
        for _ in 0..trials {
            let start = random_state(game, &mut rng);
            let trace = epsilon_br_dynamics(game, start, &epsilon, usize::MAX, PlayerOrder::RoundRobin)?;
            let end = trace.final_state();
            let phi = game.potential(end);
            let r = Factor::ratio(&phi, &min);
            let ok = !linear || phi <= &theta * &min;
            check.record(ok, game, "potential-ratio", end, || {
                format!(
                    "Phi={} min={} theta={}",
                    rational::format(&phi),
                    rational::format(&min),
                    rational::format(&theta)
                )
            });
            if max_ratio.as_ref().is_none_or(|m| r > *m) {
                max_ratio = Some(r);
            }
        }
    }
    Ok(AuditReport { rosenthal, sandwich, subadditivity, ratio: check, q, max_ratio })
}

/// Hill climb over small linear games for a large `Φ(S)/Φ(S*)` at an exact
/// equilibrium `S`. Returns the best game found and its ratio.
pub fn search_high_ratio(
    seed: u64,
    players: usize,
    resources: usize,
    max_strategies: usize,
    iterations: usize,
) -> (CongestionGame, Rational) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs: Vec<[i64; 2]> = (0..resources).map(|_| [rng.gen_range(0..9), rng.gen_range(0..9)]).collect();
    let random_strategy = |rng: &mut ChaCha8Rng| {
        let size = rng.gen_range(1..=2.min(resources));
        rand::seq::index::sample(rng, resources, size).into_vec()
    };
    let mut strategies: Vec<Vec<Vec<usize>>> = (0..players)
        .map(|_| (0..rng.gen_range(2..=max_strategies)).map(|_| random_strategy(&mut rng)).collect())
        .collect();
    let build = |coeffs: &[[i64; 2]], strategies: &[Vec<Vec<usize>>]| {
        let latencies = coeffs.iter().map(|[a, b]| LatencyFunction::affine(int(*a), int(*b))).collect();
        CongestionGame::new(Mode::Standard, latencies, strategies.to_vec()).expect("valid game")
    };
    let score = |g: &CongestionGame| match equilibrium_potential_ratio(g, DEFAULT_BUDGET) {
        Ok(Some(Factor::Finite(r))) => r,
        _ => Rational::zero(),
    };
    let mut game = build(&coeffs, &strategies);
    let mut best = score(&game);
    for _ in 0..iterations {
        let (mut c2, mut s2) = (coeffs.clone(), strategies.clone());
        if rng.gen_bool(0.5) {
            let e = rng.gen_range(0..resources);
            let i = rng.gen_range(0..2);
            c2[e][i] = (c2[e][i] + [-3, -2, -1, 1, 2, 3][rng.gen_range(0..6)]).max(0);
        } else {
            let u = rng.gen_range(0..players);
            let s = random_strategy(&mut rng);
            if s2[u].len() < max_strategies && rng.gen_bool(0.5) {
                s2[u].push(s);
            } else {
                let k = rng.gen_range(0..s2[u].len());
                s2[u][k] = s;
            }
        }
        let candidate = build(&c2, &s2);
        let r = score(&candidate);
        if r >= best {
            best = r;
            game = candidate;
            coeffs = c2;
            strategies = s2;
        }
    }
    (game, best)
}
