//! Assembles the gadget game from a circuit bundle.
//!
//! Players are laid out as Controller, `G_1..G_K`, `LockG_1..LockG_K`,
//! `X_1..X_n`, `Y_1..Y_m`. Gates get global numbers `1..=K`, circuit by
//! circuit (`S_0` first, then the flip circuits in bundle order), each
//! circuit numbered in reverse topological order so that a gate's inputs
//! carry larger numbers than the gate itself.
//!
//! A resource named by more than two players is split into one copy per
//! non-owner player (`name[Player]`); the owner's strategies hold every copy.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{pair_to_linear, Circuit, CircuitBundle, FlipInstance, GadgetParams, HardnessError, LatencyPair, Wire};
use crate::game::{CongestionGame, Labels, Mode, State};
use crate::rational::{self, int, Rational};
use crate::verify::{is_approx_equilibrium, search_equilibria, Factor, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feeder {
    X(usize),
    Y(usize),
    /// Global gate number, 1-based.
    G(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    A,
    B,
}

impl Side {
    fn tag(self) -> char {
        match self {
            Side::A => 'a',
            Side::B => 'b',
        }
    }
}

struct GateInfo {
    circuit: usize,
    a: Feeder,
    b: Feeder,
    output: bool,
}

/// Player and strategy positions of a built game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub inputs: usize,
    pub outputs: usize,
    pub gates: usize,
    /// Global gate numbers (1-based) of `S_0`.
    pub s0_gates: Vec<usize>,
}

impl Layout {
    pub const CONTROLLER: usize = 0;
    pub const LOCK_S0: usize = 0;

    pub fn gate_player(&self, k: usize) -> usize {
        k
    }

    pub fn lock_player(&self, k: usize) -> usize {
        self.gates + k
    }

    pub fn x_player(&self, i: usize) -> usize {
        1 + 2 * self.gates + i
    }

    pub fn y_player(&self, j: usize) -> usize {
        1 + 2 * self.gates + self.inputs + j
    }

    pub fn player_count(&self) -> usize {
        1 + 2 * self.gates + self.inputs + self.outputs
    }

    /// Bits held by the X players (`One` is strategy 0).
    pub fn read_inputs(&self, state: &State) -> Vec<bool> {
        (0..self.inputs).map(|i| state.choice(self.x_player(i)) == 0).collect()
    }

    /// Y values for players on One or Zero; `None` for any other strategy.
    pub fn read_outputs(&self, state: &State) -> Vec<Option<bool>> {
        let last = 1 + 4 * self.inputs;
        (0..self.outputs)
            .map(|j| match state.choice(self.y_player(j)) {
                0 => Some(true),
                k if k == last => Some(false),
                _ => None,
            })
            .collect()
    }

    pub fn controller_on_lock_s0(&self, state: &State) -> bool {
        state.choice(Self::CONTROLLER) == Self::LOCK_S0
    }
}

#[derive(Debug, Clone)]
pub struct FlipGame {
    pub game: CongestionGame,
    pub layout: Layout,
    pub params: GadgetParams,
}

#[derive(Default)]
struct Draft {
    order: Vec<String>,
    pairs: HashMap<String, (LatencyPair, Option<usize>)>,
    players: Vec<String>,
    strategies: Vec<Vec<(String, Vec<String>)>>,
}

impl Draft {
    fn res(&mut self, name: String, pair: LatencyPair, owner: Option<usize>) -> String {
        match self.pairs.get(&name) {
            Some((p, o)) => debug_assert!(p == &pair && o == &owner, "resource {name} declared inconsistently"),
            None => {
                self.order.push(name.clone());
                self.pairs.insert(name.clone(), (pair, owner));
            }
        }
        name
    }

    fn player(&mut self, name: String, strategies: Vec<(String, Vec<String>)>) {
        self.players.push(name);
        self.strategies.push(strategies);
    }

    fn finish(self) -> Result<CongestionGame, HardnessError> {
        let mut mentions: HashMap<&str, Vec<usize>> = HashMap::new();
        for (u, strategies) in self.strategies.iter().enumerate() {
            for (_, s) in strategies {
                for r in s {
                    let v = mentions.entry(r.as_str()).or_default();
                    if !v.contains(&u) {
                        v.push(u);
                    }
                }
            }
        }
        let split = |name: &str| {
            let ps = &mentions[name];
            (ps.len() > 2).then(|| {
                let owner = self.pairs[name]
                    .1
                    .unwrap_or_else(|| panic!("resource {name} is shared by {ps:?} but has no owner"));
                (owner, ps.iter().copied().filter(|&p| p != owner).collect::<Vec<usize>>())
            })
        };

        let mut index: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut latencies = Vec::new();
        let mut copies: HashMap<&str, (usize, Vec<usize>)> = HashMap::new();
        for name in &self.order {
            if !mentions.contains_key(name.as_str()) {
                continue;
            }
            let f = pair_to_linear(&self.pairs[name].0);
            match split(name) {
                None => {
                    index.insert(name.clone(), names.len());
                    names.push(name.clone());
                    latencies.push(f);
                }
                Some((owner, others)) => {
                    for &p in &others {
                        let copy = format!("{name}[{}]", self.players[p]);
                        index.insert(copy.clone(), names.len());
                        names.push(copy);
                        latencies.push(f.clone());
                    }
                    copies.insert(name.as_str(), (owner, others));
                }
            }
        }

        let mut players = Vec::with_capacity(self.players.len());
        let mut strategy_labels = Vec::with_capacity(self.players.len());
        for (u, strategies) in self.strategies.iter().enumerate() {
            let mut list = Vec::with_capacity(strategies.len());
            let mut labels = Vec::with_capacity(strategies.len());
            for (label, s) in strategies {
                let mut ids = Vec::new();
                for r in s {
                    match copies.get(r.as_str()) {
                        None => ids.push(index[r]),
                        Some((owner, others)) if *owner == u => {
                            ids.extend(others.iter().map(|&p| index[&format!("{r}[{}]", self.players[p])]))
                        }
                        Some(_) => ids.push(index[&format!("{r}[{}]", self.players[u])]),
                    }
                }
                list.push(ids);
                labels.push(format!("{}.{label}", self.players[u]));
            }
            players.push(list);
            strategy_labels.push(labels);
        }
        let game = CongestionGame::new(Mode::Hardness, latencies, players)?;
        Ok(game.with_labels(Labels { players: self.players, strategies: strategy_labels, resources: names }))
    }
}

fn feeder_name(f: Feeder) -> String {
    match f {
        Feeder::X(i) => format!("X_{}", i + 1),
        Feeder::Y(j) => format!("Y_{}", j + 1),
        Feeder::G(k) => format!("G_{k}"),
    }
}

fn number_gates(bundle: &CircuitBundle) -> (Vec<GateInfo>, Vec<usize>) {
    let circuits: Vec<&Circuit> = std::iter::once(&bundle.s0).chain(bundle.flips.iter()).collect();
    let mut info = Vec::with_capacity(bundle.total_gates());
    let mut s0 = Vec::new();
    let mut offset = 0;
    for (c, circuit) in circuits.iter().enumerate() {
        let len = circuit.gates.len();
        let global = |local: usize| offset + len - local;
        let feeder = |w: Wire| match w {
            Wire::X(i) => Feeder::X(i),
            Wire::Y(j) => Feeder::Y(j),
            Wire::G(t) => Feeder::G(global(t)),
        };
        for local in (0..len).rev() {
            let g = circuit.gates[local];
            info.push(GateInfo { circuit: c, a: feeder(g.a), b: feeder(g.b), output: local == circuit.output });
            if c == 0 {
                s0.push(global(local));
            }
        }
        offset += len;
    }
    (info, s0)
}

/// Builds the gadget game for `bundle`. Labels name every player, strategy
/// and resource after the gadget it belongs to.
pub fn build_flip_game(bundle: &CircuitBundle, params: &GadgetParams) -> Result<FlipGame, HardnessError> {
    bundle.validate()?;
    params.validate()?;
    let (n, m) = (bundle.inputs, bundle.outputs);
    let gates = bundle.total_gates();
    if params.gates != gates {
        return Err(HardnessError::Params(format!(
            "parameters were derived for {} gates, bundle has {gates}",
            params.gates
        )));
    }
    let (info, s0_gates) = number_gates(bundle);
    let layout = Layout { inputs: n, outputs: m, gates, s0_gates: s0_gates.clone() };
    let gate = |k: usize| &info[k - 1];
    let flip_gates: Vec<usize> = (1..=gates).filter(|&k| gate(k).circuit > 0).collect();
    let circuit_gates = |c: usize| (1..=gates).filter(|&k| info[k - 1].circuit == c).collect::<Vec<_>>();

    // readers[f]: gates reading feeder f on a side
    let mut readers: HashMap<String, Vec<(usize, Side)>> = HashMap::new();
    for k in 1..=gates {
        for (side, f) in [(Side::A, gate(k).a), (Side::B, gate(k).b)] {
            readers.entry(feeder_name(f)).or_default().push((k, side));
        }
    }

    let (alpha, beta, gamma, big_m) = (&params.alpha, &params.beta, &params.gamma, &params.big_m);
    let p = rational::pow;
    let zero_to = |b: Rational| LatencyPair::new(int(0), b);
    let constant = LatencyPair::constant;
    let bit = |k: usize| zero_to(p(alpha, 2 * k as i32));
    let lock3 = || zero_to(p(big_m, 3));
    let m2 = || zero_to(p(big_m, 2));
    let gamma_j = |j: usize| p(gamma, j as i32 + 1);

    let controller = Layout::CONTROLLER;
    let x_owner = |i: usize| Some(layout.x_player(i));
    let y_owner = |j: usize| Some(layout.y_player(j));
    let lock_owner = |k: usize| Some(layout.lock_player(k));

    let mut d = Draft::default();
    let trigger_lock =
        |d: &mut Draft, k: usize| d.res(format!("TriggerLockG_{k}"), zero_to(p(alpha, 2)), lock_owner(k));
    let trigger_unlock = |d: &mut Draft, k: usize| {
        d.res(format!("TriggerUnlockG_{k}"), LatencyPair::new(alpha.clone(), p(alpha, 3)), None)
    };
    let lock_gate_ctrl = |d: &mut Draft, k: usize| d.res(format!("LockGate_{k}(Controller)"), m2(), None);
    let lock_gate_by =
        |d: &mut Draft, k: usize, t: usize| d.res(format!("LockGate_{k}(LockG_{t})"), zero_to(big_m.clone()), None);
    let block_s0 = |d: &mut Draft| d.res("BlockS_0".into(), m2(), Some(controller));
    let block_s = |d: &mut Draft, j: usize, i: usize, b: usize| {
        d.res(format!("BlockS^{}_{{{},{b}}}", j + 1, i + 1), m2(), Some(controller))
    };
    let block_y = |d: &mut Draft, j: usize| d.res(format!("BlockY_{}", j + 1), m2(), None);
    let trigger_ctrl =
        |d: &mut Draft| d.res("TriggerController".into(), LatencyPair::new(int(1), p(beta, 2)), Some(controller));
    let trigger_y = |d: &mut Draft, j: usize| {
        d.res(format!("TriggerY_{}", j + 1), zero_to(int(5) * p(alpha, 5) * gamma_j(j)), y_owner(j))
    };
    let trigger_done_y =
        |d: &mut Draft, j: usize| d.res(format!("TriggerDoneY_{}", j + 1), zero_to(p(big_m, 4)), y_owner(j));
    let reset_done_y =
        |d: &mut Draft, j: usize| d.res(format!("ResetDoneY_{}", j + 1), zero_to(p(big_m, 5)), y_owner(j));
    let trigger_x = |d: &mut Draft, i: usize, b: usize| {
        d.res(format!("TriggerX_{{{},{b}}}", i + 1), zero_to(alpha * beta), x_owner(i))
    };
    let block_x = |d: &mut Draft, i: usize, b: usize| {
        d.res(format!("BlockX_{{{},{b}}}", i + 1), zero_to(p(big_m, 4)), x_owner(i))
    };
    // Bit and Lock resources a feeder holds while showing `value` to every reader
    let feeder_bits = |d: &mut Draft, f: Feeder, value: u8| -> Vec<String> {
        let who = feeder_name(f);
        let mut out = Vec::new();
        for &(t, side) in readers.get(&who).map(Vec::as_slice).unwrap_or(&[]) {
            let s = side.tag();
            out.push(d.res(format!("Bit{value}{s}_{t}"), bit(t), None));
            out.push(d.res(format!("Lock{value}{s}_{t}({who})"), lock3(), None));
        }
        out
    };

    // Controller
    let mut strategies = Vec::new();
    let mut s = vec![d.res("Lock_0".into(), constant(beta.clone()), None), block_s0(&mut d)];
    for &k in &flip_gates {
        s.push(trigger_lock(&mut d, k));
    }
    for &k in &s0_gates {
        s.push(lock_gate_ctrl(&mut d, k));
    }
    strategies.push(("LockS_0".to_string(), s));
    for j in 0..m {
        for i in 0..n {
            for b in 0..2 {
                let mut s = vec![trigger_ctrl(&mut d), block_s(&mut d, j, i, b), block_y(&mut d, j)];
                for k in circuit_gates(1 + bundle.index(j, i, b)) {
                    s.push(lock_gate_ctrl(&mut d, k));
                }
                strategies.push((format!("LockS^{}_{{{},{b}}}", j + 1, i + 1), s));
            }
        }
    }
    let mut s = vec![d.res("Reset1".into(), constant(int(2) * big_m), None)];
    for j in 0..m {
        s.push(trigger_y(&mut d, j));
    }
    for k in 1..=gates {
        s.push(trigger_unlock(&mut d, k));
    }
    strategies.push(("Reset1".to_string(), s));
    let mut s = vec![d.res("Reset2".into(), constant(big_m.clone()), None)];
    for j in 0..m {
        s.push(reset_done_y(&mut d, j));
    }
    for &k in &s0_gates {
        s.push(trigger_lock(&mut d, k));
    }
    strategies.push(("Reset2".to_string(), s));
    d.player("Controller".into(), strategies);

    // gate players
    for k in 1..=gates {
        let me = Feeder::G(k);
        let who = feeder_name(me);
        let one = |d: &mut Draft, side: char| {
            let mut s = vec![
                d.res(format!("Bit1{side}_{k}"), bit(k), None),
                d.res(format!("Lock1{side}_{k}({who})"), lock3(), None),
            ];
            s.extend(feeder_bits(d, me, 1));
            s
        };
        let one_a = one(&mut d, 'a');
        let one_b = one(&mut d, 'b');
        let mut zero = vec![
            d.res(format!("Bit0a_{k}"), bit(k), None),
            d.res(format!("Bit0b_{k}"), bit(k), None),
            d.res(format!("Lock0a_{k}({who})"), lock3(), None),
            d.res(format!("Lock0b_{k}({who})"), lock3(), None),
        ];
        zero.extend(feeder_bits(&mut d, me, 0));
        d.player(who, vec![("OneA".into(), one_a), ("OneB".into(), one_b), ("Zero".into(), zero)]);
    }

    // lock players
    for k in 1..=gates {
        let g = gate(k);
        let own = feeder_name(Feeder::G(k));
        let mut strategies = Vec::new();
        for (va, vb) in [(0u8, 0u8), (1, 0), (0, 1), (1, 1)] {
            let out = u8::from(!(va == 1 && vb == 1));
            if g.output && out == 0 {
                continue;
            }
            let mut s = vec![trigger_unlock(&mut d, k)];
            let blocked = 1 - out;
            s.push(d.res(format!("Lock{blocked}a_{k}({own})"), lock3(), None));
            s.push(d.res(format!("Lock{blocked}b_{k}({own})"), lock3(), None));
            for (side, f, v) in [(Side::A, g.a, va), (Side::B, g.b, vb)] {
                s.push(d.res(format!("Lock{}{}_{k}({})", 1 - v, side.tag(), feeder_name(f)), lock3(), None));
                if let Feeder::G(t) = f {
                    s.push(lock_gate_by(&mut d, t, k));
                }
            }
            strategies.push((format!("Lock{va}{vb}{out}"), s));
        }
        let mut unlock = vec![lock_gate_ctrl(&mut d, k), trigger_lock(&mut d, k)];
        for &(t, _) in readers.get(&own).map(Vec::as_slice).unwrap_or(&[]) {
            unlock.push(lock_gate_by(&mut d, k, t));
        }
        strategies.push(("Unlock".into(), unlock));
        d.player(format!("LockG_{k}"), strategies);
    }

    // input players
    for i in 0..n {
        let mut one = vec![trigger_x(&mut d, i, 0), block_x(&mut d, i, 1)];
        one.extend(feeder_bits(&mut d, Feeder::X(i), 1));
        let mut zero = vec![trigger_x(&mut d, i, 1), block_x(&mut d, i, 0)];
        zero.extend(feeder_bits(&mut d, Feeder::X(i), 0));
        d.player(format!("X_{}", i + 1), vec![("One".into(), one), ("Zero".into(), zero)]);
    }

    // output players
    for j in 0..m {
        let me = Feeder::Y(j);
        let mut strategies = Vec::new();
        let mut one = vec![d.res(format!("One_{}", j + 1), constant(int(4) * p(alpha, 4) * gamma_j(j)), None)];
        one.extend(feeder_bits(&mut d, me, 1));
        strategies.push(("One".to_string(), one));
        let other_blocks = |d: &mut Draft, i: usize, b: usize| {
            let mut out = Vec::new();
            for jj in 0..m {
                for ii in 0..n {
                    for bb in 0..2 {
                        if (jj, ii, bb) != (j, i, b) {
                            out.push(block_s(d, jj, ii, bb));
                        }
                    }
                }
            }
            out
        };
        for i in 0..n {
            for b in 0..2 {
                let mut s = vec![
                    d.res(format!("Change_{}", j + 1), constant(int(3) * p(alpha, 3) * gamma_j(j)), None),
                    block_s0(&mut d),
                    trigger_x(&mut d, i, b),
                    reset_done_y(&mut d, j),
                ];
                for jj in 0..=j {
                    s.push(trigger_y(&mut d, jj));
                }
                s.extend(other_blocks(&mut d, i, b));
                s.extend(feeder_bits(&mut d, me, 1));
                strategies.push((format!("Change^{}_{{{},{b}}}", j + 1, i + 1), s));
            }
        }
        for i in 0..n {
            for b in 0..2 {
                let mut s = vec![
                    d.res(format!("Check_{}", j + 1), constant(int(2) * p(alpha, 2) * gamma_j(j)), None),
                    trigger_y(&mut d, j),
                    block_x(&mut d, i, 1 - b),
                    trigger_ctrl(&mut d),
                    reset_done_y(&mut d, j),
                ];
                for jj in 0..j {
                    s.push(trigger_done_y(&mut d, jj));
                }
                s.extend(other_blocks(&mut d, i, b));
                s.extend(feeder_bits(&mut d, me, 0));
                for &k in &s0_gates {
                    s.push(trigger_lock(&mut d, k));
                }
                strategies.push((format!("Check^{}_{{{},{b}}}", j + 1, i + 1), s));
            }
        }
        let mut zero =
            vec![trigger_y(&mut d, j), trigger_done_y(&mut d, j), block_y(&mut d, j), reset_done_y(&mut d, j)];
        zero.extend(feeder_bits(&mut d, me, 0));
        strategies.push(("Zero".to_string(), zero));
        d.player(format!("Y_{}", j + 1), strategies);
    }

    let game = d.finish()?;
    debug_assert_eq!(game.num_players(), layout.player_count());
    Ok(FlipGame { game, layout, params: params.clone() })
}

/// Outcome of matching the exact equilibria of a built game against the
/// local minima of its Flip circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumCheck {
    pub equilibria: usize,
    /// Equilibria with the Controller on a strategy other than `LockS_0`.
    pub off_lock_s0: usize,
    /// Input vectors read from equilibria that are not local minima.
    pub not_local_min: Vec<Vec<bool>>,
}

impl EquilibriumCheck {
    /// Equilibria exist and every one reads a local minimum.
    pub fn ok(&self) -> bool {
        self.equilibria > 0 && self.not_local_min.is_empty()
    }
}

/// Finds all exact equilibria of `fg` by pruned search, re-verifies each one
/// and checks that it reads a local minimum of `circuit`.
pub fn check_equilibria(
    fg: &FlipGame,
    circuit: &FlipInstance,
    node_budget: u128,
) -> Result<EquilibriumCheck, VerifyError> {
    let eqs = search_equilibria(&fg.game, &Factor::one(), node_budget)?;
    let mut check = EquilibriumCheck { equilibria: eqs.len(), off_lock_s0: 0, not_local_min: Vec::new() };
    for s in &eqs {
        assert!(is_approx_equilibrium(&fg.game, s, &Factor::one()), "search returned a non-equilibrium");
        if !fg.layout.controller_on_lock_s0(s) {
            check.off_lock_s0 += 1;
        }
        let x = fg.layout.read_inputs(s);
        let local = super::flip_is_local_min(circuit, &x).map(|r| r.0).unwrap_or(false);
        if !local && !check.not_local_min.contains(&x) {
            check.not_local_min.push(x);
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::super::{derive_subcircuits, structural_check, FlipGate, Gate, Ref};
    use super::*;

    fn inverter() -> FlipInstance {
        FlipInstance::new(1, vec![FlipGate { a: Ref::X(0), b: Ref::X(0) }], vec![0]).unwrap()
    }

    fn one_gate_bundle() -> CircuitBundle {
        let g = |a, b| Circuit { gates: vec![Gate { a, b }], output: 0 };
        CircuitBundle {
            inputs: 1,
            outputs: 1,
            s0: g(Wire::X(0), Wire::Y(0)),
            flips: vec![g(Wire::Y(0), Wire::Y(0)), g(Wire::X(0), Wire::Y(0))],
        }
    }

    fn build(bundle: &CircuitBundle) -> FlipGame {
        let params = GadgetParams::for_bundle(bundle, &int(2)).unwrap();
        build_flip_game(bundle, &params).unwrap()
    }

    fn resource(fg: &FlipGame, name: &str) -> usize {
        fg.game
            .labels()
            .unwrap()
            .resources
            .iter()
            .position(|r| r == name)
            .unwrap_or_else(|| panic!("no resource {name}"))
    }

    fn pair_of(fg: &FlipGame, name: &str) -> (Rational, Rational) {
        let f = fg.game.latency(resource(fg, name));
        (f.eval(1).unwrap(), f.eval(2).unwrap())
    }

    #[test]
    fn counts_and_sharing() {
        let bundle = one_gate_bundle();
        let fg = build(&bundle);
        assert_eq!(fg.game.num_players(), 1 + 2 * 3 + 1 + 1);
        assert_eq!(fg.game.strategies(0).len(), 1 + 2 + 2);
        assert_eq!(fg.game.strategies(fg.layout.y_player(0)).len(), 1 + 2 + 2 + 1);
        let report = structural_check(&fg.game);
        assert!(report.pass, "{:?}", report.sharing_violations);

        let derived = derive_subcircuits(&random_like()).unwrap();
        let fg = build(&derived);
        assert_eq!(fg.game.num_players(), 1 + 2 * derived.total_gates() + 2 + 1);
        assert!(structural_check(&fg.game).pass);
    }

    fn random_like() -> FlipInstance {
        super::super::random_flip_instance(3, 2, 2, 1)
    }

    #[test]
    fn table_latencies() {
        let fg = build(&one_gate_bundle());
        let pr = &fg.params;
        let (a, b, g, m) = (&pr.alpha, &pr.beta, &pr.gamma, &pr.big_m);
        let p = rational::pow;
        assert_eq!(pair_of(&fg, "Lock_0"), (b.clone(), b.clone()));
        assert_eq!(pair_of(&fg, "TriggerController"), (int(1), p(b, 2)));
        assert_eq!(pair_of(&fg, "One_1"), (int(4) * p(a, 4) * g, int(4) * p(a, 4) * g));
        assert_eq!(pair_of(&fg, "Change_1").0, int(3) * p(a, 3) * g);
        assert_eq!(pair_of(&fg, "Check_1").0, int(2) * p(a, 2) * g);
        assert_eq!(pair_of(&fg, "TriggerY_1"), (int(0), int(5) * p(a, 5) * g));
        assert_eq!(pair_of(&fg, "Reset1"), (int(2) * m, int(2) * m));
        assert_eq!(pair_of(&fg, "Reset2"), (m.clone(), m.clone()));
        assert_eq!(pair_of(&fg, "BlockS_0"), (int(0), p(m, 2)));
        assert_eq!(pair_of(&fg, "ResetDoneY_1"), (int(0), p(m, 5)));
        assert_eq!(pair_of(&fg, "TriggerUnlockG_2"), (a.clone(), p(a, 3)));
        // S_0 is gate 1, the two flip circuits are gates 2 and 3
        assert_eq!(pair_of(&fg, "TriggerLockG_3"), (int(0), p(a, 2)));
        assert_eq!(pair_of(&fg, "TriggerLockG_1[Controller]"), (int(0), p(a, 2)));
        assert_eq!(pair_of(&fg, "Bit1a_3"), (int(0), p(a, 6)));
        assert_eq!(pair_of(&fg, "Lock0b_1(Y_1)"), (int(0), p(m, 3)));
        assert_eq!(pair_of(&fg, "LockGate_2(Controller)"), (int(0), p(m, 2)));
    }

    #[test]
    fn labels_and_strategy_order() {
        let fg = build(&one_gate_bundle());
        let l = fg.game.labels().unwrap();
        assert_eq!(l.players[0], "Controller");
        assert_eq!(
            l.strategies[0],
            [
                "Controller.LockS_0",
                "Controller.LockS^1_{1,0}",
                "Controller.LockS^1_{1,1}",
                "Controller.Reset1",
                "Controller.Reset2"
            ]
        );
        assert_eq!(l.strategies[1], ["G_1.OneA", "G_1.OneB", "G_1.Zero"]);
        // output gates only lock at output 1
        assert_eq!(l.strategies[4], ["LockG_1.Lock001", "LockG_1.Lock101", "LockG_1.Lock011", "LockG_1.Unlock"]);
        assert_eq!(l.strategies[7], ["X_1.One", "X_1.Zero"]);
        assert_eq!(
            l.strategies[8],
            [
                "Y_1.One",
                "Y_1.Change^1_{1,0}",
                "Y_1.Change^1_{1,1}",
                "Y_1.Check^1_{1,0}",
                "Y_1.Check^1_{1,1}",
                "Y_1.Zero"
            ]
        );
    }

    #[test]
    fn inverter_bundle_size() {
        let b = derive_subcircuits(&inverter()).unwrap();
        assert_eq!(b.s0.gates.len(), 3);
        assert_eq!(b.flips.iter().map(|c| c.gates.len()).collect::<Vec<_>>(), [3, 2]);
        assert_eq!(build(&b).game.num_players(), 1 + 2 * 8 + 1 + 1);
    }

    #[test]
    fn deterministic_build() {
        let bundle = derive_subcircuits(&random_like()).unwrap();
        assert_eq!(build(&bundle).game.to_json(), build(&bundle).game.to_json());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut bundle = one_gate_bundle();
        let params = GadgetParams::for_bundle(&bundle, &int(2)).unwrap();
        bundle.flips.pop();
        assert!(matches!(build_flip_game(&bundle, &params), Err(HardnessError::MissingCircuit(_))));
        let bundle = derive_subcircuits(&random_like()).unwrap();
        assert!(matches!(build_flip_game(&bundle, &params), Err(HardnessError::Params(_))));
    }

    #[test]
    fn inverter_equilibria_are_local_minima() {
        let c = inverter();
        let fg = build(&derive_subcircuits(&c).unwrap());
        let check = check_equilibria(&fg, &c, 50_000_000).unwrap();
        assert!(check.ok(), "{check:?}");
        // x = 1 is the only local minimum
        assert_eq!(check.equilibria, 24);
        // states stuck with Y_1 on Change and the Controller on the flip lock
        assert_eq!(check.off_lock_s0, 4);
    }

    #[test]
    fn two_gate_circuit_has_spurious_equilibria() {
        // y = x_1 AND x_2; the S_0 lock chain can deadlock around a wrong gate
        let c = FlipInstance::new(
            2,
            vec![FlipGate { a: Ref::X(1), b: Ref::X(0) }, FlipGate { a: Ref::G(0), b: Ref::G(0) }],
            vec![1],
        )
        .unwrap();
        let fg = build(&derive_subcircuits(&c).unwrap());
        let check = check_equilibria(&fg, &c, 200_000_000).unwrap();
        assert_eq!(check.not_local_min, vec![vec![true, true]]);
    }
}
