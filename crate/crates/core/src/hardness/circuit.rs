//! NAND circuits: the Flip local-search problem and the comparison circuits
//! fed to the game builder.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HardnessError;

/// Fan-in of a Flip gate: an input bit or an earlier gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ref {
    X(usize),
    G(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipGate {
    pub a: Ref,
    pub b: Ref,
}

/// A NAND circuit with `inputs` bits; `outputs[i]` is the gate producing `y_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipInstance {
    pub inputs: usize,
    pub gates: Vec<FlipGate>,
    pub outputs: Vec<usize>,
}

impl FlipInstance {
    pub fn new(inputs: usize, gates: Vec<FlipGate>, outputs: Vec<usize>) -> Result<Self, HardnessError> {
        let c = Self { inputs, gates, outputs };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HardnessError> {
        let bad = |m: String| Err(HardnessError::Circuit(m));
        if self.inputs == 0 {
            return bad("circuit needs at least one input".into());
        }
        if self.outputs.is_empty() || self.outputs.len() > 127 {
            return bad(format!("output count {} outside 1..=127", self.outputs.len()));
        }
        for (k, g) in self.gates.iter().enumerate() {
            for r in [g.a, g.b] {
                match r {
                    Ref::X(i) if i >= self.inputs => return bad(format!("gate {k} reads missing input {i}")),
                    Ref::G(j) if j >= k => return bad(format!("gate {k} reads gate {j}, which is not earlier")),
                    _ => {}
                }
            }
        }
        if let Some(o) = self.outputs.iter().find(|&&o| o >= self.gates.len()) {
            return bad(format!("output refers to missing gate {o}"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HardnessError> {
        let c: Self = serde_json::from_str(text).map_err(|e| HardnessError::Circuit(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serialization cannot fail")
    }

    /// Output bits `y_1..y_m` for input `x`.
    pub fn evaluate(&self, x: &[bool]) -> Result<Vec<bool>, HardnessError> {
        if x.len() != self.inputs {
            return Err(HardnessError::Circuit(format!("expected {} input bits, got {}", self.inputs, x.len())));
        }
        let mut val = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let read = |r: Ref, val: &Vec<bool>| match r {
                Ref::X(i) => x[i],
                Ref::G(k) => val[k],
            };
            let v = !(read(g.a, &val) && read(g.b, &val));
            val.push(v);
        }
        Ok(self.outputs.iter().map(|&o| val[o]).collect())
    }
}

/// `Σ y_i 2^{i-1}`.
pub fn flip_objective(c: &FlipInstance, x: &[bool]) -> Result<u128, HardnessError> {
    Ok(c.evaluate(x)?.iter().enumerate().filter(|(_, &y)| y).map(|(i, _)| 1u128 << i).sum())
}

/// Whether no single-bit flip lowers the objective, with the first improving
/// neighbour otherwise.
pub fn flip_is_local_min(c: &FlipInstance, x: &[bool]) -> Result<(bool, Option<Vec<bool>>), HardnessError> {
    let here = flip_objective(c, x)?;
    for i in 0..x.len() {
        let mut y = x.to_vec();
        y[i] = !y[i];
        if flip_objective(c, &y)? < here {
            return Ok((false, Some(y)));
        }
    }
    Ok((true, None))
}

/// A random circuit whose gates read inputs or earlier gates uniformly.
pub fn random_flip_instance(seed: u64, inputs: usize, gates: usize, outputs: usize) -> FlipInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |k: usize, rng: &mut ChaCha8Rng| {
        let r = rng.gen_range(0..inputs + k);
        if r < inputs {
            Ref::X(r)
        } else {
            Ref::G(r - inputs)
        }
    };
    let gs = (0..gates).map(|k| FlipGate { a: pick(k, &mut rng), b: pick(k, &mut rng) }).collect();
    let mut outs: Vec<usize> = rand::seq::index::sample(&mut rng, gates, outputs.min(gates)).into_vec();
    outs.sort_unstable();
    FlipInstance { inputs, gates: gs, outputs: outs }
}

/// Wire of a comparison circuit: input bit `x_i`, current output bit `y_j`
/// or an earlier gate of the same circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wire {
    X(usize),
    Y(usize),
    G(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub a: Wire,
    pub b: Wire,
}

/// A single-output NAND circuit over `x` and `y` wires, gates in topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub gates: Vec<Gate>,
    pub output: usize,
}

impl Circuit {
    pub fn validate(&self, n: usize, m: usize) -> Result<(), HardnessError> {
        let bad = |msg: String| Err(HardnessError::Circuit(msg));
        if self.output >= self.gates.len() {
            return bad(format!("output gate {} missing", self.output));
        }
        for (k, g) in self.gates.iter().enumerate() {
            for w in [g.a, g.b] {
                match w {
                    Wire::X(i) if i >= n => return bad(format!("gate {k} reads x_{i} but n = {n}")),
                    Wire::Y(j) if j >= m => return bad(format!("gate {k} reads y_{j} but m = {m}")),
                    Wire::G(t) if t >= k => return bad(format!("gate {k} reads gate {t}, which is not earlier")),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[bool], y: &[bool]) -> bool {
        let mut val: Vec<bool> = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let read = |w: Wire, val: &Vec<bool>| match w {
                Wire::X(i) => x[i],
                Wire::Y(j) => y[j],
                Wire::G(t) => val[t],
            };
            let v = !(read(g.a, &val) && read(g.b, &val));
            val.push(v);
        }
        val[self.output]
    }
}

/// Circuits driving the game: `s0` and one `S^j_{i,b}` per (j, i, b),
/// stored at [`CircuitBundle::index`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitBundle {
    pub inputs: usize,
    pub outputs: usize,
    pub s0: Circuit,
    pub flips: Vec<Circuit>,
}

impl CircuitBundle {
    /// Position of `S^j_{i,b}` in `flips` (all indices 0-based).
    pub fn index(&self, j: usize, i: usize, b: usize) -> usize {
        (j * self.inputs + i) * 2 + b
    }

    pub fn flip(&self, j: usize, i: usize, b: usize) -> &Circuit {
        &self.flips[self.index(j, i, b)]
    }

    pub fn validate(&self) -> Result<(), HardnessError> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(HardnessError::Circuit("bundle needs at least one input and one output".into()));
        }
        let want = 2 * self.inputs * self.outputs;
        if self.flips.len() != want {
            return Err(HardnessError::MissingCircuit(format!(
                "expected {want} flip circuits, found {}",
                self.flips.len()
            )));
        }
        self.s0.validate(self.inputs, self.outputs)?;
        for c in &self.flips {
            c.validate(self.inputs, self.outputs)?;
        }
        Ok(())
    }

    pub fn total_gates(&self) -> usize {
        self.s0.gates.len() + self.flips.iter().map(|c| c.gates.len()).sum::<usize>()
    }

    pub fn from_json(text: &str) -> Result<Self, HardnessError> {
        let b: Self = serde_json::from_str(text).map_err(|e| HardnessError::Circuit(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Const(bool),
    W(Wire),
}

/// Hash-consed NAND builder with constant folding.
#[derive(Default)]
struct Builder {
    gates: Vec<Gate>,
    seen: HashMap<(Wire, Wire), usize>,
}

impl Builder {
    fn nand(&mut self, a: Node, b: Node) -> Node {
        match (a, b) {
            (Node::Const(false), _) | (_, Node::Const(false)) => Node::Const(true),
            (Node::Const(true), Node::Const(true)) => Node::Const(false),
            (Node::Const(true), o) | (o, Node::Const(true)) => self.not(o),
            (Node::W(x), Node::W(y)) => {
                let key = if x <= y { (x, y) } else { (y, x) };
                if let Some(&k) = self.seen.get(&key) {
                    return Node::W(Wire::G(k));
                }
                let k = self.gates.len();
                self.gates.push(Gate { a: key.0, b: key.1 });
                self.seen.insert(key, k);
                Node::W(Wire::G(k))
            }
        }
    }

    fn not(&mut self, a: Node) -> Node {
        match a {
            Node::Const(v) => Node::Const(!v),
            Node::W(Wire::G(k)) if self.gates[k].a == self.gates[k].b => Node::W(self.gates[k].a),
            w => self.nand(w, w),
        }
    }

    fn and(&mut self, a: Node, b: Node) -> Node {
        let t = self.nand(a, b);
        self.not(t)
    }

    fn or(&mut self, a: Node, b: Node) -> Node {
        let (na, nb) = (self.not(a), self.not(b));
        self.nand(na, nb)
    }

    /// `a ≤ b` on bits, i.e. `¬a ∨ b`.
    fn le(&mut self, a: Node, b: Node) -> Node {
        let nb = self.not(b);
        self.nand(a, nb)
    }

    /// Gates of `C` with `x_i` optionally fixed to a constant.
    fn embed(&mut self, c: &FlipInstance, fixed: Option<(usize, bool)>) -> Vec<Node> {
        let input = |i: usize| match fixed {
            Some((f, v)) if f == i => Node::Const(v),
            _ => Node::W(Wire::X(i)),
        };
        let mut val: Vec<Node> = Vec::with_capacity(c.gates.len());
        for g in &c.gates {
            let read = |r: Ref, val: &Vec<Node>| match r {
                Ref::X(i) => input(i),
                Ref::G(k) => val[k],
            };
            let (a, b) = (read(g.a, &val), read(g.b, &val));
            let v = self.nand(a, b);
            val.push(v);
        }
        c.outputs.iter().map(|&o| val[o]).collect()
    }

    /// Keeps only gates reachable from `out`, which always ends up a gate.
    fn finish(mut self, out: Node) -> Circuit {
        let out = match out {
            Node::W(Wire::G(k)) => k,
            Node::W(w) => {
                // a bare wire w becomes NAND(¬w, ¬w)
                let nw = self.not(Node::W(w));
                let Node::W(Wire::G(_)) = nw else { unreachable!() };
                let k = self.gates.len();
                self.gates.push(Gate { a: wire_of(nw), b: wire_of(nw) });
                k
            }
            Node::Const(v) => {
                // x_0 NAND ¬x_0 = 1, and its negation is 0
                let x = Node::W(Wire::X(0));
                let nx = self.not(x);
                let k1 = self.gates.len();
                self.gates.push(Gate { a: Wire::X(0), b: wire_of(nx) });
                if v {
                    k1
                } else {
                    let k0 = self.gates.len();
                    self.gates.push(Gate { a: Wire::G(k1), b: Wire::G(k1) });
                    k0
                }
            }
        };
        let mut keep = vec![false; self.gates.len()];
        let mut stack = vec![out];
        while let Some(k) = stack.pop() {
            if keep[k] {
                continue;
            }
            keep[k] = true;
            for w in [self.gates[k].a, self.gates[k].b] {
                if let Wire::G(t) = w {
                    stack.push(t);
                }
            }
        }
        let mut remap = vec![usize::MAX; self.gates.len()];
        let mut gates = Vec::new();
        for (k, g) in self.gates.iter().enumerate() {
            if !keep[k] {
                continue;
            }
            let fix = |w: Wire| match w {
                Wire::G(t) => Wire::G(remap[t]),
                o => o,
            };
            let gate = Gate { a: fix(g.a), b: fix(g.b) };
            remap[k] = gates.len();
            gates.push(gate);
        }
        Circuit { output: remap[out], gates }
    }
}

fn wire_of(n: Node) -> Wire {
    match n {
        Node::W(w) => w,
        Node::Const(_) => unreachable!("constants are folded before wiring"),
    }
}

/// One reading of the comparison circuits (the normative source is a
/// user-supplied bundle):
///
/// * `S_0(x, y) = [val(C(x)) ≤ val(y)]`, comparing from the top bit down;
/// * `S^j_{i,b}(x, y) = y_j ∧ ¬C(x')_j ∧ ∀ j' > j: C(x')_{j'} ≤ y_{j'}` with
///   `x' = x` with bit `i` set to `b`.
///
/// `S^j_{i,b}` is 1 exactly when setting `x_i = b` yields an objective below
/// `val(y)` whose highest differing bit is `j`.
pub fn derive_subcircuits(c: &FlipInstance) -> Result<CircuitBundle, HardnessError> {
    c.validate()?;
    let (n, m) = (c.inputs, c.outputs.len());
    let ys: Vec<Node> = (0..m).map(|j| Node::W(Wire::Y(j))).collect();

    let mut b0 = Builder::default();
    let cx = b0.embed(c, None);
    let mut le = Node::Const(true);
    for j in 0..m {
        // le over bits 0..=j: strictly below at j, or at most at j and le below
        let at_most = b0.le(cx[j], ys[j]);
        le = if j == 0 {
            at_most
        } else {
            let nc = b0.not(cx[j]);
            let lt = b0.and(nc, ys[j]);
            let keep = b0.and(at_most, le);
            b0.or(lt, keep)
        };
    }
    let s0 = b0.finish(le);

    let mut flips = Vec::with_capacity(2 * n * m);
    for j in 0..m {
        for i in 0..n {
            for b in [false, true] {
                let mut bl = Builder::default();
                let cf = bl.embed(c, Some((i, b)));
                let ncj = bl.not(cf[j]);
                let mut acc = bl.and(ys[j], ncj);
                for jj in j + 1..m {
                    let l = bl.le(cf[jj], ys[jj]);
                    acc = bl.and(acc, l);
                }
                flips.push(bl.finish(acc));
            }
        }
    }
    let bundle = CircuitBundle { inputs: n, outputs: m, s0, flips };
    bundle.validate()?;
    Ok(bundle)
}
