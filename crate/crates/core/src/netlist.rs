//! Gate-level elaboration, timing and area, JSON and Verilog output.

use std::cell::RefCell;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::cpa::PrefixGraph;
use crate::ct_assign::StageAssignment;
use crate::ct_wire::{propagate, WiringPlan};
use crate::ppg::{BitSource, PartialProductMatrix};
use crate::tech::{AreaWeights, GateDelays, GateKind};
use crate::{Error, Result};

pub const SCHEMA: &str = "macgen-netlist/1";

pub type NetId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Zero,
    One,
    Net(NetId),
}

impl Signal {
    pub fn constant(v: bool) -> Self {
        if v {
            Signal::One
        } else {
            Signal::Zero
        }
    }

    pub fn as_const(self) -> Option<bool> {
        match self {
            Signal::Zero => Some(false),
            Signal::One => Some(true),
            Signal::Net(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Ppg,
    Tree,
    Cpa,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub name: String,
    pub kind: GateKind,
    pub inputs: Vec<Signal>,
    pub output: NetId,
    pub group: Group,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Port {
    pub name: String,
    pub bits: Vec<Signal>,
}

/// What the netlist computes, for the verifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Function {
    /// `p = a * b`.
    Multiplier { width: usize },
    /// `p = a * b + c`.
    Mac { width: usize, acc_width: usize },
    /// `s = a + b`.
    Adder { width: usize },
    /// `r0 + r1 = sum of x[i] << columns[i]`.
    TreeSum { columns: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Netlist {
    pub name: String,
    pub function: Function,
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
    pub net_names: Vec<String>,
    /// In creation order, which is topological for elaborated netlists.
    pub gates: Vec<Gate>,
}

#[derive(Clone, Debug)]
pub struct ElabOptions {
    pub name: String,
    /// Fold constants and merge identical gates.
    pub fold: bool,
}

impl Default for ElabOptions {
    fn default() -> Self {
        ElabOptions { name: "macgen".into(), fold: true }
    }
}

struct Builder {
    nets: Vec<String>,
    used: HashMap<String, usize>,
    gates: Vec<Gate>,
    inputs: Vec<Port>,
    memo: HashMap<(GateKind, Vec<Signal>), Signal>,
    fold: bool,
    group: Group,
}

impl Builder {
    fn new(fold: bool) -> Self {
        Builder {
            nets: Vec::new(),
            used: HashMap::new(),
            gates: Vec::new(),
            inputs: Vec::new(),
            memo: HashMap::new(),
            fold,
            group: Group::Ppg,
        }
    }

    fn net(&mut self, hint: &str) -> NetId {
        let n = self.used.entry(hint.to_string()).or_insert(0);
        let name = if *n == 0 { hint.to_string() } else { format!("{hint}_{n}") };
        *n += 1;
        self.nets.push(name);
        self.nets.len() - 1
    }

    fn input(&mut self, name: &str, width: usize) -> Vec<Signal> {
        let bits: Vec<Signal> = (0..width).map(|i| Signal::Net(self.net(&format!("{name}[{i}]")))).collect();
        self.inputs.push(Port { name: name.into(), bits: bits.clone() });
        bits
    }

    fn inv(&mut self, a: Signal, hint: &str) -> Signal {
        self.gate(GateKind::Inv, &[a], hint)
    }

    /// Emits `kind(ins)`, simplifying constants when folding is on. Inverters
    /// and identical gates are always shared.
    fn gate(&mut self, kind: GateKind, ins: &[Signal], hint: &str) -> Signal {
        use GateKind::*;
        if self.fold {
            if let Some(s) = self.simplify(kind, ins, hint) {
                return s;
            }
        }
        let mut key_ins = ins.to_vec();
        if matches!(kind, And | Nand | Nor | Xor | Xnor) {
            key_ins.sort();
        } else if matches!(kind, Oai21 | Aoi21) {
            key_ins[..2].sort();
        }
        let key = (kind, key_ins);
        if self.fold || kind == Inv {
            if let Some(&s) = self.memo.get(&key) {
                return s;
            }
        }
        let out = self.net(hint);
        self.gates.push(Gate {
            name: format!("g_{}", self.nets[out]),
            kind,
            inputs: ins.to_vec(),
            output: out,
            group: self.group,
        });
        let s = Signal::Net(out);
        self.memo.insert(key, s);
        s
    }

    fn simplify(&mut self, kind: GateKind, ins: &[Signal], hint: &str) -> Option<Signal> {
        use GateKind::*;
        let c: Vec<Option<bool>> = ins.iter().map(|s| s.as_const()).collect();
        if c.iter().all(Option::is_some) {
            let v: Vec<bool> = c.iter().map(|x| x.expect("constant")).collect();
            return Some(Signal::constant(kind.eval_bool(&v)));
        }
        let (a, b) = (ins[0], ins.get(1).copied().unwrap_or(Signal::Zero));
        // Two-input gates with one constant input, constant first.
        let two = |s: &mut Self, k: GateKind| -> Option<Signal> {
            let (k_val, other) = match (c[0], c[1]) {
                (Some(v), None) => (v, b),
                (None, Some(v)) => (v, a),
                _ => {
                    if a == b {
                        return match k {
                            And => Some(a),
                            Nand | Nor => Some(s.inv(a, hint)),
                            Xor => Some(Signal::Zero),
                            Xnor => Some(Signal::One),
                            _ => None,
                        };
                    }
                    return None;
                }
            };
            Some(match (k, k_val) {
                (And, false) => Signal::Zero,
                (And, true) => other,
                (Nand, false) => Signal::One,
                (Nand, true) => s.inv(other, hint),
                (Nor, true) => Signal::Zero,
                (Nor, false) => s.inv(other, hint),
                (Xor, false) | (Xnor, true) => other,
                (Xor, true) | (Xnor, false) => s.inv(other, hint),
                _ => unreachable!("two-input kinds only"),
            })
        };
        match kind {
            Inv => None,
            And | Nand | Nor | Xor | Xnor => two(self, kind),
            Aoi21 => {
                // !((a1 & a2) | b)
                let (a1, a2, bb) = (ins[0], ins[1], ins[2]);
                match (c[0], c[1], c[2]) {
                    (_, _, Some(true)) => Some(Signal::Zero),
                    (_, _, Some(false)) => Some(self.gate(Nand, &[a1, a2], hint)),
                    (Some(false), _, _) | (_, Some(false), _) => Some(self.inv(bb, hint)),
                    (Some(true), _, _) => Some(self.gate(Nor, &[a2, bb], hint)),
                    (_, Some(true), _) => Some(self.gate(Nor, &[a1, bb], hint)),
                    _ => None,
                }
            }
            Oai21 => {
                // !((a1 | a2) & b)
                let (a1, a2, bb) = (ins[0], ins[1], ins[2]);
                match (c[0], c[1], c[2]) {
                    (_, _, Some(false)) => Some(Signal::One),
                    (_, _, Some(true)) => Some(self.gate(Nor, &[a1, a2], hint)),
                    (Some(true), _, _) | (_, Some(true), _) => Some(self.inv(bb, hint)),
                    (Some(false), _, _) => Some(self.gate(Nand, &[a2, bb], hint)),
                    (_, Some(false), _) => Some(self.gate(Nand, &[a1, bb], hint)),
                    _ => None,
                }
            }
        }
    }

    fn full_adder(&mut self, [a, b, c]: [Signal; 3], tag: &str) -> (Signal, Signal) {
        let xn = self.gate(GateKind::Xnor, &[a, b], &format!("{tag}_xn"));
        let s = self.gate(GateKind::Xnor, &[xn, c], &format!("{tag}_s"));
        let nd = self.gate(GateKind::Nand, &[a, b], &format!("{tag}_nd"));
        let cn = self.inv(c, &format!("{tag}_cn"));
        let co = self.gate(GateKind::Oai21, &[xn, cn, nd], &format!("{tag}_co"));
        (s, co)
    }

    fn half_adder(&mut self, [a, b]: [Signal; 2], tag: &str) -> (Signal, Signal) {
        let s = self.gate(GateKind::Xor, &[a, b], &format!("{tag}_s"));
        let c = self.gate(GateKind::And, &[a, b], &format!("{tag}_c"));
        (s, c)
    }

    /// Drops gates that no output depends on and renumbers nets.
    fn finish(self, name: String, function: Function, outputs: Vec<Port>) -> Netlist {
        let mut driver = vec![None; self.nets.len()];
        for (k, g) in self.gates.iter().enumerate() {
            driver[g.output] = Some(k);
        }
        let mut live = vec![false; self.gates.len()];
        let mut stack: Vec<NetId> = outputs
            .iter()
            .flat_map(|p| p.bits.iter())
            .filter_map(|s| if let Signal::Net(n) = s { Some(*n) } else { None })
            .collect();
        while let Some(n) = stack.pop() {
            if let Some(k) = driver[n] {
                if !std::mem::replace(&mut live[k], true) {
                    stack.extend(self.gates[k].inputs.iter().filter_map(|s| match s {
                        Signal::Net(m) => Some(*m),
                        _ => None,
                    }));
                }
            }
        }
        let mut keep_net = vec![false; self.nets.len()];
        for p in &self.inputs {
            for s in &p.bits {
                if let Signal::Net(n) = s {
                    keep_net[*n] = true;
                }
            }
        }
        for (k, g) in self.gates.iter().enumerate() {
            if live[k] {
                keep_net[g.output] = true;
            }
        }
        let mut new_id = vec![usize::MAX; self.nets.len()];
        let mut names = Vec::new();
        for (n, name) in self.nets.into_iter().enumerate() {
            if keep_net[n] {
                new_id[n] = names.len();
                names.push(name);
            }
        }
        let map = |s: Signal| match s {
            Signal::Net(n) => Signal::Net(new_id[n]),
            c => c,
        };
        let gates = self
            .gates
            .into_iter()
            .zip(live)
            .filter(|(_, l)| *l)
            .map(|(g, _)| Gate { inputs: g.inputs.into_iter().map(map).collect(), output: new_id[g.output], ..g })
            .collect();
        let remap = |ports: Vec<Port>| -> Vec<Port> {
            ports.into_iter().map(|p| Port { bits: p.bits.into_iter().map(map).collect(), ..p }).collect()
        };
        Netlist { name, function, inputs: remap(self.inputs), outputs: remap(outputs), net_names: names, gates }
    }
}

/// Builds the tree over `inputs` (per column, in matrix order).
fn build_tree(b: &RefCell<Builder>, a: &StageAssignment, w: &WiringPlan, inputs: Vec<Vec<Signal>>) -> Vec<Vec<Signal>> {
    b.borrow_mut().group = Group::Tree;
    propagate(
        a,
        w,
        inputs,
        |i, j, k, ins| b.borrow_mut().full_adder(ins, &format!("ct{}_c{j}_fa{k}", i + 1)),
        |i, j, k, ins| b.borrow_mut().half_adder(ins, &format!("ct{}_c{j}_ha{k}", i + 1)),
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pol {
    Pos,
    Neg,
}

struct CpaBuilder<'a> {
    b: &'a mut Builder,
    g: &'a PrefixGraph,
    depth: Vec<usize>,
    gg: Vec<Option<(Signal, Pol)>>,
    pp: Vec<Option<(Signal, Pol)>>,
}

impl CpaBuilder<'_> {
    /// Output polarity of a node: prefix levels alternate inverting cells.
    fn pol(&self, v: usize) -> Pol {
        if self.depth[v] % 2 == 1 {
            Pol::Neg
        } else {
            Pol::Pos
        }
    }

    fn want(&mut self, s: (Signal, Pol), pol: Pol, hint: &str) -> Signal {
        if s.1 == pol {
            s.0
        } else {
            self.b.inv(s.0, hint)
        }
    }

    fn label(&self, v: usize) -> String {
        let n = self.g.nodes[v];
        format!("cpa_{}_{}", n.msb, n.lsb)
    }

    fn p(&mut self, v: usize) -> (Signal, Pol) {
        if let Some(s) = self.pp[v] {
            return s;
        }
        let n = self.g.nodes[v];
        let (t, u) = (n.tf.expect("inputs are preset"), n.ntf.expect("inputs are preset"));
        let need = if self.pol(v) == Pol::Neg { Pol::Pos } else { Pol::Neg };
        let (pt, pu) = (self.p(t), self.p(u));
        let lt = format!("{}_pn", self.label(t));
        let lu = format!("{}_pn", self.label(u));
        let (pt, pu) = (self.want(pt, need, &lt), self.want(pu, need, &lu));
        let kind = if need == Pol::Pos { GateKind::Nand } else { GateKind::Nor };
        let hint = format!("{}_p", self.label(v));
        let s = (self.b.gate(kind, &[pt, pu], &hint), self.pol(v));
        self.pp[v] = Some(s);
        s
    }

    fn g(&mut self, v: usize) -> (Signal, Pol) {
        if let Some(s) = self.gg[v] {
            return s;
        }
        let n = self.g.nodes[v];
        let (t, u) = (n.tf.expect("inputs are preset"), n.ntf.expect("inputs are preset"));
        let need = if self.pol(v) == Pol::Neg { Pol::Pos } else { Pol::Neg };
        let (gt, gu, pt) = (self.g(t), self.g(u), self.p(t));
        let (lt, lu, lp) = (format!("{}_gn", self.label(t)), format!("{}_gn", self.label(u)), format!("{}_pn", self.label(t)));
        let (gt, gu, pt) = (self.want(gt, need, &lt), self.want(gu, need, &lu), self.want(pt, need, &lp));
        // Pos inputs: !(pt & gu | gt); Neg inputs: !((!pt | !gu) & !gt).
        let kind = if need == Pol::Pos { GateKind::Aoi21 } else { GateKind::Oai21 };
        let hint = format!("{}_g", self.label(v));
        let s = (self.b.gate(kind, &[pt, gu, gt], &hint), self.pol(v));
        self.gg[v] = Some(s);
        s
    }
}

/// Prefix adder over rows `x`, `y`; returns the sum bits and the carry out.
fn build_cpa(b: &mut Builder, g: &PrefixGraph, x: &[Signal], y: &[Signal]) -> (Vec<Signal>, Signal) {
    b.group = Group::Cpa;
    let w = g.width;
    let mut c = CpaBuilder { depth: g.depths(), gg: vec![None; g.len()], pp: vec![None; g.len()], b, g };
    let mut p_bits = Vec::with_capacity(w);
    for i in 0..w {
        let gi = c.b.gate(GateKind::And, &[x[i], y[i]], &format!("cpa_g{i}"));
        let pi = c.b.gate(GateKind::Xor, &[x[i], y[i]], &format!("cpa_p{i}"));
        c.gg[i] = Some((gi, Pol::Pos));
        c.pp[i] = Some((pi, Pol::Pos));
        p_bits.push(pi);
    }
    let mut sums = Vec::with_capacity(w);
    for i in 0..w {
        if i == 0 {
            sums.push(p_bits[0]);
            continue;
        }
        let (carry, pol) = c.g(g.outputs[i - 1]);
        let kind = if pol == Pol::Pos { GateKind::Xor } else { GateKind::Xnor };
        sums.push(c.b.gate(kind, &[p_bits[i], carry], &format!("sum{i}")));
    }
    let top = c.g(g.outputs[w - 1]);
    let cout = c.want(top, Pol::Pos, "cout");
    (sums, cout)
}

fn check_plan(ppm: &PartialProductMatrix, a: &StageAssignment, w: &WiringPlan) -> Result<()> {
    let mut h = ppm.heights();
    h.resize(a.columns, 0);
    if h != a.pp[0] || ppm.columns.len() > a.columns {
        return Err(Error::Consistency(format!("matrix heights {h:?} do not match the assignment {:?}", a.pp[0])));
    }
    w.validate(a)
}

/// Multiplier or MAC: AND array, compressor tree, prefix adder.
pub fn elaborate(
    ppm: &PartialProductMatrix,
    a: &StageAssignment,
    w: &WiringPlan,
    g: &PrefixGraph,
    opts: &ElabOptions,
) -> Result<Netlist> {
    check_plan(ppm, a, w)?;
    g.validate()?;
    let out_bits = ppm.result_bits();
    if g.width != out_bits {
        return Err(Error::Consistency(format!("prefix graph width {} for {out_bits} result bits", g.width)));
    }
    let b = RefCell::new(Builder::new(opts.fold));
    let (av, bv, cv) = {
        let mut bb = b.borrow_mut();
        let av = bb.input("a", ppm.width);
        let bv = bb.input("b", ppm.width);
        let cv = if ppm.acc_width > 0 { bb.input("c", ppm.acc_width) } else { Vec::new() };
        (av, bv, cv)
    };
    let mut cols: Vec<Vec<Signal>> = Vec::with_capacity(a.columns);
    {
        let mut bb = b.borrow_mut();
        bb.group = Group::Ppg;
        for col in &ppm.columns {
            cols.push(
                col.iter()
                    .map(|bit| match bit.source {
                        BitSource::Product { i, k } => bb.gate(GateKind::And, &[av[i], bv[k]], &bit.name),
                        BitSource::Acc { j } => cv[j],
                    })
                    .collect(),
            );
        }
    }
    let rows = build_tree(&b, a, w, cols);
    let mut bb = b.into_inner();
    let pick = |k: usize| -> Vec<Signal> {
        (0..out_bits).map(|j| rows.get(j).and_then(|c| c.get(k)).copied().unwrap_or(Signal::Zero)).collect()
    };
    let (sums, _) = build_cpa(&mut bb, g, &pick(0), &pick(1));
    let function = if ppm.acc_width > 0 {
        Function::Mac { width: ppm.width, acc_width: ppm.acc_width }
    } else {
        Function::Multiplier { width: ppm.width }
    };
    Ok(bb.finish(opts.name.clone(), function, vec![Port { name: "p".into(), bits: sums }]))
}

/// The compressor tree alone: input `x` holds the tree input bits column by
/// column, outputs `r0` and `r1` are the two result rows.
pub fn elaborate_tree(a: &StageAssignment, w: &WiringPlan, opts: &ElabOptions) -> Result<Netlist> {
    w.validate(a)?;
    let total: usize = a.pp[0].iter().sum();
    let b = RefCell::new(Builder::new(opts.fold));
    let x = b.borrow_mut().input("x", total);
    let mut columns = Vec::with_capacity(total);
    let mut cols = Vec::with_capacity(a.columns);
    let mut next = 0;
    for (j, &n) in a.pp[0].iter().enumerate() {
        cols.push(x[next..next + n].to_vec());
        columns.extend(std::iter::repeat_n(j, n));
        next += n;
    }
    let rows = build_tree(&b, a, w, cols);
    let row = |k: usize| Port {
        name: format!("r{k}"),
        bits: rows.iter().map(|c| c.get(k).copied().unwrap_or(Signal::Zero)).collect(),
    };
    let outputs = vec![row(0), row(1)];
    Ok(b.into_inner().finish(opts.name.clone(), Function::TreeSum { columns }, outputs))
}

/// Two-operand adder `s = a + b` over `g`, with the carry out as the top bit.
pub fn elaborate_adder(g: &PrefixGraph, opts: &ElabOptions) -> Result<Netlist> {
    g.validate()?;
    let mut b = Builder::new(opts.fold);
    let x = b.input("a", g.width);
    let y = b.input("b", g.width);
    let (mut sums, cout) = build_cpa(&mut b, g, &x, &y);
    sums.push(cout);
    Ok(b.finish(opts.name.clone(), Function::Adder { width: g.width }, vec![Port { name: "s".into(), bits: sums }]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub total: f64,
    pub gates: usize,
    pub by_group: BTreeMap<Group, f64>,
    /// Kind name to (count, area).
    pub by_kind: BTreeMap<String, (usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub max: f64,
    /// Arrival of every output bit, per output port.
    pub outputs: Vec<Vec<f64>>,
    /// Net names from a primary input (or constant) to the latest output.
    pub critical_path: Vec<String>,
}

impl Netlist {
    pub fn num_nets(&self) -> usize {
        self.net_names.len()
    }

    pub fn input_width(&self) -> usize {
        self.inputs.iter().map(|p| p.bits.len()).sum()
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.inputs.iter().chain(&self.outputs).find(|p| p.name == name)
    }

    /// Gate driving each net.
    pub fn drivers(&self) -> Vec<Option<usize>> {
        let mut d = vec![None; self.net_names.len()];
        for (k, g) in self.gates.iter().enumerate() {
            d[g.output] = Some(k);
        }
        d
    }

    /// Gate indices in dependency order; fails on a combinational loop or a
    /// net with several drivers.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let mut driver = vec![None; self.net_names.len()];
        for (k, g) in self.gates.iter().enumerate() {
            if driver[g.output].replace(k).is_some() {
                return Err(Error::Netlist(format!("net {} has several drivers", self.net_names[g.output])));
            }
        }
        let mut state = vec![0u8; self.gates.len()];
        let mut order = Vec::with_capacity(self.gates.len());
        for root in 0..self.gates.len() {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            state[root] = 1;
            while let Some(&mut (k, ref mut next)) = stack.last_mut() {
                let ins = &self.gates[k].inputs;
                if *next < ins.len() {
                    let s = ins[*next];
                    *next += 1;
                    if let Signal::Net(n) = s {
                        if let Some(d) = driver[n] {
                            match state[d] {
                                0 => {
                                    state[d] = 1;
                                    stack.push((d, 0));
                                }
                                1 => {
                                    let at = stack.iter().position(|&(g, _)| g == d).unwrap_or(0);
                                    let names =
                                        stack[at..].iter().map(|&(g, _)| self.net_names[self.gates[g].output].clone()).collect();
                                    return Err(Error::Cycle(names));
                                }
                                _ => {}
                            }
                        }
                    }
                } else {
                    state[k] = 2;
                    order.push(k);
                    stack.pop();
                }
            }
        }
        Ok(order)
    }

    pub fn fanouts(&self) -> Vec<usize> {
        let mut f = vec![0; self.net_names.len()];
        for g in &self.gates {
            for s in &g.inputs {
                if let Signal::Net(n) = s {
                    f[*n] += 1;
                }
            }
        }
        f
    }

    pub fn area(&self, w: &AreaWeights) -> AreaReport {
        let mut r = AreaReport { total: 0.0, gates: self.gates.len(), by_group: BTreeMap::new(), by_kind: BTreeMap::new() };
        for g in &self.gates {
            let a = w.get(g.kind);
            r.total += a;
            *r.by_group.entry(g.group).or_insert(0.0) += a;
            let e = r.by_kind.entry(g.kind.name().to_string()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += a;
        }
        r
    }

    /// Longest path with `intrinsic + load * fanout` gate delays. Input port
    /// bits arrive at the times in `arrivals` (missing ports or bits at 0).
    pub fn timing(&self, d: &GateDelays, arrivals: &BTreeMap<String, Vec<f64>>) -> Result<TimingReport> {
        let order = self.topo_order()?;
        let fan = self.fanouts();
        let mut at = vec![0.0f64; self.net_names.len()];
        let mut from: Vec<Option<NetId>> = vec![None; self.net_names.len()];
        for p in &self.inputs {
            let times = arrivals.get(&p.name);
            for (i, s) in p.bits.iter().enumerate() {
                if let Signal::Net(n) = s {
                    at[*n] = times.and_then(|t| t.get(i)).copied().unwrap_or(0.0);
                }
            }
        }
        for k in order {
            let g = &self.gates[k];
            let mut t = 0.0f64;
            let mut src = None;
            for s in &g.inputs {
                if let Signal::Net(n) = s {
                    if src.is_none() || at[*n] > t {
                        t = at[*n];
                        src = Some(*n);
                    }
                }
            }
            at[g.output] = t + d.delay(g.kind, fan[g.output]);
            from[g.output] = src;
        }
        let mut outputs = Vec::with_capacity(self.outputs.len());
        let mut worst: Option<(f64, NetId)> = None;
        for p in &self.outputs {
            outputs.push(
                p.bits
                    .iter()
                    .map(|s| match s {
                        Signal::Net(n) => {
                            if worst.is_none_or(|(t, _)| at[*n] > t) {
                                worst = Some((at[*n], *n));
                            }
                            at[*n]
                        }
                        _ => 0.0,
                    })
                    .collect(),
            );
        }
        let mut critical_path = Vec::new();
        let mut cur = worst.map(|w| w.1);
        while let Some(n) = cur {
            critical_path.push(self.net_names[n].clone());
            cur = from[n];
        }
        critical_path.reverse();
        Ok(TimingReport { max: worst.map_or(0.0, |w| w.0), outputs, critical_path })
    }

    /// Canonical structural fingerprint of every output bit: equal for
    /// netlists that differ only in names and gate order.
    pub fn structural_signature(&self) -> Result<Vec<Vec<u64>>> {
        let order = self.topo_order()?;
        let mut h = vec![0u64; self.net_names.len()];
        for (pi, p) in self.inputs.iter().enumerate() {
            for (i, s) in p.bits.iter().enumerate() {
                if let Signal::Net(n) = s {
                    h[*n] = hash_of(&("in", pi, i));
                }
            }
        }
        let sig = |h: &[u64], s: Signal| match s {
            Signal::Zero => 0,
            Signal::One => 1,
            Signal::Net(n) => h[n],
        };
        for k in order {
            let g = &self.gates[k];
            let mut ins: Vec<u64> = g.inputs.iter().map(|&s| sig(&h, s)).collect();
            match g.kind {
                GateKind::Oai21 | GateKind::Aoi21 => ins[..2].sort_unstable(),
                _ => ins.sort_unstable(),
            }
            h[g.output] = hash_of(&(g.kind.name(), ins));
        }
        Ok(self.outputs.iter().map(|p| p.bits.iter().map(|&s| sig(&h, s)).collect()).collect())
    }

    pub fn isomorphic(&self, other: &Netlist) -> Result<bool> {
        let shape = |n: &Netlist| n.inputs.iter().map(|p| p.bits.len()).collect::<Vec<_>>();
        Ok(shape(self) == shape(other)
            && self.gates.len() == other.gates.len()
            && self.structural_signature()? == other.structural_signature()?)
    }
}

fn hash_of<T: Hash>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

#[derive(Serialize, Deserialize)]
struct JsonPort {
    name: String,
    bits: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct JsonGate {
    name: String,
    kind: String,
    group: Group,
    inputs: Vec<String>,
    output: String,
}

#[derive(Serialize, Deserialize)]
struct JsonNetlist {
    schema: String,
    name: String,
    function: Function,
    inputs: Vec<JsonPort>,
    outputs: Vec<JsonPort>,
    gates: Vec<JsonGate>,
}

const ZERO: &str = "1'b0";
const ONE: &str = "1'b1";

impl Netlist {
    fn sig_name(&self, s: Signal) -> String {
        match s {
            Signal::Zero => ZERO.into(),
            Signal::One => ONE.into(),
            Signal::Net(n) => self.net_names[n].clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let port = |p: &Port| JsonPort { name: p.name.clone(), bits: p.bits.iter().map(|&s| self.sig_name(s)).collect() };
        let j = JsonNetlist {
            schema: SCHEMA.into(),
            name: self.name.clone(),
            function: self.function.clone(),
            inputs: self.inputs.iter().map(port).collect(),
            outputs: self.outputs.iter().map(port).collect(),
            gates: self
                .gates
                .iter()
                .map(|g| JsonGate {
                    name: g.name.clone(),
                    kind: g.kind.name().into(),
                    group: g.group,
                    inputs: g.inputs.iter().map(|&s| self.sig_name(s)).collect(),
                    output: self.net_names[g.output].clone(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&j)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Netlist> {
        let j: JsonNetlist = serde_json::from_str(text)?;
        if j.schema != SCHEMA {
            return Err(Error::Netlist(format!("unsupported schema {:?}", j.schema)));
        }
        let mut names: Vec<String> = Vec::new();
        let mut ids: HashMap<String, NetId> = HashMap::new();
        let mut declare = |n: &str, names: &mut Vec<String>| -> Result<NetId> {
            if n == ZERO || n == ONE || ids.contains_key(n) {
                return Err(Error::Netlist(format!("net {n:?} declared twice")));
            }
            ids.insert(n.to_string(), names.len());
            names.push(n.to_string());
            Ok(names.len() - 1)
        };
        let mut inputs = Vec::new();
        for p in &j.inputs {
            let bits = p.bits.iter().map(|b| declare(b, &mut names).map(Signal::Net)).collect::<Result<_>>()?;
            inputs.push(Port { name: p.name.clone(), bits });
        }
        let mut outs = Vec::with_capacity(j.gates.len());
        for g in &j.gates {
            outs.push(declare(&g.output, &mut names)?);
        }
        let lookup = |n: &str| -> Result<Signal> {
            match n {
                ZERO => Ok(Signal::Zero),
                ONE => Ok(Signal::One),
                _ => ids.get(n).map(|&i| Signal::Net(i)).ok_or_else(|| Error::Netlist(format!("undriven net {n:?}"))),
            }
        };
        let mut gates = Vec::with_capacity(j.gates.len());
        for (g, out) in j.gates.iter().zip(outs) {
            let kind = GateKind::from_name(&g.kind).ok_or_else(|| Error::Netlist(format!("unknown gate kind {:?}", g.kind)))?;
            if g.inputs.len() != kind.arity() {
                return Err(Error::Netlist(format!("gate {} has {} inputs, {} takes {}", g.name, g.inputs.len(), g.kind, kind.arity())));
            }
            let inputs = g.inputs.iter().map(|n| lookup(n)).collect::<Result<_>>()?;
            gates.push(Gate { name: g.name.clone(), kind, inputs, output: out, group: g.group });
        }
        let mut outputs = Vec::new();
        for p in &j.outputs {
            let bits = p.bits.iter().map(|n| lookup(n)).collect::<Result<_>>()?;
            outputs.push(Port { name: p.name.clone(), bits });
        }
        let nl = Netlist { name: j.name, function: j.function, inputs, outputs, net_names: names, gates };
        nl.topo_order()?;
        Ok(nl)
    }
}

const VERILOG_KEYWORDS: &[&str] = &[
    "always", "and", "assign", "begin", "buf", "case", "default", "else", "end", "endcase", "endfunction", "endmodule",
    "for", "function", "if", "initial", "inout", "input", "integer", "module", "nand", "negedge", "nor", "not", "or",
    "output", "parameter", "posedge", "reg", "supply0", "supply1", "task", "tri", "wire", "xnor", "xor", "aoi21", "oai21",
];

/// Verilog text and any identifiers that had to be renamed.
#[derive(Clone, Debug, PartialEq)]
pub struct VerilogOutput {
    pub text: String,
    pub renamed: BTreeMap<String, String>,
}

fn legal_identifier(name: &str, renamed: &mut BTreeMap<String, String>) -> String {
    let mut s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    if VERILOG_KEYWORDS.contains(&s.as_str()) {
        s.push_str("_r");
    }
    if s != name {
        renamed.insert(name.to_string(), s.clone());
    }
    s
}

impl Netlist {
    /// Structural Verilog with gate primitives; AOI21/OAI21 cells are
    /// emitted as small modules after the design.
    pub fn to_verilog(&self) -> VerilogOutput {
        let mut renamed = BTreeMap::new();
        let module = legal_identifier(&self.name, &mut renamed);
        let mut port_of = vec![None; self.net_names.len()];
        for p in &self.inputs {
            for (i, s) in p.bits.iter().enumerate() {
                if let Signal::Net(n) = s {
                    port_of[*n] = Some(format!("{}[{i}]", p.name));
                }
            }
        }
        let mut wire_name = vec![String::new(); self.net_names.len()];
        for (n, name) in self.net_names.iter().enumerate() {
            wire_name[n] = match &port_of[n] {
                Some(p) => p.clone(),
                None => legal_identifier(name, &mut renamed),
            };
        }
        let expr = |s: Signal| match s {
            Signal::Zero => ZERO.to_string(),
            Signal::One => ONE.to_string(),
            Signal::Net(n) => wire_name[n].clone(),
        };
        let mut v = String::new();
        let ports: Vec<&str> = self.inputs.iter().chain(&self.outputs).map(|p| p.name.as_str()).collect();
        let _ = writeln!(v, "// generated by macgen; function: {}", function_text(&self.function));
        let _ = writeln!(v, "module {module} ({});", ports.join(", "));
        for p in &self.inputs {
            let _ = writeln!(v, "  input [{}:0] {};", p.bits.len().max(1) - 1, p.name);
        }
        for p in &self.outputs {
            let _ = writeln!(v, "  output [{}:0] {};", p.bits.len().max(1) - 1, p.name);
        }
        for g in &self.gates {
            let _ = writeln!(v, "  wire {};", wire_name[g.output]);
        }
        for g in &self.gates {
            let inst = legal_identifier(&g.name, &mut renamed);
            let ins: Vec<String> = g.inputs.iter().map(|&s| expr(s)).collect();
            let out = &wire_name[g.output];
            let _ = match g.kind {
                GateKind::Oai21 | GateKind::Aoi21 => writeln!(
                    v,
                    "  {} {inst} (.y({out}), .a1({}), .a2({}), .b({}));",
                    g.kind.name(),
                    ins[0],
                    ins[1],
                    ins[2]
                ),
                GateKind::Inv => writeln!(v, "  not {inst} ({out}, {});", ins[0]),
                k => writeln!(v, "  {} {inst} ({out}, {});", k.name(), ins.join(", ")),
            };
        }
        for p in &self.outputs {
            for (i, &s) in p.bits.iter().enumerate() {
                let _ = writeln!(v, "  assign {}[{i}] = {};", p.name, expr(s));
            }
        }
        v.push_str("endmodule\n");
        if self.gates.iter().any(|g| g.kind == GateKind::Oai21) {
            v.push_str("\nmodule oai21 (y, a1, a2, b);\n  output y;\n  input a1, a2, b;\n  assign y = ~((a1 | a2) & b);\nendmodule\n");
        }
        if self.gates.iter().any(|g| g.kind == GateKind::Aoi21) {
            v.push_str("\nmodule aoi21 (y, a1, a2, b);\n  output y;\n  input a1, a2, b;\n  assign y = ~((a1 & a2) | b);\nendmodule\n");
        }
        VerilogOutput { text: v, renamed }
    }
}

fn function_text(f: &Function) -> String {
    match f {
        Function::Multiplier { width } => format!("p = a * b, {width}-bit unsigned"),
        Function::Mac { width, acc_width } => format!("p = a * b + c, {width}-bit operands, {acc_width}-bit c"),
        Function::Adder { width } => format!("s = a + b, {width}-bit unsigned"),
        Function::TreeSum { columns } => format!("r0 + r1 = weighted sum of {} bits", columns.len()),
    }
}
