//! Prefix-graph carry-propagate adder: region segmentation of the arrival
//! profile, initial structures, the fanout-depth path-delay model and
//! timing-driven refinement.
//!
//! Nodes `0..width` are the bit-level (g, p) inputs; node `i` covers `[i:i]`.
//! Every other node combines its trivial fan-in `tf` (same MSB) with its
//! non-trivial fan-in `ntf` (the range just below). After [`PrefixGraph::normalize`]
//! the node list is in topological order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixNode {
    pub msb: usize,
    pub lsb: usize,
    pub tf: Option<usize>,
    pub ntf: Option<usize>,
}

impl PrefixNode {
    pub fn is_input(&self) -> bool {
        self.tf.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    /// Group (G, P) cell with prefix-node fanout or a partial range.
    Black,
    /// Final `[i:0]` cell feeding only sum logic.
    Blue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixGraph {
    pub width: usize,
    pub nodes: Vec<PrefixNode>,
    /// `outputs[i]` covers `[i:0]`.
    pub outputs: Vec<usize>,
}

impl PrefixGraph {
    /// Inputs only; outputs point at the inputs (valid for width 1 only).
    fn bare(width: usize) -> Self {
        let nodes = (0..width).map(|i| PrefixNode { msb: i, lsb: i, tf: None, ntf: None }).collect();
        PrefixGraph { width, nodes, outputs: (0..width).collect() }
    }

    /// Adds `tf ∘ ntf`; the ranges must be adjacent.
    pub fn combine(&mut self, tf: usize, ntf: usize) -> Result<usize> {
        let (hi, lo) = (self.nodes[tf], self.nodes[ntf]);
        if hi.lsb != lo.msb + 1 {
            return Err(Error::Prefix(format!(
                "cannot combine [{}:{}] with [{}:{}]",
                hi.msb, hi.lsb, lo.msb, lo.lsb
            )));
        }
        self.nodes.push(PrefixNode { msb: hi.msb, lsb: lo.lsb, tf: Some(tf), ntf: Some(ntf) });
        Ok(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of black and blue nodes.
    pub fn prefix_nodes(&self) -> usize {
        self.nodes.len() - self.width
    }

    /// Consumers of every node among the prefix nodes.
    pub fn consumers(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (v, n) in self.nodes.iter().enumerate() {
            if let (Some(t), Some(u)) = (n.tf, n.ntf) {
                out[t].push(v);
                out[u].push(v);
            }
        }
        out
    }

    pub fn kinds(&self) -> Vec<NodeKind> {
        let mut used = vec![false; self.nodes.len()];
        for n in &self.nodes {
            if let (Some(t), Some(u)) = (n.tf, n.ntf) {
                used[t] = true;
                used[u] = true;
            }
        }
        self.nodes
            .iter()
            .enumerate()
            .map(|(v, n)| {
                if n.is_input() {
                    NodeKind::Input
                } else if n.lsb == 0 && !used[v] {
                    NodeKind::Blue
                } else {
                    NodeKind::Black
                }
            })
            .collect()
    }

    /// Structural checks: input layout, adjacent fan-in ranges, `[i:0]`
    /// outputs, acyclicity.
    pub fn validate(&self) -> Result<()> {
        let w = self.width;
        if w == 0 || self.nodes.len() < w || self.outputs.len() != w {
            return Err(Error::Prefix(format!("width {w} with {} nodes and {} outputs", self.nodes.len(), self.outputs.len())));
        }
        for (i, n) in self.nodes.iter().enumerate().take(w) {
            if !n.is_input() || n.msb != i || n.lsb != i {
                return Err(Error::Prefix(format!("node {i} must be the input [{i}:{i}]")));
            }
        }
        for (v, n) in self.nodes.iter().enumerate().skip(w) {
            let (Some(t), Some(u)) = (n.tf, n.ntf) else {
                return Err(Error::Prefix(format!("node {v} lacks a fan-in")));
            };
            if t >= self.nodes.len() || u >= self.nodes.len() {
                return Err(Error::Prefix(format!("node {v} refers past the node list")));
            }
            let (hi, lo) = (self.nodes[t], self.nodes[u]);
            if hi.msb != n.msb || lo.lsb != n.lsb || hi.lsb != lo.msb + 1 {
                return Err(Error::Prefix(format!(
                    "node {v} [{}:{}] from [{}:{}] and [{}:{}]",
                    n.msb, n.lsb, hi.msb, hi.lsb, lo.msb, lo.lsb
                )));
            }
        }
        for (i, &o) in self.outputs.iter().enumerate() {
            let n = self.nodes.get(o).ok_or_else(|| Error::Prefix(format!("output {i} out of range")))?;
            if n.msb != i || n.lsb != 0 {
                return Err(Error::Prefix(format!("output {i} covers [{}:{}]", n.msb, n.lsb)));
            }
        }
        self.topo_order().map(|_| ())
    }

    /// Node indices, fan-ins first. Fails on a cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        // 0 = new, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        for root in 0..self.nodes.len() {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, false)];
            while let Some((v, expanded)) = stack.pop() {
                if expanded {
                    state[v] = 2;
                    order.push(v);
                    continue;
                }
                match state[v] {
                    2 => continue,
                    1 => return Err(Error::Prefix(format!("cycle through node {v}"))),
                    _ => {}
                }
                state[v] = 1;
                stack.push((v, true));
                let n = self.nodes[v];
                for c in [n.ntf, n.tf].into_iter().flatten() {
                    match state[c] {
                        0 => stack.push((c, false)),
                        1 => return Err(Error::Prefix(format!("cycle through node {c}"))),
                        _ => {}
                    }
                }
            }
        }
        Ok(order)
    }

    /// Drops nodes no output depends on and renumbers the rest with inputs
    /// first, then fan-ins before consumers (depth-first from the outputs,
    /// LSB first).
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.nodes.len();
        let mut new_id = vec![usize::MAX; n];
        let mut order: Vec<usize> = (0..self.width).collect();
        for (i, id) in new_id.iter_mut().enumerate().take(self.width) {
            *id = i;
        }
        let mut on_stack = vec![false; n];
        for &root in &self.outputs {
            let mut stack = vec![(root, false)];
            while let Some((v, expanded)) = stack.pop() {
                if new_id[v] != usize::MAX {
                    continue;
                }
                if expanded {
                    new_id[v] = order.len();
                    order.push(v);
                    continue;
                }
                if on_stack[v] {
                    return Err(Error::Prefix(format!("cycle through node {v}")));
                }
                on_stack[v] = true;
                stack.push((v, true));
                let nd = self.nodes[v];
                for c in [nd.ntf, nd.tf].into_iter().flatten() {
                    if new_id[c] == usize::MAX {
                        if on_stack[c] {
                            return Err(Error::Prefix(format!("cycle through node {c}")));
                        }
                        stack.push((c, false));
                    }
                }
            }
        }
        self.nodes = order
            .iter()
            .map(|&v| {
                let nd = self.nodes[v];
                PrefixNode { tf: nd.tf.map(|x| new_id[x]), ntf: nd.ntf.map(|x| new_id[x]), ..nd }
            })
            .collect();
        for o in &mut self.outputs {
            *o = new_id[*o];
        }
        Ok(())
    }

    /// Prefix levels above the inputs, per node.
    pub fn depths(&self) -> Vec<usize> {
        let order = self.topo_order().expect("graph is acyclic");
        let mut d = vec![0; self.nodes.len()];
        for v in order {
            if let (Some(t), Some(u)) = (self.nodes[v].tf, self.nodes[v].ntf) {
                d[v] = 1 + d[t].max(d[u]);
            }
        }
        d
    }

    /// Prefix levels of each output.
    pub fn depth_profile(&self) -> Vec<usize> {
        let d = self.depths();
        self.outputs.iter().map(|&o| d[o]).collect()
    }

    pub fn max_depth(&self) -> usize {
        self.depth_profile().into_iter().max().unwrap_or(0)
    }

    pub fn max_fanout(&self) -> usize {
        self.consumers().iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Adds two `width`-bit operands in 64 lanes. `a[i]`, `b[i]` hold bit `i`
    /// of each lane; returns `width + 1` words (sum bits, then carry out).
    pub fn simulate(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let order = self.topo_order().expect("graph is acyclic");
        let mut gg = vec![0u64; self.nodes.len()];
        let mut pp = vec![0u64; self.nodes.len()];
        for i in 0..self.width {
            gg[i] = a[i] & b[i];
            pp[i] = a[i] ^ b[i];
        }
        for v in order {
            if let (Some(t), Some(u)) = (self.nodes[v].tf, self.nodes[v].ntf) {
                gg[v] = gg[t] | (pp[t] & gg[u]);
                pp[v] = pp[t] & pp[u];
            }
        }
        let mut out = Vec::with_capacity(self.width + 1);
        for i in 0..self.width {
            let p = a[i] ^ b[i];
            out.push(if i == 0 { p } else { p ^ gg[self.outputs[i - 1]] });
        }
        out.push(gg[self.outputs[self.width - 1]]);
        out
    }

    /// Transitive fan-in of the `[bit:0]` node.
    pub fn extract_subtree(&self, bit: usize) -> Subtree {
        let root = self.outputs[bit];
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        let mut nodes = Vec::new();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            nodes.push(v);
            let n = self.nodes[v];
            stack.extend([n.tf, n.ntf].into_iter().flatten());
        }
        nodes.sort_unstable();
        Subtree { bit, root, nodes }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: PrefixGraph = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    /// Graphviz text with nodes ranked by prefix level.
    pub fn to_dot(&self) -> String {
        let kinds = self.kinds();
        let depth = self.depths();
        let mut s = String::from("digraph prefix {\n  rankdir=TB;\n  node [shape=circle, fontsize=10];\n");
        for (v, n) in self.nodes.iter().enumerate() {
            let (shape, color) = match kinds[v] {
                NodeKind::Input => ("box", "white"),
                NodeKind::Black => ("circle", "gray40"),
                NodeKind::Blue => ("circle", "lightblue"),
            };
            let _ = writeln!(
                s,
                "  n{v} [label=\"{}:{}\", shape={shape}, style=filled, fillcolor=\"{color}\", level={}];",
                n.msb, n.lsb, depth[v]
            );
        }
        for (v, n) in self.nodes.iter().enumerate() {
            if let (Some(t), Some(u)) = (n.tf, n.ntf) {
                let _ = writeln!(s, "  n{t} -> n{v} [label=\"tf\"];\n  n{u} -> n{v} [label=\"ntf\"];");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Fan-in cone of one output, as indices into the full graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subtree {
    pub bit: usize,
    pub root: usize,
    /// Sorted node indices.
    pub nodes: Vec<usize>,
}

impl Subtree {
    pub fn contains(&self, v: usize) -> bool {
        self.nodes.binary_search(&v).is_ok()
    }

    pub fn inputs(&self, g: &PrefixGraph) -> usize {
        self.nodes.iter().filter(|&&v| g.nodes[v].is_input()).count()
    }
}

pub fn ripple_carry(width: usize) -> Result<PrefixGraph> {
    check_width(width)?;
    let mut g = PrefixGraph::bare(width);
    for i in 1..width {
        g.outputs[i] = g.combine(i, g.outputs[i - 1])?;
    }
    Ok(g)
}

pub fn sklansky(width: usize) -> Result<PrefixGraph> {
    check_width(width)?;
    let mut g = PrefixGraph::bare(width);
    let leaves: Vec<usize> = (0..width).collect();
    g.outputs = sklansky_over(&mut g, &leaves)?;
    Ok(g)
}

pub fn kogge_stone(width: usize) -> Result<PrefixGraph> {
    check_width(width)?;
    let mut g = PrefixGraph::bare(width);
    let mut cur: Vec<usize> = (0..width).collect();
    let mut d = 1;
    while d < width {
        let mut next = cur.clone();
        for i in d..width {
            if g.nodes[cur[i]].lsb != 0 {
                next[i] = g.combine(cur[i], cur[i - d])?;
            }
        }
        cur = next;
        d *= 2;
    }
    g.outputs = cur;
    Ok(g)
}

pub fn brent_kung(width: usize) -> Result<PrefixGraph> {
    check_width(width)?;
    let mut g = PrefixGraph::bare(width);
    let mut cur: Vec<usize> = (0..width).collect();
    let mut d = 1;
    while d < width {
        for i in (2 * d - 1..width).step_by(2 * d) {
            cur[i] = g.combine(cur[i], cur[i - d])?;
        }
        d *= 2;
    }
    while d >= 1 {
        for i in (3 * d - 1..width).step_by(2 * d) {
            cur[i] = g.combine(cur[i], cur[i - d])?;
        }
        d /= 2;
    }
    g.outputs = cur;
    Ok(g)
}

fn check_width(width: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::Prefix("adder width must be positive".into()));
    }
    Ok(())
}

/// Sklansky prefixes over a leaf sequence whose ranges are adjacent, LSB
/// first; entry `k` covers leaves `0..=k`.
fn sklansky_over(g: &mut PrefixGraph, leaves: &[usize]) -> Result<Vec<usize>> {
    if leaves.len() <= 1 {
        return Ok(leaves.to_vec());
    }
    let split = leaves.len().next_power_of_two() / 2;
    let mut low = sklansky_over(g, &leaves[..split])?;
    let high = sklansky_over(g, &leaves[split..])?;
    let carry = *low.last().expect("non-empty");
    for h in high {
        let v = g.combine(h, carry)?;
        low.push(v);
    }
    Ok(low)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regions {
    /// Rising arrivals: ripple carry.
    pub ripple: Range<usize>,
    /// Latest, flat arrivals: Sklansky.
    pub flat: Range<usize>,
    /// Falling arrivals: carry increment.
    pub increment: Range<usize>,
}

impl Regions {
    pub fn width(&self) -> usize {
        self.increment.end
    }
}

pub const DEFAULT_EPSILON: f64 = 1.5;

/// The flat region is the longest run of bits arriving within `epsilon` of
/// the latest bit (the lowest such run on ties).
pub fn segment_regions(profile: &[f64], epsilon: f64) -> Regions {
    let n = profile.len();
    let max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = 0..0;
    let mut i = 0;
    while i < n {
        if profile[i] >= max - epsilon {
            let start = i;
            while i < n && profile[i] >= max - epsilon {
                i += 1;
            }
            if i - start > best.len() {
                best = start..i;
            }
        } else {
            i += 1;
        }
    }
    Regions { ripple: 0..best.start, flat: best.clone(), increment: best.end..n }
}

/// Ripple chain over the first region, Sklansky over the flat region with the
/// ripple carry as its lowest leaf, carry-increment blocks above. A block
/// closes once the arrival has fallen by `step` from its first bit.
pub fn build_initial_cpa(regions: &Regions, profile: &[f64], step: f64) -> Result<PrefixGraph> {
    let w = profile.len();
    check_width(w)?;
    if regions.ripple.start != 0
        || regions.ripple.end != regions.flat.start
        || regions.flat.end != regions.increment.start
        || regions.increment.end != w
    {
        return Err(Error::Prefix(format!("regions {regions:?} do not partition width {w}")));
    }
    let mut g = PrefixGraph::bare(w);
    for i in regions.ripple.clone().skip(1) {
        g.outputs[i] = g.combine(i, g.outputs[i - 1])?;
    }
    if !regions.flat.is_empty() {
        let mut leaves = Vec::with_capacity(regions.flat.len() + 1);
        if regions.flat.start > 0 {
            leaves.push(g.outputs[regions.flat.start - 1]);
        }
        leaves.extend(regions.flat.clone());
        let pre = sklansky_over(&mut g, &leaves)?;
        let skip = usize::from(regions.flat.start > 0);
        for (k, &v) in pre.iter().enumerate().skip(skip) {
            g.outputs[regions.flat.start + k - skip] = v;
        }
    }
    let mut b0 = regions.increment.start;
    while b0 < w {
        let mut b1 = b0 + 1;
        while b1 < w && profile[b1] > profile[b0] - step {
            b1 += 1;
        }
        if b0 == 0 {
            // Both lower regions are empty: the first block ripples from bit 0.
            for i in 1..b1 {
                g.outputs[i] = g.combine(i, g.outputs[i - 1])?;
            }
        } else {
            let carry = g.outputs[b0 - 1];
            let mut local = b0;
            for i in b0..b1 {
                if i > b0 {
                    local = g.combine(i, local)?;
                }
                g.outputs[i] = g.combine(local, carry)?;
            }
        }
        b0 = b1;
    }
    g.normalize()?;
    g.validate()?;
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdcModel {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub b: f64,
}

impl Default for FdcModel {
    fn default() -> Self {
        FdcModel { k0: 0.5, k1: 0.5, k2: 1.0, k3: 0.5, b: 1.0 }
    }
}

impl FdcModel {
    pub fn coefficients(&self) -> [f64; 4] {
        [self.k0, self.k1, self.k2, self.k3]
    }
}

/// Features of one leaf-to-root path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdcFeatures {
    /// Summed black-node fanout into black nodes.
    pub f_black: usize,
    /// Summed black-node fanout into blue nodes.
    pub f_blue: usize,
    pub n_black: usize,
    pub n_blue: usize,
}

impl FdcFeatures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.f_black as f64, self.f_blue as f64, self.n_black as f64, self.n_blue as f64]
    }
}

pub fn fdc_delay(f: &FdcFeatures, m: &FdcModel) -> f64 {
    let x = f.as_array();
    m.coefficients().iter().zip(x).map(|(k, v)| k * v).sum::<f64>() + m.b
}

/// Worst path of one output under the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathCost {
    pub bit: usize,
    /// Leaf offset plus path delay plus `b`.
    pub cost: f64,
    pub features: FdcFeatures,
    /// Nodes from the root down to the leaf.
    pub path: Vec<usize>,
    pub leaf_offset: f64,
}

/// Per-node black/blue fanout counts.
fn typed_fanouts(g: &PrefixGraph, kinds: &[NodeKind]) -> Vec<(usize, usize)> {
    let mut f = vec![(0, 0); g.nodes.len()];
    for (v, n) in g.nodes.iter().enumerate() {
        if let (Some(t), Some(u)) = (n.tf, n.ntf) {
            for c in [t, u] {
                match kinds[v] {
                    NodeKind::Blue => f[c].1 += 1,
                    _ => f[c].0 += 1,
                }
            }
        }
    }
    f
}

/// Worst-path evaluation of every node in one pass. `offsets[i]` is the
/// arrival of input bit `i` relative to the earliest bit (empty means zero).
pub struct FdcEval {
    cost: Vec<f64>,
    pick: Vec<Option<usize>>,
    kinds: Vec<NodeKind>,
    fanouts: Vec<(usize, usize)>,
    b: f64,
    offsets: Vec<f64>,
}

impl FdcEval {
    pub fn new(g: &PrefixGraph, m: &FdcModel, offsets: &[f64]) -> Self {
        let kinds = g.kinds();
        let fanouts = typed_fanouts(g, &kinds);
        let order = g.topo_order().expect("graph is acyclic");
        let mut cost = vec![0.0; g.nodes.len()];
        let mut pick = vec![None; g.nodes.len()];
        for v in order {
            let n = g.nodes[v];
            match (n.tf, n.ntf) {
                (Some(t), Some(u)) => {
                    let own = match kinds[v] {
                        NodeKind::Blue => m.k3,
                        _ => m.k0 * fanouts[v].0 as f64 + m.k1 * fanouts[v].1 as f64 + m.k2,
                    };
                    // Ties go to the trivial fan-in.
                    let c = if cost[u] > cost[t] { u } else { t };
                    cost[v] = own + cost[c];
                    pick[v] = Some(c);
                }
                _ => cost[v] = offsets.get(n.msb).copied().unwrap_or(0.0),
            }
        }
        FdcEval { cost, pick, kinds, fanouts, b: m.b, offsets: offsets.to_vec() }
    }

    /// Worst path cost of the cone rooted at `v`, including `b`.
    pub fn node_cost(&self, v: usize) -> f64 {
        self.cost[v] + self.b
    }

    pub fn bit_costs(&self, g: &PrefixGraph) -> Vec<f64> {
        g.outputs.iter().map(|&o| self.node_cost(o)).collect()
    }

    /// The maximizing path below `v` and its features.
    pub fn path(&self, g: &PrefixGraph, bit: usize) -> PathCost {
        let root = g.outputs[bit];
        let mut path = vec![root];
        let mut f = FdcFeatures::default();
        let mut v = root;
        loop {
            match self.kinds[v] {
                NodeKind::Black => {
                    f.n_black += 1;
                    f.f_black += self.fanouts[v].0;
                    f.f_blue += self.fanouts[v].1;
                }
                NodeKind::Blue => f.n_blue += 1,
                NodeKind::Input => break,
            }
            v = self.pick[v].expect("prefix node has fan-ins");
            path.push(v);
        }
        let leaf_offset = self.offsets.get(g.nodes[v].msb).copied().unwrap_or(0.0);
        PathCost { bit, cost: self.node_cost(root), features: f, path, leaf_offset }
    }
}

/// Features of the worst path of output `bit` with no arrival offsets.
pub fn fdc_features(g: &PrefixGraph, bit: usize, m: &FdcModel) -> FdcFeatures {
    FdcEval::new(g, m, &[]).path(g, bit).features
}

/// Relative arrivals: each bit minus the earliest.
pub fn arrival_offsets(profile: &[f64]) -> Vec<f64> {
    let lo = profile.iter().copied().fold(f64::INFINITY, f64::min);
    profile.iter().map(|t| t - lo).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FdcModel,
    pub r2: f64,
    /// Mean absolute percentage error.
    pub mape: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub mape: f64,
}

pub const MIN_FIT_SAMPLES: usize = 5;

/// Least squares with `k0..k3 >= 0` and a free intercept. The constrained
/// optimum is found by solving every choice of active bounds and keeping
/// the best feasible one.
pub fn fit_fdc(samples: &[(FdcFeatures, f64)]) -> Result<FitReport> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("{} samples; at least {MIN_FIT_SAMPLES} are needed", samples.len())));
    }
    let rows: Vec<[f64; 4]> = samples.iter().map(|(f, _)| f.as_array()).collect();
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let full = design(&rows, &[0, 1, 2, 3]);
    if rank(&full) < 5 {
        return Err(Error::Fit(
            "feature matrix is rank deficient; use adders with more varied structure and fanout".into(),
        ));
    }
    let mut best: Option<(f64, [f64; 4], f64)> = None;
    for mask in (0u32..16).rev() {
        let cols: Vec<usize> = (0..4).filter(|c| mask & (1 << c) != 0).collect();
        let x = design(&rows, &cols);
        let Some(beta) = least_squares(&x, &y) else { continue };
        let coef = &beta.as_slice()[..cols.len()];
        if coef.iter().any(|&c| c < -1e-12) {
            continue;
        }
        let resid = &x * &beta - &y;
        let sse = resid.norm_squared();
        let mut k = [0.0; 4];
        for (c, &v) in cols.iter().zip(coef) {
            k[*c] = v.max(0.0);
        }
        let b = beta[cols.len()];
        if best.as_ref().is_none_or(|(s, _, _)| sse < *s - 1e-12 * s.max(1.0)) {
            best = Some((sse, k, b));
        }
    }
    let (_, k, b) = best.ok_or_else(|| Error::Fit("no non-negative fit".into()))?;
    let model = FdcModel { k0: k[0], k1: k[1], k2: k[2], k3: k[3], b };
    let pred: Vec<f64> = samples.iter().map(|(f, _)| fdc_delay(f, &model)).collect();
    let (r2, mape) = scores(&pred, y.as_slice());
    Ok(FitReport { model, r2, mape, samples: samples.len() })
}

/// Ordinary least squares of delay against depth alone.
pub fn fit_depth(samples: &[(usize, f64)]) -> Result<DepthFit> {
    if samples.len() < 2 {
        return Err(Error::Fit("depth fit needs at least two samples".into()));
    }
    let rows: Vec<[f64; 4]> = samples.iter().map(|&(d, _)| [d as f64, 0.0, 0.0, 0.0]).collect();
    let x = design(&rows, &[0]);
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let beta = least_squares(&x, &y).ok_or_else(|| Error::Fit("all samples have the same depth".into()))?;
    let pred: Vec<f64> = samples.iter().map(|&(d, _)| beta[0] * d as f64 + beta[1]).collect();
    let (r2, mape) = scores(&pred, y.as_slice());
    Ok(DepthFit { slope: beta[0], intercept: beta[1], r2, mape })
}

fn design(rows: &[[f64; 4]], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len() + 1, |r, c| if c < cols.len() { rows[r][cols[c]] } else { 1.0 })
}

fn rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > top * 1e-10).count()
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if rank(x) < x.ncols() {
        return None;
    }
    x.clone().svd(true, true).solve(y, 1e-14).ok()
}

fn scores(pred: &[f64], y: &[f64]) -> (f64, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    let nz: Vec<f64> = pred.iter().zip(y).filter(|(_, v)| v.abs() > 0.0).map(|(p, v)| ((p - v) / v).abs()).collect();
    let mape = if nz.is_empty() { 0.0 } else { 100.0 * nz.iter().sum::<f64>() / nz.len() as f64 };
    (r2, mape)
}

/// Restructures `p = tf ∘ (tf' ∘ ntf')` into `p = (tf ∘ tf') ∘ ntf'` by
/// adding `s = tf(p) ∘ tf(ntf(p))`. The range of `p` is unchanged and exactly
/// one node is added; the old `ntf(p)` may become dead.
pub fn graph_opt(g: &mut PrefixGraph, p: usize) -> Result<usize> {
    let pn = *g.nodes.get(p).ok_or_else(|| Error::Prefix(format!("no node {p}")))?;
    let (Some(tf), Some(q)) = (pn.tf, pn.ntf) else {
        return Err(Error::Prefix(format!("node {p} is an input")));
    };
    let qn = g.nodes[q];
    let (Some(qt), Some(qq)) = (qn.tf, qn.ntf) else {
        return Err(Error::Prefix(format!("node {p}: its non-trivial fan-in is an input")));
    };
    let s = g.combine(tf, qt)?;
    g.nodes[p].tf = Some(s);
    g.nodes[p].ntf = Some(qq);
    Ok(s)
}

pub fn transform_applicable(g: &PrefixGraph, p: usize) -> bool {
    g.nodes.get(p).and_then(|n| n.ntf).is_some_and(|q| !g.nodes[q].is_input())
}

/// Applies [`graph_opt`] at `p` only if that strictly lowers the depth of `p`.
pub fn depth_opt(g: &mut PrefixGraph, p: usize) -> Result<bool> {
    if !transform_applicable(g, p) {
        return Ok(false);
    }
    let before = g.depths()[p];
    let mut h = g.clone();
    graph_opt(&mut h, p)?;
    if h.depths()[p] < before {
        *g = h;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Applies [`graph_opt`] at `p` when its non-trivial fan-in drives at least
/// two nodes, taking one load off it.
pub fn fanout_opt(g: &mut PrefixGraph, p: usize) -> Result<bool> {
    if !transform_applicable(g, p) {
        return Ok(false);
    }
    let q = g.nodes[p].ntf.expect("checked");
    if g.consumers()[q].len() < 2 {
        return Ok(false);
    }
    graph_opt(g, p)?;
    Ok(true)
}

/// Minimum-depth bound plus one for the bits `[bit:0]`.
pub fn depth_guard(bit: usize) -> usize {
    if bit == 0 {
        0
    } else {
        ((bit + 1) as f64).log2().ceil() as usize + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanoutTarget {
    /// Nodes on the worst path, largest non-trivial fan-in load first.
    CriticalPath,
    /// Any node of the subtree, largest non-trivial fan-in load first.
    Subtree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Transform cap; `None` means ten per bit.
    pub max_transforms: Option<usize>,
    pub fanout_target: FanoutTarget,
    pub tolerance: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { max_transforms: None, fanout_target: FanoutTarget::CriticalPath, tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub depth_opts: usize,
    /// Depth-opt steps that only reduced the number of deepest paths.
    pub rebalances: usize,
    pub fanout_opts: usize,
    pub passes: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub unmet_bits: Vec<usize>,
    pub worst_cost: f64,
    pub hit_cap: bool,
}

impl OptimizeReport {
    pub fn met(&self) -> bool {
        self.unmet_bits.is_empty()
    }
}

/// Timing-driven refinement. Bits are visited MSB to LSB; a bit over its
/// budget is first brought to the depth guard with depth-opt, then relieved
/// with fanout-opt. Passes
/// repeat until every bit is met, nothing applies, or the cap is reached.
/// `observe` sees every intermediate graph.
pub fn optimize_cpa(
    g: &mut PrefixGraph,
    budgets: &[f64],
    offsets: &[f64],
    model: &FdcModel,
    opts: &OptimizeOptions,
    observe: &mut dyn FnMut(&PrefixGraph),
) -> Result<OptimizeReport> {
    if budgets.len() != g.width {
        return Err(Error::Prefix(format!("{} budgets for width {}", budgets.len(), g.width)));
    }
    let cap = opts.max_transforms.unwrap_or(10 * g.width);
    let tol = opts.tolerance;
    let mut rep = OptimizeReport { nodes_before: g.prefix_nodes(), ..Default::default() };
    let unmet = |g: &PrefixGraph| -> (Vec<f64>, f64) {
        let costs = FdcEval::new(g, model, offsets).bit_costs(g);
        let excess = costs.iter().zip(budgets).map(|(c, b)| (c - b).max(0.0)).sum();
        (costs, excess)
    };
    'passes: loop {
        rep.passes += 1;
        let mut progress = false;
        for j in (0..g.width).rev() {
            loop {
                if rep.depth_opts + rep.fanout_opts >= cap {
                    rep.hit_cap = true;
                    break 'passes;
                }
                let (costs, excess) = unmet(g);
                if costs[j] <= budgets[j] + tol {
                    break;
                }
                let depths = g.depths();
                let applied = if depths[g.outputs[j]] > depth_guard(j) {
                    let (ok, fallback) = try_depth_opt(g, j, &depths)?;
                    rep.depth_opts += usize::from(ok);
                    rep.rebalances += usize::from(fallback);
                    ok
                } else {
                    let ok = try_fanout_opt(g, j, &costs, excess, &depths, budgets, offsets, model, opts)?;
                    rep.fanout_opts += usize::from(ok);
                    ok
                };
                if !applied {
                    break;
                }
                progress = true;
                observe(g);
            }
        }
        let (_, excess) = unmet(g);
        if excess <= tol || !progress {
            break;
        }
    }
    let costs = FdcEval::new(g, model, offsets).bit_costs(g);
    rep.unmet_bits = (0..g.width).filter(|&j| costs[j] > budgets[j] + tol).collect();
    rep.worst_cost = costs.iter().copied().fold(0.0, f64::max);
    rep.nodes_after = g.prefix_nodes();
    Ok(rep)
}

/// Deepest path of output `bit`, root first; ties follow the trivial fan-in.
fn deepest_path(g: &PrefixGraph, bit: usize, depths: &[usize]) -> Vec<usize> {
    let mut v = g.outputs[bit];
    let mut path = vec![v];
    while let (Some(t), Some(u)) = (g.nodes[v].tf, g.nodes[v].ntf) {
        v = if depths[u] > depths[t] { u } else { t };
        path.push(v);
    }
    path
}

/// Nodes on some deepest path of output `bit`.
fn critical_cone(g: &PrefixGraph, bit: usize, depths: &[usize]) -> Vec<usize> {
    let root = g.outputs[bit];
    let mut seen = vec![false; g.nodes.len()];
    seen[root] = true;
    let mut stack = vec![root];
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        out.push(v);
        if let (Some(t), Some(u)) = (g.nodes[v].tf, g.nodes[v].ntf) {
            for c in [t, u] {
                if depths[c] + 1 == depths[v] && !std::mem::replace(&mut seen[c], true) {
                    stack.push(c);
                }
            }
        }
    }
    out
}

/// Number of deepest leaf-to-root paths of output `bit`.
fn critical_paths(g: &PrefixGraph, bit: usize, depths: &[usize]) -> u128 {
    let order = g.topo_order().expect("graph is acyclic");
    let mut count = vec![0u128; g.nodes.len()];
    for v in order {
        count[v] = match (g.nodes[v].tf, g.nodes[v].ntf) {
            (Some(t), Some(u)) => [t, u]
                .into_iter()
                .filter(|&c| depths[c] + 1 == depths[v])
                .fold(0u128, |a, c| a.saturating_add(count[c])),
            _ => 1,
        };
    }
    count[g.outputs[bit]]
}

/// Depth-opt on output `bit`. Nodes of its deepest path are tried from the
/// leaf end; the first one whose own depth drops is rewritten. When none
/// does (every critical node is already balanced), a rewrite anywhere on a
/// deepest path that lowers (root depth, number of deepest paths) is taken
/// instead, highest node first. Returns `(applied, was_fallback)`.
fn try_depth_opt(g: &mut PrefixGraph, bit: usize, depths: &[usize]) -> Result<(bool, bool)> {
    let path = deepest_path(g, bit, depths);
    for &p in path.iter().rev() {
        let mut h = g.clone();
        if depth_opt(&mut h, p)? {
            h.normalize()?;
            *g = h;
            return Ok((true, false));
        }
    }
    let root = g.outputs[bit];
    let before = (depths[root], critical_paths(g, bit, depths));
    let mut cands = critical_cone(g, bit, depths);
    cands.sort_by(|&a, &b| depths[b].cmp(&depths[a]).then(a.cmp(&b)));
    for p in cands {
        if !transform_applicable(g, p) {
            continue;
        }
        let mut h = g.clone();
        graph_opt(&mut h, p)?;
        h.normalize()?;
        let d = h.depths();
        if (d[h.outputs[bit]], critical_paths(&h, bit, &d)) < before {
            *g = h;
            return Ok((true, true));
        }
    }
    Ok((false, false))
}

#[allow(clippy::too_many_arguments)]
fn try_fanout_opt(
    g: &mut PrefixGraph,
    bit: usize,
    costs: &[f64],
    excess: f64,
    depths: &[usize],
    budgets: &[f64],
    offsets: &[f64],
    model: &FdcModel,
    opts: &OptimizeOptions,
) -> Result<bool> {
    let eval = FdcEval::new(g, model, offsets);
    let pool: Vec<usize> = match opts.fanout_target {
        FanoutTarget::CriticalPath => eval.path(g, bit).path,
        FanoutTarget::Subtree => g.extract_subtree(bit).nodes,
    };
    let load = g.consumers();
    let mut cands: Vec<(usize, usize)> = pool
        .into_iter()
        .filter(|&p| transform_applicable(g, p))
        .map(|p| (load[g.nodes[p].ntf.expect("applicable")].len(), p))
        .filter(|&(l, _)| l >= 2)
        .collect();
    cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let old_profile: Vec<usize> = g.outputs.iter().map(|&o| depths[o]).collect();
    for (_, p) in cands {
        let mut h = g.clone();
        if !fanout_opt(&mut h, p)? {
            continue;
        }
        h.normalize()?;
        let new_costs = FdcEval::new(&h, model, offsets).bit_costs(&h);
        let new_excess: f64 = new_costs.iter().zip(budgets).map(|(c, b)| (c - b).max(0.0)).sum();
        let new_profile = h.depth_profile();
        let depth_ok =
            new_profile.iter().zip(&old_profile).enumerate().all(|(k, (&n, &o))| n <= o.max(depth_guard(k)));
        if new_costs[bit] < costs[bit] - opts.tolerance && new_excess <= excess + opts.tolerance && depth_ok {
            *g = h;
            return Ok(true);
        }
    }
    Ok(false)
}

/// Random valid graph: a ripple chain reshaped by `steps` random transforms.
pub fn random_graph(width: usize, steps: usize, rng: &mut impl Rng) -> Result<PrefixGraph> {
    let mut g = ripple_carry(width)?;
    for _ in 0..steps {
        let cands: Vec<usize> = (width..g.nodes.len()).filter(|&p| transform_applicable(&g, p)).collect();
        if cands.is_empty() {
            break;
        }
        let p = cands[rng.random_range(0..cands.len())];
        graph_opt(&mut g, p)?;
        g.normalize()?;
    }
    Ok(g)
}

/// Range-level summary used by reports: node count per prefix level.
pub fn level_histogram(g: &PrefixGraph) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for (v, d) in g.depths().into_iter().enumerate() {
        if !g.nodes[v].is_input() {
            *h.entry(d).or_insert(0) += 1;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ripple_shape() {
        let g = ripple_carry(4).unwrap();
        g.validate().unwrap();
        assert_eq!(g.prefix_nodes(), 3);
        assert_eq!(g.depth_profile(), vec![0, 1, 2, 3]);
        let k = g.kinds();
        assert_eq!(k[g.outputs[3]], NodeKind::Blue);
        assert_eq!(k[g.outputs[2]], NodeKind::Black);
    }

    #[test]
    fn graph_opt_on_chain_head() {
        let mut g = ripple_carry(4).unwrap();
        let head = g.outputs[3];
        let before = g.len();
        graph_opt(&mut g, head).unwrap();
        assert_eq!(g.len(), before + 1);
        g.validate().unwrap();
        assert_eq!(g.depths()[head], 2);
    }

    #[test]
    fn fdc_arithmetic() {
        let m = FdcModel { k0: 1.0, k1: 1.0, k2: 1.0, k3: 1.0, b: 0.0 };
        let f = FdcFeatures { f_black: 2, f_blue: 1, n_black: 3, n_blue: 1 };
        assert_eq!(fdc_delay(&f, &m), 7.0);
        let zero = FdcModel { b: 0.0, ..FdcModel::default() };
        assert_eq!(fdc_delay(&FdcFeatures::default(), &zero), 0.0);
    }

    #[test]
    fn segment_trapezoid() {
        let r = segment_regions(&[0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0], 0.5);
        assert_eq!((r.ripple, r.flat, r.increment), (0..2, 2..5, 5..7));
        let r = segment_regions(&[3.0; 5], 1.5);
        assert_eq!((r.ripple, r.flat, r.increment), (0..0, 0..5, 5..5));
    }
}
