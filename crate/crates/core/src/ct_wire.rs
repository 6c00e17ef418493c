//! Port ordering inside each compressor slice.
//!
//! Slice `(i, j)` has `m = pp[i][j]` sources and `m` sinks. Sinks are
//! numbered: the A, B, C ports of each 3:2 cell, then the A, B ports of each
//! 2:2 cell, then one dummy port per passthrough bit. Sources of stage `i+1`
//! in column `j` are, in order: the sums of the 3:2 cells of `(i, j)`, the
//! sums of its 2:2 cells, its passthrough bits, then the carries of the 3:2
//! and 2:2 cells of `(i, j-1)`. Stage-0 sources follow the partial-product
//! matrix column order.
//!
//! A wiring is a permutation per slice, `perm[u] = v` sending source `u` to
//! sink `v`.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ct_assign::StageAssignment;
use crate::ilp::{self, LinExpr, Model, ObjSense, Sense, SolveOptions, Status, VarId, VarKind};
use crate::tech::DelayTable;
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sink {
    Full { cell: usize, port: usize },
    Half { cell: usize, port: usize },
    Pass(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceShape {
    pub full: usize,
    pub half: usize,
    pub pass: usize,
}

impl SliceShape {
    pub fn of(a: &StageAssignment, i: usize, j: usize) -> Self {
        SliceShape { full: a.f[i][j], half: a.h[i][j], pass: a.passthrough(i, j) }
    }

    pub fn size(&self) -> usize {
        3 * self.full + 2 * self.half + self.pass
    }

    pub fn has_cells(&self) -> bool {
        self.full + self.half > 0
    }

    pub fn sink(&self, v: usize) -> Sink {
        let f3 = 3 * self.full;
        if v < f3 {
            Sink::Full { cell: v / 3, port: v % 3 }
        } else if v < f3 + 2 * self.half {
            Sink::Half { cell: (v - f3) / 2, port: (v - f3) % 2 }
        } else {
            Sink::Pass(v - f3 - 2 * self.half)
        }
    }

    /// Sink index of `sink`.
    pub fn index(&self, sink: Sink) -> usize {
        match sink {
            Sink::Full { cell, port } => 3 * cell + port,
            Sink::Half { cell, port } => 3 * self.full + 2 * cell + port,
            Sink::Pass(k) => 3 * self.full + 2 * self.half + k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireMethod {
    Identity,
    Random,
    Heuristic,
    Ilp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WiringPlan {
    /// `perms[i][j][u]`: sink receiving source `u` of slice `(i, j)`.
    pub perms: Vec<Vec<Vec<usize>>>,
    pub method: WireMethod,
}

impl WiringPlan {
    pub fn identity(a: &StageAssignment) -> Self {
        let perms = (0..a.stages).map(|i| (0..a.columns).map(|j| (0..a.pp[i][j]).collect()).collect()).collect();
        WiringPlan { perms, method: WireMethod::Identity }
    }

    pub fn validate(&self, a: &StageAssignment) -> Result<()> {
        if self.perms.len() != a.stages {
            return Err(Error::Wiring(format!("{} stages of permutations for {} stages", self.perms.len(), a.stages)));
        }
        for (i, st) in self.perms.iter().enumerate() {
            if st.len() != a.columns {
                return Err(Error::Wiring(format!("stage {i} has {} columns", st.len())));
            }
            for (j, p) in st.iter().enumerate() {
                if p.len() != a.pp[i][j] {
                    return Err(Error::Wiring(format!("slice ({i},{j}) has {} sources, wiring maps {}", a.pp[i][j], p.len())));
                }
                let mut seen = vec![false; p.len()];
                for &v in p {
                    if v >= p.len() || std::mem::replace(&mut seen[v], true) {
                        return Err(Error::Wiring(format!("slice ({i},{j}) is not a permutation")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs the tree forward over any value type.
///
/// `full(i, j, k, [a, b, c]) -> (sum, carry)` and
/// `half(i, j, k, [a, b]) -> (sum, carry)` build the cells; the result holds
/// the tree outputs per column.
pub fn propagate<T: Clone>(
    a: &StageAssignment,
    w: &WiringPlan,
    inputs: Vec<Vec<T>>,
    mut full: impl FnMut(usize, usize, usize, [T; 3]) -> (T, T),
    mut half: impl FnMut(usize, usize, usize, [T; 2]) -> (T, T),
) -> Vec<Vec<T>> {
    let mut cur = inputs;
    cur.resize(a.columns, Vec::new());
    for i in 0..a.stages {
        let mut sums: Vec<Vec<T>> = Vec::with_capacity(a.columns);
        let mut pass: Vec<Vec<T>> = Vec::with_capacity(a.columns);
        let mut carries: Vec<Vec<T>> = Vec::with_capacity(a.columns);
        for j in 0..a.columns {
            let shape = SliceShape::of(a, i, j);
            debug_assert_eq!(cur[j].len(), shape.size());
            let mut sink: Vec<Option<T>> = vec![None; shape.size()];
            for (u, val) in cur[j].iter().enumerate() {
                sink[w.perms[i][j][u]] = Some(val.clone());
            }
            let mut take = |v: usize| sink[v].take().expect("wiring maps every sink once");
            let (mut s, mut c, mut p) = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..shape.full {
                let ins = [take(3 * k), take(3 * k + 1), take(3 * k + 2)];
                let (sv, cv) = full(i, j, k, ins);
                s.push(sv);
                c.push(cv);
            }
            for k in 0..shape.half {
                let base = 3 * shape.full + 2 * k;
                let (sv, cv) = half(i, j, k, [take(base), take(base + 1)]);
                s.push(sv);
                c.push(cv);
            }
            for k in 0..shape.pass {
                p.push(take(3 * shape.full + 2 * shape.half + k));
            }
            sums.push(s);
            pass.push(p);
            carries.push(c);
        }
        let mut next = Vec::with_capacity(a.columns);
        for j in 0..a.columns {
            let mut v = std::mem::take(&mut sums[j]);
            v.append(&mut pass[j]);
            if j > 0 {
                v.extend(carries[j - 1].iter().cloned());
            }
            debug_assert_eq!(v.len(), a.pp[i + 1][j]);
            next.push(v);
        }
        cur = next;
    }
    cur
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WiringTiming {
    /// Arrival of each tree output bit, per column.
    pub outputs: Vec<Vec<f64>>,
    /// Latest output arrival.
    pub max: f64,
}

impl WiringTiming {
    /// Per-column arrival at the final adder (latest of the column's bits;
    /// empty columns get `floor`).
    pub fn column_profile(&self, floor: f64) -> Vec<f64> {
        self.outputs.iter().map(|c| c.iter().copied().fold(floor, f64::max)).collect()
    }
}

/// Zero arrival for every tree input bit.
pub fn zero_arrivals(a: &StageAssignment) -> Vec<Vec<f64>> {
    a.pp[0].iter().map(|&n| vec![0.0; n]).collect()
}

pub fn evaluate_wiring(a: &StageAssignment, w: &WiringPlan, d: &DelayTable, inputs: &[Vec<f64>]) -> WiringTiming {
    let outputs = propagate(
        a,
        w,
        inputs.to_vec(),
        |_, _, _, [x, y, z]| ((x + d.t_as).max(y + d.t_bs).max(z + d.t_cs), (x + d.t_ac).max(y + d.t_bc).max(z + d.t_cc)),
        |_, _, _, [x, y]| ((x + d.t_s).max(y + d.t_s), (x + d.t_c).max(y + d.t_c)),
    );
    let max = outputs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let max = if max.is_finite() { max } else { 0.0 };
    WiringTiming { outputs, max }
}

/// Sum of all cell output arrivals; a tie-breaker for the local search.
fn internal_total(a: &StageAssignment, w: &WiringPlan, d: &DelayTable, inputs: &[Vec<f64>]) -> (f64, f64) {
    let total = std::cell::Cell::new(0.0);
    let outs = propagate(
        a,
        w,
        inputs.to_vec(),
        |_, _, _, [x, y, z]| {
            let s = (x + d.t_as).max(y + d.t_bs).max(z + d.t_cs);
            let c = (x + d.t_ac).max(y + d.t_bc).max(z + d.t_cc);
            total.set(total.get() + s + c);
            (s, c)
        },
        |_, _, _, [x, y]| {
            let s = (x + d.t_s).max(y + d.t_s);
            let c = (x + d.t_c).max(y + d.t_c);
            total.set(total.get() + s + c);
            (s, c)
        },
    );
    let max = outs.iter().flatten().copied().fold(0.0, f64::max);
    (max, total.get())
}

pub fn random_wiring(a: &StageAssignment, rng: &mut ChaCha8Rng) -> WiringPlan {
    let mut w = WiringPlan::identity(a);
    for i in 0..a.stages {
        for j in 0..a.columns {
            if SliceShape::of(a, i, j).has_cells() {
                w.perms[i][j].shuffle(rng);
            }
        }
    }
    w.method = WireMethod::Random;
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub trials: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `(max - min) / min` in percent.
    pub spread_pct: f64,
}

impl DelayStats {
    pub fn of(samples: &[f64]) -> Self {
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
        let spread_pct = if min > 0.0 { 100.0 * (max - min) / min } else { 0.0 };
        DelayStats { trials: samples.len(), min, max, mean, spread_pct }
    }
}

/// Critical delays of `trials` random wirings. Trial `t` draws from its own
/// ChaCha stream `t` under `seed`, so the result does not depend on how the
/// trials are scheduled.
pub fn sample_random_wirings(
    a: &StageAssignment,
    d: &DelayTable,
    inputs: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> (Vec<f64>, DelayStats) {
    let samples = par::map_range(trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let w = random_wiring(a, &mut rng);
        evaluate_wiring(a, &w, d, inputs).max
    });
    let stats = DelayStats::of(&samples);
    (samples, stats)
}

/// Timing-driven initial wiring: in every slice, the latest sources become
/// passthroughs, the next latest go to 3:2 C ports (the fast input), and the
/// earliest feed the A/B ports.
pub fn greedy_wiring(a: &StageAssignment, d: &DelayTable, inputs: &[Vec<f64>]) -> WiringPlan {
    let mut w = WiringPlan::identity(a);
    w.method = WireMethod::Heuristic;
    // Arrivals are needed stage by stage, so evaluate incrementally.
    for i in 0..a.stages {
        let prefix = StageAssignment {
            stages: i,
            f: a.f[..i].to_vec(),
            h: a.h[..i].to_vec(),
            pp: a.pp[..=i].to_vec(),
            ..a.clone()
        };
        let wp = WiringPlan { perms: w.perms[..i].to_vec(), method: WireMethod::Heuristic };
        let arr = evaluate_wiring(&prefix, &wp, d, inputs).outputs;
        for j in 0..a.columns {
            let shape = SliceShape::of(a, i, j);
            if !shape.has_cells() {
                continue;
            }
            let mut order: Vec<usize> = (0..shape.size()).collect();
            order.sort_by(|&x, &y| arr[j][x].total_cmp(&arr[j][y]).then(x.cmp(&y)));
            let mut sinks = Vec::with_capacity(shape.size());
            for k in 0..shape.full {
                sinks.push(shape.index(Sink::Full { cell: k, port: 0 }));
                sinks.push(shape.index(Sink::Full { cell: k, port: 1 }));
            }
            for k in 0..shape.half {
                sinks.push(shape.index(Sink::Half { cell: k, port: 0 }));
                sinks.push(shape.index(Sink::Half { cell: k, port: 1 }));
            }
            for k in 0..shape.full {
                sinks.push(shape.index(Sink::Full { cell: k, port: 2 }));
            }
            for k in 0..shape.pass {
                sinks.push(shape.index(Sink::Pass(k)));
            }
            for (rank, &u) in order.iter().enumerate() {
                w.perms[i][j][u] = sinks[rank];
            }
        }
    }
    w
}

/// First-improvement pairwise swaps inside slices, judged by
/// (critical delay, total cell output arrival). `budget` caps the number of
/// cell evaluations so the result is deterministic.
pub fn improve_wiring(a: &StageAssignment, w: &mut WiringPlan, d: &DelayTable, inputs: &[Vec<f64>], budget: u64) {
    let cells = (a.total_full() + a.total_half()).max(1) as u64;
    let mut spent = 0u64;
    let mut best = internal_total(a, w, d, inputs);
    let better = |x: (f64, f64), y: (f64, f64)| x.0 < y.0 - 1e-9 || (x.0 <= y.0 + 1e-9 && x.1 < y.1 - 1e-9);
    loop {
        let mut improved = false;
        for i in 0..a.stages {
            for j in 0..a.columns {
                let shape = SliceShape::of(a, i, j);
                if !shape.has_cells() {
                    continue;
                }
                let m = shape.size();
                for u1 in 0..m {
                    for u2 in u1 + 1..m {
                        let (v1, v2) = (w.perms[i][j][u1], w.perms[i][j][u2]);
                        if equivalent_sinks(&shape, v1, v2) {
                            continue;
                        }
                        if spent >= budget {
                            return;
                        }
                        spent += cells;
                        w.perms[i][j].swap(u1, u2);
                        let cand = internal_total(a, w, d, inputs);
                        if better(cand, best) {
                            best = cand;
                            improved = true;
                        } else {
                            w.perms[i][j].swap(u1, u2);
                        }
                    }
                }
            }
        }
        if !improved {
            return;
        }
    }
}

/// Swapping these two sinks cannot change any arrival.
fn equivalent_sinks(shape: &SliceShape, v1: usize, v2: usize) -> bool {
    match (shape.sink(v1), shape.sink(v2)) {
        (Sink::Pass(_), Sink::Pass(_)) => true,
        (Sink::Full { cell: c1, port: p1 }, Sink::Full { cell: c2, port: p2 }) => c1 == c2 && p1 < 2 && p2 < 2,
        (Sink::Half { cell: c1, .. }, Sink::Half { cell: c2, .. }) => c1 == c2,
        _ => false,
    }
}

#[derive(Clone, Copy, Debug)]
enum Arr {
    Const(f64),
    Var(VarId),
}

impl Arr {
    /// Adds `coeff * self` to `e`; a constant is returned instead (it stays
    /// on the left-hand side).
    fn add_to(self, e: &mut LinExpr, coeff: f64) -> f64 {
        match self {
            Arr::Const(c) => coeff * c,
            Arr::Var(v) => {
                e.add(v, coeff);
                0.0
            }
        }
    }
}

/// Variable handles of a wiring model.
pub struct WiringModel {
    pub model: Model,
    /// `z[i][j][u][v]`, present only for slices with cells and >= 2 sources.
    pub z: Vec<Vec<Option<Vec<Vec<VarId>>>>>,
    pub objective: VarId,
    /// Sink-arrival and cell-output variables in creation order, with the
    /// slice they belong to; used to build starting assignments.
    slots: Vec<Vec<SliceVars>>,
}

#[derive(Clone, Default)]
struct SliceVars {
    sinks: Vec<Option<VarId>>,
    full: Vec<(VarId, VarId)>,
    half: Vec<(VarId, VarId)>,
}

/// Builds the port-ordering model for `a` under `d` with the given tree
/// input arrivals. Big-M constants are per-stage arrival ranges.
pub fn build_wiring_model(a: &StageAssignment, d: &DelayTable, inputs: &[Vec<f64>]) -> Result<WiringModel> {
    for j in 0..a.columns {
        let have = inputs.get(j).map_or(0, Vec::len);
        if have != a.pp[0][j] {
            return Err(Error::Wiring(format!("column {j}: {have} input arrivals for {} sources", a.pp[0][j])));
        }
    }
    let lo = inputs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let lo = if lo.is_finite() { lo } else { 0.0 };
    let hi_in = inputs.iter().flatten().copied().fold(lo, f64::max);
    let dmax = d.max_delay();
    let hi = |stage: usize| hi_in + stage as f64 * dmax;

    let mut m = Model::new("wiring");
    let mut src: Vec<Vec<Arr>> =
        (0..a.columns).map(|j| inputs.get(j).map_or(Vec::new(), |c| c.iter().map(|&t| Arr::Const(t)).collect())).collect();
    let mut zs = Vec::with_capacity(a.stages);
    let mut slots = Vec::with_capacity(a.stages);
    for i in 0..a.stages {
        let st = i + 1;
        let big = hi(i) - lo;
        let mut z_stage = Vec::with_capacity(a.columns);
        let mut slot_stage = Vec::with_capacity(a.columns);
        let mut sums = Vec::with_capacity(a.columns);
        let mut pass = Vec::with_capacity(a.columns);
        let mut carries = Vec::with_capacity(a.columns);
        for j in 0..a.columns {
            let shape = SliceShape::of(a, i, j);
            let n = shape.size();
            if src[j].len() != n {
                return Err(Error::Wiring(format!("slice ({i},{j}) has {} sources for {n} sinks", src[j].len())));
            }
            let mut sv = SliceVars::default();
            let sink_arr: Vec<Arr> = if shape.has_cells() && n >= 2 {
                let mut z = vec![Vec::with_capacity(n); n];
                for (u, zu) in z.iter_mut().enumerate() {
                    for v in 0..n {
                        zu.push(m.add_binary(format!("z_{st}_{j}_{u}_{v}"))?);
                    }
                }
                for u in 0..n {
                    let e: LinExpr = (0..n).map(|v| (z[u][v], 1.0)).collect();
                    m.add_constraint(format!("src_{st}_{j}_{u}"), e, Sense::Eq, 1.0)?;
                }
                for v in 0..n {
                    let e: LinExpr = (0..n).map(|u| (z[u][v], 1.0)).collect();
                    m.add_constraint(format!("snk_{st}_{j}_{v}"), e, Sense::Eq, 1.0)?;
                }
                let mut out = Vec::with_capacity(n);
                for v in 0..n {
                    let wv = m.add_var(format!("w_{st}_{j}_{v}"), VarKind::Continuous, lo, hi(i))?;
                    sv.sinks.push(Some(wv));
                    for u in 0..n {
                        // w_v - src_u <= Z (1 - z_uv) and src_u - w_v <= Z (1 - z_uv)
                        for (dir, tag) in [(1.0, "le"), (-1.0, "ge")] {
                            let mut e = LinExpr::new().term(wv, dir).term(z[u][v], big);
                            let k = src[j][u].add_to(&mut e, -dir);
                            m.add_constraint(format!("eq{tag}_{st}_{j}_{u}_{v}"), e, Sense::Le, big - k)?;
                        }
                    }
                    out.push(Arr::Var(wv));
                }
                z_stage.push(Some(z));
                out
            } else {
                sv.sinks = vec![None; n];
                z_stage.push(None);
                src[j].clone()
            };
            let mut s_out = Vec::new();
            let mut c_out = Vec::new();
            let ge = |m: &mut Model, name: String, out: VarId, input: Arr, delay: f64| -> Result<()> {
                let mut e = LinExpr::new().term(out, 1.0);
                let k = input.add_to(&mut e, -1.0);
                m.add_constraint(name, e, Sense::Ge, delay - k)?;
                Ok(())
            };
            for k in 0..shape.full {
                let s = m.add_var(format!("fs_{st}_{j}_{k}"), VarKind::Continuous, lo, hi(i + 1))?;
                let c = m.add_var(format!("fc_{st}_{j}_{k}"), VarKind::Continuous, lo, hi(i + 1))?;
                let ins = [sink_arr[3 * k], sink_arr[3 * k + 1], sink_arr[3 * k + 2]];
                for (p, (ts, tc)) in [(d.t_as, d.t_ac), (d.t_bs, d.t_bc), (d.t_cs, d.t_cc)].into_iter().enumerate() {
                    ge(&mut m, format!("fsd_{st}_{j}_{k}_{p}"), s, ins[p], ts)?;
                    ge(&mut m, format!("fcd_{st}_{j}_{k}_{p}"), c, ins[p], tc)?;
                }
                sv.full.push((s, c));
                s_out.push(Arr::Var(s));
                c_out.push(Arr::Var(c));
            }
            for k in 0..shape.half {
                let s = m.add_var(format!("hs_{st}_{j}_{k}"), VarKind::Continuous, lo, hi(i + 1))?;
                let c = m.add_var(format!("hc_{st}_{j}_{k}"), VarKind::Continuous, lo, hi(i + 1))?;
                let base = 3 * shape.full + 2 * k;
                for p in 0..2 {
                    ge(&mut m, format!("hsd_{st}_{j}_{k}_{p}"), s, sink_arr[base + p], d.t_s)?;
                    ge(&mut m, format!("hcd_{st}_{j}_{k}_{p}"), c, sink_arr[base + p], d.t_c)?;
                }
                sv.half.push((s, c));
                s_out.push(Arr::Var(s));
                c_out.push(Arr::Var(c));
            }
            let first_pass = 3 * shape.full + 2 * shape.half;
            pass.push(sink_arr[first_pass..].to_vec());
            sums.push(s_out);
            carries.push(c_out);
            slot_stage.push(sv);
        }
        for j in 0..a.columns {
            let mut v = std::mem::take(&mut sums[j]);
            v.append(&mut pass[j]);
            if j > 0 {
                v.extend(carries[j - 1].iter().copied());
            }
            src[j] = v;
        }
        zs.push(z_stage);
        slots.push(slot_stage);
    }
    let obj = m.add_var("M", VarKind::Continuous, lo, f64::INFINITY)?;
    for (j, col) in src.iter().enumerate() {
        for (b, &t) in col.iter().enumerate() {
            let mut e = LinExpr::new().term(obj, 1.0);
            let k = t.add_to(&mut e, -1.0);
            m.add_constraint(format!("out_{j}_{b}"), e, Sense::Ge, -k)?;
        }
    }
    m.set_objective(ObjSense::Minimize, LinExpr::new().term(obj, 1.0))?;
    Ok(WiringModel { model: m, z: zs, objective: obj, slots })
}

impl WiringModel {
    pub fn num_binaries(&self) -> usize {
        self.model.num_integral()
    }

    /// Variable values reproducing wiring `w` with its forward-evaluated
    /// arrivals.
    pub fn encode(&self, a: &StageAssignment, w: &WiringPlan, d: &DelayTable, inputs: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.model.num_vars()];
        // Sink arrivals come from a run where every cell records its inputs.
        let mut sink_times: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); a.columns]; a.stages];
        let mut cur = inputs.to_vec();
        for i in 0..a.stages {
            for j in 0..a.columns {
                let n = a.pp[i][j];
                let mut t = vec![0.0; n];
                for u in 0..n {
                    t[w.perms[i][j][u]] = cur[j][u];
                }
                sink_times[i][j] = t;
            }
            let one = StageAssignment {
                stages: 1,
                f: vec![a.f[i].clone()],
                h: vec![a.h[i].clone()],
                pp: vec![a.pp[i].clone(), a.pp[i + 1].clone()],
                ..a.clone()
            };
            let wi = WiringPlan { perms: vec![w.perms[i].clone()], method: w.method.clone() };
            cur = evaluate_wiring(&one, &wi, d, &cur).outputs;
        }
        for i in 0..a.stages {
            for j in 0..a.columns {
                let sv = &self.slots[i][j];
                let t = &sink_times[i][j];
                if let Some(z) = &self.z[i][j] {
                    for (u, row) in z.iter().enumerate() {
                        x[row[w.perms[i][j][u]].index()] = 1.0;
                    }
                }
                for (v, sink) in sv.sinks.iter().enumerate() {
                    if let Some(var) = sink {
                        x[var.index()] = t[v];
                    }
                }
                for (k, &(s, c)) in sv.full.iter().enumerate() {
                    let (p, q, r) = (t[3 * k], t[3 * k + 1], t[3 * k + 2]);
                    x[s.index()] = (p + d.t_as).max(q + d.t_bs).max(r + d.t_cs);
                    x[c.index()] = (p + d.t_ac).max(q + d.t_bc).max(r + d.t_cc);
                }
                let base = 3 * a.f[i][j];
                for (k, &(s, c)) in sv.half.iter().enumerate() {
                    let (p, q) = (t[base + 2 * k], t[base + 2 * k + 1]);
                    x[s.index()] = (p + d.t_s).max(q + d.t_s);
                    x[c.index()] = (p + d.t_c).max(q + d.t_c);
                }
            }
        }
        x[self.objective.index()] = cur.iter().flatten().copied().fold(0.0, f64::max);
        x
    }

    pub fn decode(&self, a: &StageAssignment, sol: &ilp::Solution) -> Result<WiringPlan> {
        let mut w = WiringPlan::identity(a);
        w.method = WireMethod::Ilp;
        for i in 0..a.stages {
            for j in 0..a.columns {
                if let Some(z) = &self.z[i][j] {
                    for (u, row) in z.iter().enumerate() {
                        let hits: Vec<usize> = (0..row.len()).filter(|&v| sol.value(row[v]) > 0.5).collect();
                        if hits.len() != 1 {
                            return Err(Error::Consistency(format!("slice ({i},{j}) source {u} maps to {hits:?}")));
                        }
                        w.perms[i][j][u] = hits[0];
                    }
                }
            }
        }
        w.validate(a)?;
        Ok(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireStrategy {
    Identity,
    Heuristic,
    Ilp,
}

#[derive(Clone, Debug)]
pub struct WireOptions {
    pub strategy: WireStrategy,
    pub solve: SolveOptions,
    /// Cell evaluations allowed for the swap search.
    pub search_budget: u64,
    /// Above this many binaries the ILP is skipped and the heuristic result
    /// is used as is.
    pub max_binaries: usize,
}

impl Default for WireOptions {
    fn default() -> Self {
        WireOptions {
            strategy: WireStrategy::Ilp,
            solve: SolveOptions::default().with_time_limit(Duration::from_secs(3600)).with_node_limit(60),
            search_budget: 50_000_000,
            max_binaries: 6_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WireReport {
    pub heuristic_delay: f64,
    pub delay: f64,
    pub binaries: usize,
    pub status: String,
    pub nodes: usize,
    pub hit_limit: bool,
    /// ILP objective of the decoded wiring (equals `delay` when present).
    pub ilp_objective: Option<f64>,
}

/// Chooses a wiring for `a`: the timing-driven greedy order refined by the
/// swap search, then (if enabled and small enough) the ILP seeded with it.
pub fn optimize_wiring(
    a: &StageAssignment,
    d: &DelayTable,
    inputs: &[Vec<f64>],
    opts: &WireOptions,
) -> Result<(WiringPlan, WireReport)> {
    if opts.strategy == WireStrategy::Identity {
        let w = WiringPlan::identity(a);
        let delay = evaluate_wiring(a, &w, d, inputs).max;
        return Ok((w, WireReport { heuristic_delay: delay, delay, status: "identity".into(), ..Default::default() }));
    }
    let mut w = greedy_wiring(a, d, inputs);
    improve_wiring(a, &mut w, d, inputs, opts.search_budget);
    let h_delay = evaluate_wiring(a, &w, d, inputs).max;
    let mut report = WireReport { heuristic_delay: h_delay, delay: h_delay, status: "heuristic".into(), ..Default::default() };
    if opts.strategy == WireStrategy::Heuristic {
        return Ok((w, report));
    }
    let wm = build_wiring_model(a, d, inputs)?;
    report.binaries = wm.num_binaries();
    if report.binaries > opts.max_binaries {
        log::info!("wiring model has {} binaries (limit {}); keeping the heuristic wiring", report.binaries, opts.max_binaries);
        report.status = "heuristic (model too large)".into();
        return Ok((w, report));
    }
    let mut so = opts.solve.clone();
    so.initial = Some(wm.encode(a, &w, d, inputs));
    let sol = ilp::solve(&wm.model, &so)?;
    report.status = sol.status.as_str().into();
    report.nodes = sol.stats.nodes;
    report.hit_limit = sol.stats.hit_limit;
    match sol.status {
        Status::Infeasible => return Err(Error::Infeasible("wiring".into())),
        Status::Timeout => return Err(Error::NoIncumbent("wiring".into())),
        _ => {}
    }
    let decoded = wm.decode(a, &sol)?;
    let delay = evaluate_wiring(a, &decoded, d, inputs).max;
    // The big-M rows must not let the model disagree with the evaluator.
    if (delay - sol.objective).abs() > 1e-6 {
        return Err(Error::Consistency(format!(
            "wiring model objective {} differs from evaluated delay {delay}",
            sol.objective
        )));
    }
    report.ilp_objective = Some(sol.objective);
    report.delay = delay;
    Ok((decoded, report))
}

/// Samples as CSV: `trial,delay`.
pub fn samples_csv(samples: &[f64]) -> String {
    let mut s = String::from("trial,delay\n");
    for (t, d) in samples.iter().enumerate() {
        s.push_str(&format!("{t},{d}\n"));
    }
    s
}

/// Histogram of `samples` as a standalone SVG bar chart.
pub fn histogram_svg(samples: &[f64], bins: usize, title: &str) -> String {
    let bins = bins.max(1);
    let st = DelayStats::of(samples);
    let span = (st.max - st.min).max(1e-9);
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = (((x - st.min) / span) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let bw = (w - 2.0 * pad) / bins as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        xml_escape(title)
    );
    for (b, &c) in counts.iter().enumerate() {
        let bh = (h - 2.0 * pad) * c as f64 / peak;
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4a7ab5\"/>\n",
            pad + b as f64 * bw,
            h - pad - bh,
            (bw - 1.0).max(0.5),
            bh
        ));
    }
    out.push_str(&format!(
        "<text x=\"{pad}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{:.3}</text>\n</svg>\n",
        h - pad + 16.0,
        st.min,
        w - pad,
        h - pad + 16.0,
        st.max
    ));
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct_assign::greedy_assignment;
    use crate::ct_plan::plan_heights;

    #[test]
    fn sink_indexing_round_trips() {
        let s = SliceShape { full: 2, half: 1, pass: 2 };
        for v in 0..s.size() {
            assert_eq!(s.index(s.sink(v)), v);
        }
        assert_eq!(s.sink(5), Sink::Full { cell: 1, port: 2 });
        assert_eq!(s.sink(7), Sink::Half { cell: 0, port: 1 });
        assert_eq!(s.sink(8), Sink::Pass(0));
    }

    #[test]
    fn single_full_adder_timing() {
        let plans = plan_heights(&[4]);
        let a = greedy_assignment(&plans).unwrap();
        assert_eq!((a.f[0][0], a.stages), (1, 1));
        let d = DelayTable::default();
        let t = evaluate_wiring(&a, &WiringPlan::identity(&a), &d, &zero_arrivals(&a));
        // Column 0: sum at 3.0 plus the passthrough at 0; column 1: carry.
        assert_eq!(t.outputs[0], vec![3.0, 0.0]);
        assert_eq!(t.outputs[1], vec![2.5]);
    }
}
