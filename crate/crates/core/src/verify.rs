//! Netlist simulation, equivalence against integer arithmetic, and the
//! brute-force compressor enumerator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{Function, Netlist, Signal};
use crate::tech::GateKind;
use crate::{par, Error, Result};

/// Largest input width checked exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Bit-parallel evaluator: each `u64` carries 64 independent vectors.
pub struct Simulator<'a> {
    nl: &'a Netlist,
    order: Vec<usize>,
}

impl<'a> Simulator<'a> {
    pub fn new(nl: &'a Netlist) -> Result<Self> {
        Ok(Simulator { nl, order: nl.topo_order()? })
    }

    /// `inputs[p][k]` holds bit `k` of input port `p`; the result is laid
    /// out the same way for the output ports.
    pub fn run(&self, inputs: &[Vec<u64>]) -> Result<Vec<Vec<u64>>> {
        let nl = self.nl;
        if inputs.len() != nl.inputs.len() {
            return Err(Error::Verify(format!("{} input ports assigned, netlist has {}", inputs.len(), nl.inputs.len())));
        }
        let mut v = vec![0u64; nl.num_nets()];
        for (p, words) in nl.inputs.iter().zip(inputs) {
            if words.len() != p.bits.len() {
                return Err(Error::Verify(format!("port {} needs {} bits, got {}", p.name, p.bits.len(), words.len())));
            }
            for (s, &w) in p.bits.iter().zip(words) {
                if let Signal::Net(n) = s {
                    v[*n] = w;
                }
            }
        }
        let word = |v: &[u64], s: Signal| match s {
            Signal::Zero => 0,
            Signal::One => u64::MAX,
            Signal::Net(n) => v[n],
        };
        let mut ins = [0u64; 3];
        for &k in &self.order {
            let g = &nl.gates[k];
            for (slot, &s) in ins.iter_mut().zip(&g.inputs) {
                *slot = word(&v, s);
            }
            v[g.output] = g.kind.eval(&ins[..g.inputs.len()]);
        }
        Ok(nl.outputs.iter().map(|p| p.bits.iter().map(|&s| word(&v, s)).collect()).collect())
    }
}

/// Evaluates one vector given as an integer per input port (ports of at
/// most 128 bits).
pub fn simulate(nl: &Netlist, inputs: &[u128]) -> Result<Vec<u128>> {
    let words: Vec<Vec<u64>> = nl
        .inputs
        .iter()
        .zip(inputs)
        .map(|(p, &x)| (0..p.bits.len()).map(|k| if k < 128 && (x >> k) & 1 == 1 { 1 } else { 0 }).collect())
        .collect();
    if inputs.len() != nl.inputs.len() {
        return Err(Error::Verify(format!("{} input values for {} ports", inputs.len(), nl.inputs.len())));
    }
    let out = Simulator::new(nl)?.run(&words)?;
    out.iter()
        .zip(&nl.outputs)
        .map(|(bits, p)| {
            if bits.len() > 128 {
                return Err(Error::Verify(format!("port {} is wider than 128 bits", p.name)));
            }
            Ok(bits.iter().enumerate().fold(0u128, |acc, (k, &w)| acc | (u128::from(w & 1) << k)))
        })
        .collect()
}

/// Second evaluator: demand-driven from the outputs with memoization, one
/// vector at a time.
pub fn evaluate_recursive(nl: &Netlist, inputs: &[Vec<bool>]) -> Result<Vec<Vec<bool>>> {
    let drivers = nl.drivers();
    let mut memo: Vec<Option<bool>> = vec![None; nl.num_nets()];
    for (p, bits) in nl.inputs.iter().zip(inputs) {
        for (s, &b) in p.bits.iter().zip(bits) {
            if let Signal::Net(n) = s {
                memo[*n] = Some(b);
            }
        }
    }
    fn value(nl: &Netlist, drivers: &[Option<usize>], memo: &mut Vec<Option<bool>>, s: Signal, depth: usize) -> Result<bool> {
        let n = match s {
            Signal::Zero => return Ok(false),
            Signal::One => return Ok(true),
            Signal::Net(n) => n,
        };
        if let Some(b) = memo[n] {
            return Ok(b);
        }
        if depth > nl.gates.len() {
            return Err(Error::Cycle(vec![nl.net_names[n].clone()]));
        }
        let g = &nl.gates[drivers[n].ok_or_else(|| Error::Verify(format!("net {} is unassigned", nl.net_names[n])))?];
        let mut ins = [false; 3];
        for (slot, &s) in ins.iter_mut().zip(&g.inputs) {
            *slot = value(nl, drivers, memo, s, depth + 1)?;
        }
        let b = g.kind.eval_bool(&ins[..g.inputs.len()]);
        memo[n] = Some(b);
        Ok(b)
    }
    nl.outputs
        .iter()
        .map(|p| p.bits.iter().map(|&s| value(nl, &drivers, &mut memo, s, 0)).collect())
        .collect()
}

/// Unsigned integer of up to 192 bits, enough for every checked function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Wide([u64; 3]);

impl Wide {
    fn from_u128(x: u128) -> Self {
        Wide([x as u64, (x >> 64) as u64, 0])
    }

    fn from_bits(bits: impl Iterator<Item = bool>) -> Self {
        let mut w = Wide::default();
        for (k, b) in bits.enumerate() {
            if b {
                w.0[k / 64] |= 1 << (k % 64);
            }
        }
        w
    }

    fn bit(k: usize) -> Self {
        let mut w = Wide::default();
        w.0[k / 64] = 1 << (k % 64);
        w
    }

    fn add(self, o: Wide) -> Self {
        let mut r = [0u64; 3];
        let mut carry = false;
        for i in 0..3 {
            let (s1, c1) = self.0[i].overflowing_add(o.0[i]);
            let (s2, c2) = s1.overflowing_add(u64::from(carry));
            r[i] = s2;
            carry = c1 || c2;
        }
        Wide(r)
    }

    fn hex(self) -> String {
        format!("0x{:016x}{:016x}{:016x}", self.0[2], self.0[1], self.0[0])
    }
}

fn bits_hex(bits: &[bool]) -> String {
    if bits.is_empty() {
        return "0x0".into();
    }
    let mut s = String::from("0x");
    for chunk in (0..bits.len().div_ceil(4)).rev() {
        let nib = (0..4).filter(|&i| bits.get(4 * chunk + i).copied().unwrap_or(false)).fold(0u32, |a, i| a | 1 << i);
        s.push(char::from_digit(nib, 16).expect("nibble"));
    }
    s
}

fn port_value(bits: &[bool]) -> u128 {
    bits.iter().take(128).enumerate().fold(0, |a, (k, &b)| a | (u128::from(b) << k))
}

fn check_shape(nl: &Netlist) -> Result<()> {
    let widths: Vec<usize> = nl.inputs.iter().map(|p| p.bits.len()).collect();
    let outs: Vec<usize> = nl.outputs.iter().map(|p| p.bits.len()).collect();
    let ok = match &nl.function {
        Function::Multiplier { width } => widths == [*width, *width] && *width <= 64,
        Function::Mac { width, acc_width } => widths == [*width, *width, *acc_width] && *width <= 64 && *acc_width <= 128,
        Function::Adder { width } => widths == [*width, *width] && *width <= 128,
        Function::TreeSum { columns } => widths == [columns.len()] && outs.len() == 2 && columns.iter().all(|&c| c < 160),
    };
    if !ok || outs.iter().any(|&w| w > 190) {
        return Err(Error::Verify(format!("port widths {widths:?} -> {outs:?} do not fit {:?}", nl.function)));
    }
    Ok(())
}

/// Reference and observed values for one vector.
fn judge(f: &Function, ins: &[Vec<bool>], outs: &[Vec<bool>]) -> (Wide, Wide) {
    match f {
        Function::Multiplier { .. } => {
            (Wide::from_u128(port_value(&ins[0]) * port_value(&ins[1])), Wide::from_bits(outs[0].iter().copied()))
        }
        Function::Mac { .. } => {
            let p = Wide::from_u128(port_value(&ins[0]) * port_value(&ins[1]));
            (p.add(Wide::from_u128(port_value(&ins[2]))), Wide::from_bits(outs[0].iter().copied()))
        }
        Function::Adder { .. } => (
            Wide::from_u128(port_value(&ins[0])).add(Wide::from_u128(port_value(&ins[1]))),
            Wide::from_bits(outs[0].iter().copied()),
        ),
        Function::TreeSum { columns } => {
            let want = ins[0].iter().zip(columns).filter(|(b, _)| **b).fold(Wide::default(), |a, (_, &c)| a.add(Wide::bit(c)));
            let got = Wide::from_bits(outs[0].iter().copied()).add(Wide::from_bits(outs[1].iter().copied()));
            (want, got)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exhaustive,
    Random,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub mode: Option<Mode>,
    /// Random vectors in addition to the corner cases.
    pub vectors: u64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { mode: None, vectors: 1_000_000, seed: 1 }
    }
}

/// A failing input vector, as written to disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub function: Function,
    /// Input port values in hex.
    pub inputs: BTreeMap<String, String>,
    pub expected: String,
    pub observed: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub mode: Mode,
    pub vectors: u64,
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

/// Input words for one 64-lane batch.
type Batch = Vec<Vec<u64>>;

fn corner_patterns(width: usize) -> Vec<Vec<bool>> {
    let mask = |f: &dyn Fn(usize) -> bool| (0..width).map(f).collect::<Vec<bool>>();
    vec![mask(&|_| false), mask(&|k| k == 0), mask(&|_| true), mask(&|k| k % 2 == 0), mask(&|k| k % 2 == 1)]
}

/// Corner vectors: every pattern pair on the first two ports, with the
/// remaining ports cycling through the patterns too.
fn corner_vectors(widths: &[usize]) -> Vec<Vec<Vec<bool>>> {
    let pats: Vec<Vec<Vec<bool>>> = widths.iter().map(|&w| corner_patterns(w)).collect();
    let mut out = Vec::new();
    let n = 5;
    for x in 0..n {
        for y in 0..n {
            out.push((0..widths.len()).map(|p| pats[p][[x, y, (x + y) % n][p.min(2)]].clone()).collect());
        }
    }
    if widths.len() > 2 {
        for z in 0..n {
            out.push((0..widths.len()).map(|p| pats[p][if p >= 2 { z } else { 2 }].clone()).collect());
        }
    }
    out
}

fn pack(vectors: &[Vec<Vec<bool>>], widths: &[usize]) -> Batch {
    let mut b: Batch = widths.iter().map(|&w| vec![0u64; w]).collect();
    for (lane, v) in vectors.iter().enumerate() {
        for (p, bits) in v.iter().enumerate() {
            for (k, &bit) in bits.iter().enumerate() {
                if bit {
                    b[p][k] |= 1 << lane;
                }
            }
        }
    }
    b
}

fn lane(words: &[Vec<u64>], l: usize) -> Vec<Vec<bool>> {
    words.iter().map(|p| p.iter().map(|w| (w >> l) & 1 == 1).collect()).collect()
}

fn check_batch(nl: &Netlist, sim: &Simulator, batch: &Batch, lanes: usize) -> Result<Option<Counterexample>> {
    let out = sim.run(batch)?;
    for l in 0..lanes {
        let ins = lane(batch, l);
        let outs = lane(&out, l);
        let (want, got) = judge(&nl.function, &ins, &outs);
        if want != got {
            return Ok(Some(Counterexample {
                function: nl.function.clone(),
                inputs: nl.inputs.iter().zip(&ins).map(|(p, b)| (p.name.clone(), bits_hex(b))).collect(),
                expected: want.hex(),
                observed: got.hex(),
            }));
        }
    }
    Ok(None)
}

/// Checks the netlist against the integer function it declares.
/// Exhaustive up to [`EXHAUSTIVE_LIMIT`] input bits unless a mode is
/// forced; random mode adds corner vectors to `opts.vectors` random ones.
pub fn check_equivalence(nl: &Netlist, opts: &VerifyOptions) -> Result<VerifyReport> {
    check_shape(nl)?;
    let sim = Simulator::new(nl)?;
    let widths: Vec<usize> = nl.inputs.iter().map(|p| p.bits.len()).collect();
    let total = nl.input_width();
    let mode = opts.mode.clone().unwrap_or(if total <= EXHAUSTIVE_LIMIT { Mode::Exhaustive } else { Mode::Random });
    let (batches, vectors): (Vec<Batch>, u64) = match mode {
        Mode::Exhaustive => {
            if total > EXHAUSTIVE_LIMIT {
                return Err(Error::Verify(format!("{total} input bits is too many for exhaustive checking")));
            }
            let n = 1u64 << total;
            let nb = n.div_ceil(64) as usize;
            let make = |b: usize| -> Batch {
                let mut words: Batch = widths.iter().map(|&w| vec![0u64; w]).collect();
                for l in 0..64u64 {
                    let v = (b as u64 * 64 + l) % n;
                    let mut t = 0;
                    for p in &mut words {
                        for w in p.iter_mut() {
                            *w |= ((v >> t) & 1) << l;
                            t += 1;
                        }
                    }
                }
                words
            };
            let fails = par::map_range(nb, |b| check_batch(nl, &sim, &make(b), 64));
            return finish(mode, n, fails);
        }
        Mode::Random => {
            let corners = corner_vectors(&widths);
            (corners.chunks(64).map(|c| pack(c, &widths)).collect(), corners.len() as u64)
        }
    };
    let mut fails: Vec<Result<Option<Counterexample>>> = Vec::new();
    let corner_total = vectors;
    for (k, b) in batches.iter().enumerate() {
        let lanes = (corner_total as usize - 64 * k).min(64);
        fails.push(check_batch(nl, &sim, b, lanes));
    }
    let nb = opts.vectors.div_ceil(64) as usize;
    let random = par::map_range(nb, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(b as u64);
        let words: Batch = widths.iter().map(|&w| (0..w).map(|_| rng.random::<u64>()).collect()).collect();
        let lanes = (opts.vectors - 64 * b as u64).min(64) as usize;
        check_batch(nl, &sim, &words, lanes)
    });
    fails.extend(random);
    finish(mode, corner_total + opts.vectors, fails)
}

fn finish(mode: Mode, vectors: u64, fails: Vec<Result<Option<Counterexample>>>) -> Result<VerifyReport> {
    for f in fails {
        if let Some(cx) = f? {
            return Ok(VerifyReport { mode, vectors, passed: false, counterexample: Some(cx) });
        }
    }
    Ok(VerifyReport { mode, vectors, passed: true, counterexample: None })
}

/// Compares the bit-parallel simulator with [`evaluate_recursive`] on
/// random vectors; returns the number of vectors compared.
pub fn cross_check(nl: &Netlist, vectors: usize, seed: u64) -> Result<usize> {
    let sim = Simulator::new(nl)?;
    let widths: Vec<usize> = nl.inputs.iter().map(|p| p.bits.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    while done < vectors {
        let words: Batch = widths.iter().map(|&w| (0..w).map(|_| rng.random::<u64>()).collect()).collect();
        let out = sim.run(&words)?;
        let lanes = (vectors - done).min(64);
        for l in 0..lanes {
            let want = evaluate_recursive(nl, &lane(&words, l))?;
            if want != lane(&out, l) {
                return Err(Error::Verify(format!("simulators disagree on vector {}", done + l)));
            }
        }
        done += lanes;
    }
    Ok(done)
}

/// Copy of `nl` with gate `k` swapped to another kind of the same arity.
pub fn mutate(nl: &Netlist, k: usize) -> Netlist {
    let mut m = nl.clone();
    let g = &mut m.gates[k];
    g.kind = match g.kind {
        GateKind::And => GateKind::Nand,
        GateKind::Nand => GateKind::And,
        GateKind::Nor => GateKind::Xor,
        GateKind::Xor => GateKind::Xnor,
        GateKind::Xnor => GateKind::Xor,
        GateKind::Oai21 => GateKind::Aoi21,
        GateKind::Aoi21 => GateKind::Oai21,
        GateKind::Inv => {
            // The only one-input kind: bypass it instead.
            let src = g.inputs[0];
            let out = g.output;
            m.gates.remove(k);
            let fix = |s: &mut Signal| {
                if *s == Signal::Net(out) {
                    *s = src;
                }
            };
            for g in &mut m.gates {
                g.inputs.iter_mut().for_each(fix);
            }
            for p in &mut m.outputs {
                p.bits.iter_mut().for_each(fix);
            }
            return m;
        }
    };
    m
}

/// Minimum-area compressor counts found by enumeration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BruteForceCt {
    /// In units of 3 per 3:2 and 2 per 2:2.
    pub area: usize,
    /// `(3:2, 2:2)` per column of the first minimum found.
    pub counts: Vec<(usize, usize)>,
    /// Number of distinct count vectors reaching the minimum.
    pub minima: usize,
}

/// Enumerates every per-column placement of 3:2 and 2:2 compressors that
/// leaves at most two bits in each column. A column with `t` bits (its own
/// plus incoming carries) admits `f` 3:2 and `h` 2:2 cells when their
/// inputs can be drawn from those bits and the sums of other cells in the
/// column, which holds iff `2f + h <= t - 1` (or no cells at all).
pub fn brute_force_ct(heights: &[usize]) -> Result<BruteForceCt> {
    let total: usize = heights.iter().sum();
    if total > 6 || heights.len() > 4 {
        return Err(Error::Verify(format!("instance {heights:?} exceeds 6 bits or 4 columns")));
    }
    struct Search {
        best: Option<(usize, Vec<(usize, usize)>)>,
        minima: usize,
    }
    fn go(h: &[usize], j: usize, carry: usize, area: usize, counts: &mut Vec<(usize, usize)>, s: &mut Search) {
        if j >= h.len() && carry == 0 {
            match &s.best {
                Some((b, _)) if *b < area => {}
                Some((b, _)) if *b == area => s.minima += 1,
                _ => {
                    s.best = Some((area, counts.clone()));
                    s.minima = 1;
                }
            }
            return;
        }
        let t = h.get(j).copied().unwrap_or(0) + carry;
        for f in 0..=t / 2 {
            for hh in 0..=t {
                let cells = f + hh;
                if cells > 0 && 2 * f + hh + 1 > t {
                    break;
                }
                if t - 2 * f - hh > 2 {
                    continue;
                }
                counts.push((f, hh));
                go(h, j + 1, cells, area + 3 * f + 2 * hh, counts, s);
                counts.pop();
            }
        }
    }
    let mut s = Search { best: None, minima: 0 };
    go(heights, 0, 0, 0, &mut Vec::new(), &mut s);
    let (area, mut counts) = s.best.ok_or_else(|| Error::Verify("no legal placement".into()))?;
    while counts.len() > heights.len() && counts.last() == Some(&(0, 0)) {
        counts.pop();
    }
    Ok(BruteForceCt { area, counts, minima: s.minima })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_addition_carries() {
        let a = Wide::from_u128(u128::MAX);
        let b = a.add(Wide::from_u128(1));
        assert_eq!(b, Wide([0, 0, 1]));
        assert_eq!(bits_hex(&[true, false, false, true, true]), "0x19");
    }

    #[test]
    fn corners_cover_extremes() {
        let c = corner_vectors(&[4, 4, 8]);
        assert_eq!(c.len(), 30);
        assert!(c.iter().any(|v| v.iter().all(|p| p.iter().all(|&b| b))));
        assert!(c.iter().any(|v| v.iter().all(|p| p.iter().all(|&b| !b))));
    }
}
