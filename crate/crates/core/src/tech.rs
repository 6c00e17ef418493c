//! Gate library: kinds, delays, area weights, and the compressor port
//! delay table derived from them.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    And,
    Nand,
    Nor,
    Xor,
    Xnor,
    /// `!((a1 | a2) & b)`, inputs ordered `[a1, a2, b]`.
    Oai21,
    /// `!((a1 & a2) | b)`, inputs ordered `[a1, a2, b]`.
    Aoi21,
    Inv,
}

impl GateKind {
    pub const ALL: [GateKind; 8] = [
        GateKind::And,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Oai21,
        GateKind::Aoi21,
        GateKind::Inv,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Inv => 1,
            GateKind::Oai21 | GateKind::Aoi21 => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Oai21 => "OAI21",
            GateKind::Aoi21 => "AOI21",
            GateKind::Inv => "INV",
        }
    }

    pub fn from_name(s: &str) -> Option<GateKind> {
        GateKind::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Bitwise evaluation over 64 packed vectors.
    #[inline]
    pub fn eval(self, i: &[u64]) -> u64 {
        match self {
            GateKind::And => i[0] & i[1],
            GateKind::Nand => !(i[0] & i[1]),
            GateKind::Nor => !(i[0] | i[1]),
            GateKind::Xor => i[0] ^ i[1],
            GateKind::Xnor => !(i[0] ^ i[1]),
            GateKind::Oai21 => !((i[0] | i[1]) & i[2]),
            GateKind::Aoi21 => !((i[0] & i[1]) | i[2]),
            GateKind::Inv => !i[0],
        }
    }

    pub fn eval_bool(self, i: &[bool]) -> bool {
        let w: Vec<u64> = i.iter().map(|&b| b as u64).collect();
        self.eval(&w) & 1 == 1
    }
}

/// Per-kind value table used for delays and areas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerKind {
    pub and: f64,
    pub nand: f64,
    pub nor: f64,
    pub xor: f64,
    pub xnor: f64,
    pub oai21: f64,
    pub aoi21: f64,
    pub inv: f64,
}

impl PerKind {
    pub fn get(&self, k: GateKind) -> f64 {
        match k {
            GateKind::And => self.and,
            GateKind::Nand => self.nand,
            GateKind::Nor => self.nor,
            GateKind::Xor => self.xor,
            GateKind::Xnor => self.xnor,
            GateKind::Oai21 => self.oai21,
            GateKind::Aoi21 => self.aoi21,
            GateKind::Inv => self.inv,
        }
    }

    pub fn uniform(v: f64) -> Self {
        PerKind { and: v, nand: v, nor: v, xor: v, xnor: v, oai21: v, aoi21: v, inv: v }
    }

    fn all_nonneg(&self) -> bool {
        GateKind::ALL.iter().all(|&k| self.get(k) >= 0.0 && self.get(k).is_finite())
    }
}

/// Gate delay: `intrinsic + load * fanout`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateDelays {
    pub intrinsic: PerKind,
    #[serde(default = "zero_load")]
    pub load: PerKind,
}

fn zero_load() -> PerKind {
    PerKind::uniform(0.0)
}

impl Default for GateDelays {
    /// Load-independent unit delays: XOR/XNOR 1.5, everything else 1.0.
    fn default() -> Self {
        GateDelays {
            intrinsic: PerKind { and: 1.0, nand: 1.0, nor: 1.0, xor: 1.5, xnor: 1.5, oai21: 1.0, aoi21: 1.0, inv: 1.0 },
            load: zero_load(),
        }
    }
}

impl GateDelays {
    /// Fanout-dependent delays in the style of logical effort: parasitic
    /// delay plus logical effort per driven input, in units of a fanout-1
    /// inverter. Used as a ground truth for fitting path-delay models.
    pub fn logical_effort() -> Self {
        GateDelays {
            intrinsic: PerKind { and: 3.0, nand: 2.0, nor: 2.0, xor: 4.0, xnor: 4.0, oai21: 3.0, aoi21: 3.0, inv: 1.0 },
            load: PerKind { and: 1.0, nand: 4.0 / 3.0, nor: 5.0 / 3.0, xor: 4.0, xnor: 4.0, oai21: 2.0, aoi21: 2.0, inv: 1.0 },
        }
    }

    pub fn delay(&self, kind: GateKind, fanout: usize) -> f64 {
        self.intrinsic.get(kind) + self.load.get(kind) * fanout as f64
    }

    pub fn is_load_independent(&self) -> bool {
        GateKind::ALL.iter().all(|&k| self.load.get(k) == 0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.intrinsic.all_nonneg() && self.load.all_nonneg() {
            Ok(())
        } else {
            Err("gate delays must be finite and non-negative".into())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AreaWeights(pub PerKind);

impl Default for AreaWeights {
    fn default() -> Self {
        AreaWeights(PerKind { and: 1.0, nand: 0.5, nor: 0.5, xor: 1.0, xnor: 1.0, oai21: 0.75, aoi21: 0.75, inv: 0.25 })
    }
}

impl AreaWeights {
    pub fn get(&self, k: GateKind) -> f64 {
        self.0.get(k)
    }

    /// Area of the full-adder cell built by the netlist elaborator.
    pub fn full_adder(&self) -> f64 {
        FULL_ADDER_GATES.iter().map(|&k| self.get(k)).sum()
    }

    /// Area of the half-adder cell (XOR + AND).
    pub fn half_adder(&self) -> f64 {
        HALF_ADDER_GATES.iter().map(|&k| self.get(k)).sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.0.all_nonneg() {
            Ok(())
        } else {
            Err("area weights must be finite and non-negative".into())
        }
    }
}

/// Gates in one 3:2 cell: `xn = XNOR(a,b)`, `s = XNOR(xn,c)`,
/// `nd = NAND(a,b)`, `cn = INV(c)`, `co = OAI21(xn, cn, nd)`.
pub const FULL_ADDER_GATES: [GateKind; 5] =
    [GateKind::Xnor, GateKind::Xnor, GateKind::Nand, GateKind::Inv, GateKind::Oai21];
/// Gates in one 2:2 cell.
pub const HALF_ADDER_GATES: [GateKind; 2] = [GateKind::Xor, GateKind::And];

/// Input-to-output delays of the compressor cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayTable {
    pub t_as: f64,
    pub t_bs: f64,
    pub t_cs: f64,
    pub t_ac: f64,
    pub t_bc: f64,
    pub t_cc: f64,
    /// 2:2 input to sum.
    pub t_s: f64,
    /// 2:2 input to carry.
    pub t_c: f64,
}

impl Default for DelayTable {
    fn default() -> Self {
        DelayTable::from_gate_delays(&GateDelays::default())
    }
}

impl DelayTable {
    /// Port delays of the cells in [`FULL_ADDER_GATES`]/[`HALF_ADDER_GATES`]
    /// at unit fanout.
    pub fn from_gate_delays(g: &GateDelays) -> Self {
        let d = |k| g.delay(k, 1);
        let xn = d(GateKind::Xnor);
        let oai = d(GateKind::Oai21);
        let ab_to_carry = (xn + oai).max(d(GateKind::Nand) + oai);
        DelayTable {
            t_as: 2.0 * xn,
            t_bs: 2.0 * xn,
            t_cs: xn,
            t_ac: ab_to_carry,
            t_bc: ab_to_carry,
            t_cc: d(GateKind::Inv) + oai,
            t_s: d(GateKind::Xor),
            t_c: d(GateKind::And),
        }
    }

    pub fn max_delay(&self) -> f64 {
        [self.t_as, self.t_bs, self.t_cs, self.t_ac, self.t_bc, self.t_cc, self.t_s, self.t_c]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.t_as, self.t_bs, self.t_cs, self.t_ac, self.t_bc, self.t_cc, self.t_s, self.t_c];
        if all.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err("compressor delays must be finite and non-negative".into())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_values() {
        let t = DelayTable::default();
        assert_eq!((t.t_as, t.t_bs, t.t_cs), (3.0, 3.0, 1.5));
        assert_eq!((t.t_ac, t.t_bc, t.t_cc), (2.5, 2.5, 2.0));
        assert_eq!((t.t_s, t.t_c), (1.5, 1.0));
        // Two XORs against NAND followed by OAI.
        let g = GateDelays::default();
        let ratio = 2.0 * g.delay(GateKind::Xor, 1) / (g.delay(GateKind::Nand, 1) + g.delay(GateKind::Oai21, 1));
        assert!((ratio - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cell_logic_matches_adder_truth_tables() {
        for v in 0..8u32 {
            let (a, b, c) = (v & 1 == 1, v >> 1 & 1 == 1, v >> 2 & 1 == 1);
            let xn = GateKind::Xnor.eval_bool(&[a, b]);
            let s = GateKind::Xnor.eval_bool(&[xn, c]);
            let nd = GateKind::Nand.eval_bool(&[a, b]);
            let cn = GateKind::Inv.eval_bool(&[c]);
            let co = GateKind::Oai21.eval_bool(&[xn, cn, nd]);
            let total = a as u32 + b as u32 + c as u32;
            assert_eq!(s as u32 + 2 * co as u32, total, "inputs {v:03b}");
        }
    }

    #[test]
    fn area_ratio() {
        let w = AreaWeights::default();
        assert_eq!(w.full_adder(), 3.5);
        assert_eq!(w.half_adder(), 2.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in GateKind::ALL {
            assert_eq!(GateKind::from_name(k.name()), Some(k));
        }
    }
}
