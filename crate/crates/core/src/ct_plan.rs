//! Per-column 3:2 / 2:2 compressor counts and the stage lower bound.

use serde::{Deserialize, Serialize};

use crate::ppg::PartialProductMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnPlan {
    /// Bits originating in this column (partial products and accumulator).
    pub pp: usize,
    /// 3:2 compressors.
    pub f: usize,
    /// 2:2 compressors (0 or 1).
    pub h: usize,
    pub carry_in: usize,
    pub carry_out: usize,
    /// Bits left for the final adder.
    pub outputs: usize,
}

impl ColumnPlan {
    pub fn total(&self) -> usize {
        self.pp + self.carry_in
    }
}

/// Plans one column holding `pp` bits that receives `carry_in` carries.
pub fn plan_column(pp: usize, carry_in: usize) -> ColumnPlan {
    let t = pp + carry_in;
    let (f, h) = if t <= 2 {
        (0, 0)
    } else if t.is_multiple_of(2) {
        ((t - 2) / 2, 0)
    } else {
        ((t - 3) / 2, 1)
    };
    ColumnPlan { pp, f, h, carry_in, carry_out: f + h, outputs: t - 2 * f - h }
}

/// Counts per column from the given heights, LSB first. Columns are added
/// past the top while carries are still produced.
pub fn plan_heights(heights: &[usize]) -> Vec<ColumnPlan> {
    let mut plans = Vec::with_capacity(heights.len() + 2);
    let mut carry = 0;
    let mut j = 0;
    while j < heights.len() || carry > 0 {
        let p = plan_column(heights.get(j).copied().unwrap_or(0), carry);
        carry = p.carry_out;
        plans.push(p);
        j += 1;
    }
    plans
}

pub fn plan_compressors(ppm: &PartialProductMatrix) -> Vec<ColumnPlan> {
    plan_heights(&ppm.heights())
}

/// Smallest `s` with `2 * 1.5^s >= max_total`, evaluated exactly as
/// `2 * 3^s >= max_total * 2^s`.
pub fn min_stage_bound(max_total: usize) -> usize {
    let m = max_total as u128;
    let mut s = 0u32;
    while 2 * 3u128.pow(s) < m * 2u128.pow(s) {
        s += 1;
    }
    s as usize
}

/// Area in units where a 2:2 costs 2 and a 3:2 costs 3.
pub fn plan_area(plans: &[ColumnPlan]) -> usize {
    plans.iter().map(|p| 3 * p.f + 2 * p.h).sum()
}

pub fn total_full(plans: &[ColumnPlan]) -> usize {
    plans.iter().map(|p| p.f).sum()
}

pub fn total_half(plans: &[ColumnPlan]) -> usize {
    plans.iter().map(|p| p.h).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_cases() {
        let p = plan_column(4, 0);
        assert_eq!((p.f, p.h, p.outputs, p.carry_out), (1, 0, 2, 1));
        let p = plan_column(3, 0);
        assert_eq!((p.f, p.h, p.outputs, p.carry_out), (0, 1, 2, 1));
        let p = plan_column(2, 0);
        assert_eq!((p.f, p.h, p.outputs, p.carry_out), (0, 0, 2, 0));
        let p = plan_column(1, 0);
        assert_eq!((p.f, p.h, p.outputs), (0, 0, 1));
    }

    #[test]
    fn stage_bound() {
        assert_eq!(min_stage_bound(1), 0);
        assert_eq!(min_stage_bound(2), 0);
        assert_eq!(min_stage_bound(3), 1);
        assert_eq!(min_stage_bound(4), 2);
        assert_eq!(min_stage_bound(8), 4);
        // Against the floating-point definition, skipping the exact powers.
        for m in 4..500usize {
            let want = ((m as f64 / 2.0).ln() / 1.5f64.ln()).ceil().max(0.0) as usize;
            assert_eq!(min_stage_bound(m), want, "m={m}");
        }
    }

    #[test]
    fn area_units() {
        assert_eq!(plan_area(&[plan_column(4, 0)]), 3);
        assert_eq!(plan_area(&[plan_column(3, 0)]), 2);
    }
}
