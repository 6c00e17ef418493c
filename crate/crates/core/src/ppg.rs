//! Partial-product generation (AND array) and accumulator injection.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BitSource {
    /// `a[i] & b[k]`.
    Product { i: usize, k: usize },
    /// Accumulator input bit `c[j]`.
    Acc { j: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitRef {
    pub name: String,
    pub column: usize,
    pub source: BitSource,
}

impl BitRef {
    pub fn product(i: usize, k: usize) -> Self {
        BitRef { name: format!("pp_{i}_{k}"), column: i + k, source: BitSource::Product { i, k } }
    }

    pub fn acc(j: usize) -> Self {
        BitRef { name: format!("acc_{j}"), column: j, source: BitSource::Acc { j } }
    }

    pub fn value(&self, a: u128, b: u128, c: u128) -> bool {
        match self.source {
            BitSource::Product { i, k } => (a >> i) & (b >> k) & 1 == 1,
            BitSource::Acc { j } => (c >> j) & 1 == 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialProductMatrix {
    pub width: usize,
    /// `columns[j]` lists the bits of weight `2^j`.
    pub columns: Vec<Vec<BitRef>>,
    pub is_fused: bool,
    pub acc_width: usize,
    /// Set when the accumulator needed columns beyond `2*width - 2`.
    pub extended: bool,
}

impl PartialProductMatrix {
    pub fn heights(&self) -> Vec<usize> {
        self.columns.iter().map(Vec::len).collect()
    }

    pub fn total_bits(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn max_height(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Weighted sum of the matrix bits for inputs `(a, b, c)`.
    /// Only valid while the result fits in 128 bits.
    pub fn weighted_sum(&self, a: u128, b: u128, c: u128) -> u128 {
        let mut s = 0u128;
        for (j, col) in self.columns.iter().enumerate() {
            let ones = col.iter().filter(|bit| bit.value(a, b, c)).count() as u128;
            s += ones << j;
        }
        s
    }

    /// Number of result bits needed to hold the largest possible value
    /// `(2^w - 1)^2 + (2^acc - 1)`.
    pub fn result_bits(&self) -> usize {
        let w = self.width;
        // (2^w-1)^2 = 2^2w - 2^(w+1) + 1, so adding 2^acc - 1 carries into
        // bit 2w exactly when acc >= w + 1.
        if self.acc_width > w {
            2 * w + 1
        } else {
            2 * w
        }
    }
}

/// N x N AND array: column `j` holds `a[i] & b[j-i]`.
pub fn generate_and_array(width: usize) -> Result<PartialProductMatrix> {
    if width < 2 {
        return Err(Error::InvalidWidth(width));
    }
    let mut columns = vec![Vec::new(); 2 * width - 1];
    for i in 0..width {
        for k in 0..width {
            columns[i + k].push(BitRef::product(i, k));
        }
    }
    // Keep each column ordered by the multiplicand index.
    for col in &mut columns {
        col.sort_by_key(|b| match b.source {
            BitSource::Product { i, .. } => i,
            BitSource::Acc { .. } => usize::MAX,
        });
    }
    Ok(PartialProductMatrix { width, columns, is_fused: false, acc_width: 0, extended: false })
}

/// Adds one accumulator bit to each of the columns `0..acc_width`.
pub fn inject_accumulator(mut ppm: PartialProductMatrix, acc_width: usize) -> Result<PartialProductMatrix> {
    if acc_width == 0 {
        log::warn!("accumulator width 0: matrix left unchanged");
        return Ok(ppm);
    }
    if ppm.is_fused {
        return Err(Error::Consistency("accumulator already injected".into()));
    }
    if acc_width > 2 * ppm.width {
        return Err(Error::InvalidAccWidth { width: ppm.width, acc: acc_width });
    }
    if acc_width > ppm.columns.len() {
        ppm.columns.resize(acc_width, Vec::new());
        ppm.extended = true;
    }
    for j in 0..acc_width {
        ppm.columns[j].push(BitRef::acc(j));
    }
    ppm.is_fused = true;
    ppm.acc_width = acc_width;
    Ok(ppm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heights_small() {
        assert_eq!(generate_and_array(2).unwrap().heights(), vec![1, 2, 1]);
        assert!(matches!(generate_and_array(1), Err(Error::InvalidWidth(1))));
    }

    #[test]
    fn accumulator_adds_one_per_column() {
        let p = generate_and_array(4).unwrap();
        let before = p.heights();
        let f = inject_accumulator(p.clone(), 8).unwrap();
        assert!(f.extended);
        let after = f.heights();
        assert_eq!(after.len(), 8);
        for j in 0..8 {
            assert_eq!(after[j], before.get(j).copied().unwrap_or(0) + 1);
        }
        assert_eq!(inject_accumulator(p.clone(), 0).unwrap(), p);
        assert!(inject_accumulator(p, 9).is_err());
    }

    #[test]
    fn result_bits_match_maximum() {
        for w in 2..=8usize {
            for acc in 0..=2 * w {
                let mut p = generate_and_array(w).unwrap();
                if acc > 0 {
                    p = inject_accumulator(p, acc).unwrap();
                }
                let max = ((1u128 << w) - 1).pow(2) + ((1u128 << acc) - 1);
                assert_eq!(p.result_bits(), 128 - max.leading_zeros() as usize, "w={w} acc={acc}");
            }
        }
    }
}
