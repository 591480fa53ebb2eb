//! Cluster agreement scores.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A partition of `n ≥ 2` items into clusters labelled by integers `≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Domain(format!("need at least two labels, got {}", labels.len())));
        }
        if labels.contains(&0) {
            return Err(Error::Domain("labels must be positive".into()));
        }
        Ok(Self(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

fn pairs(n: u128) -> u128 {
    n * n.saturating_sub(1) / 2
}

/// Hubert-Arabie adjusted Rand index.
pub fn ari(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("label vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    let mut table: BTreeMap<(usize, usize), u128> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u128> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u128> = BTreeMap::new();
    for (&x, &y) in a.0.iter().zip(&b.0) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u128 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: u128 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: u128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u128);
    // scaled by 2 * total so every term stays an integer
    let num = 2 * (index as i128 * total as i128 - (sum_a * sum_b) as i128);
    let den = (sum_a + sum_b) as i128 * total as i128 - 2 * (sum_a * sum_b) as i128;
    if den == 0 {
        // both partitions trivial in the same way
        return Ok(if num == 0 { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

/// Convenience wrapper over raw label slices.
pub fn ari_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    ari(&LabelVector::new(a.to_vec())?, &LabelVector::new(b.to_vec())?)
}
