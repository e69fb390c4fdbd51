//! Rand index and adjusted Rand index.
//!
//! Both are computed from the contingency table of the two labelings using
//! exact integer pair counts (`u128`), then converted to `f64` once.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Cross-tabulation of two labelings over the same `n` elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::validation(format!(
                "labelings differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let rows = compact(a);
        let cols = compact(b);
        let n_rows = rows.iter().max().map_or(0, |&m| m + 1);
        let n_cols = cols.iter().max().map_or(0, |&m| m + 1);
        let mut counts = vec![vec![0u64; n_cols]; n_rows];
        for (&r, &c) in rows.iter().zip(&cols) {
            counts[r][c] += 1;
        }
        let row_sums = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..n_cols)
            .map(|j| counts.iter().map(|row| row[j]).sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: a.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Pairs placed together by both labelings.
    pub fn pairs_together_both(&self) -> u128 {
        self.counts.iter().flatten().map(|&c| choose2(c)).sum()
    }

    pub fn pairs_together_a(&self) -> u128 {
        self.row_sums.iter().map(|&c| choose2(c)).sum()
    }

    pub fn pairs_together_b(&self) -> u128 {
        self.col_sums.iter().map(|&c| choose2(c)).sum()
    }

    pub fn total_pairs(&self) -> u128 {
        choose2(self.n)
    }
}

fn choose2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Maps arbitrary label values to `0..C` in order of first appearance.
fn compact(labels: &[usize]) -> Vec<usize> {
    let mut ids = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect()
}

fn table(a: &[usize], b: &[usize]) -> Result<ContingencyTable> {
    let t = ContingencyTable::new(a, b)?;
    if t.n < 2 {
        return Err(Error::validation(format!(
            "at least 2 elements are required, got {}",
            t.n
        )));
    }
    Ok(t)
}

/// Fraction of element pairs on which `a` and `b` agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = table(a, b)?;
    let both = t.pairs_together_both();
    let total = t.total_pairs();
    // Pairs apart in both = total - together_a - together_b + together_both.
    let apart = total + both - t.pairs_together_a() - t.pairs_together_b();
    Ok((both + apart) as f64 / total as f64)
}

/// Chance-corrected Rand index. Returns 0 when both labelings are trivial
/// (the expected and maximum index coincide).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = table(a, b)?;
    let index = t.pairs_together_both() as f64;
    let sum_a = t.pairs_together_a() as f64;
    let sum_b = t.pairs_together_b() as f64;
    let total = t.total_pairs() as f64;
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((index - expected) / denom)
}
