//! Gene-axis partitioning strategies.
//!
//! Sequential and shuffled strategies cut the (possibly permuted) gene
//! index range into overlapping windows. With `base = ceil(d / k)` and
//! `o = round(f * base)`, window `j` covers `[j * base, j * base + base + o)`
//! clipped to `d`; a trailing window of at most `o` genes is folded into its
//! predecessor. The random-bucket strategy first deals every gene to one
//! bucket, then adds cross-bucket duplicates until the same overlap budget
//! `round((1 + f) * d)` is reached.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const DEFAULT_OVERLAP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Sequential,
    Shuffled,
    Random,
    GeneCluster,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Sequential,
        Strategy::Shuffled,
        Strategy::Random,
        Strategy::GeneCluster,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Sequential => "sequential",
            Strategy::Shuffled => "shuffled",
            Strategy::Random => "random",
            Strategy::GeneCluster => "gene-cluster",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Strategy::Sequential),
            "shuffled" => Ok(Strategy::Shuffled),
            "random" => Ok(Strategy::Random),
            "gene-cluster" | "gene_cluster" => Ok(Strategy::GeneCluster),
            other => Err(Error::validation(format!("unknown strategy '{other}'"))),
        }
    }
}

/// An ordered list of gene-index partitions covering `0..n_genes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub strategy: Strategy,
    pub n_genes: usize,
    pub overlap_fraction: f64,
    pub seed: u64,
    pub partitions: Vec<Vec<usize>>,
}

impl SubspaceSpec {
    /// One partition holding every gene in order; equivalent to no division.
    pub fn whole(n_genes: usize) -> Self {
        Self {
            strategy: Strategy::Sequential,
            n_genes,
            overlap_fraction: 0.0,
            seed: 0,
            partitions: vec![(0..n_genes).collect()],
        }
    }

    pub fn k(&self) -> usize {
        self.partitions.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.partitions.iter().map(Vec::len).collect()
    }

    /// Checks coverage, in-range indices, non-empty partitions and
    /// within-partition uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.partitions.is_empty() {
            return Err(Error::validation("subspace spec has no partitions"));
        }
        let mut covered = vec![false; self.n_genes];
        for (p, part) in self.partitions.iter().enumerate() {
            if part.is_empty() {
                return Err(Error::validation(format!("partition {p} is empty")));
            }
            let mut seen = HashSet::with_capacity(part.len());
            for &g in part {
                if g >= self.n_genes {
                    return Err(Error::validation(format!(
                        "partition {p} holds gene {g}, beyond {} genes",
                        self.n_genes
                    )));
                }
                if !seen.insert(g) {
                    return Err(Error::validation(format!(
                        "partition {p} repeats gene {g}"
                    )));
                }
                covered[g] = true;
            }
        }
        if let Some(g) = covered.iter().position(|c| !c) {
            return Err(Error::validation(format!("gene {g} is in no partition")));
        }
        Ok(())
    }
}

fn check_args(d_prime: usize, k: usize, overlap_fraction: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::validation(format!("k must be at least 2, got {k}")));
    }
    if d_prime < k {
        return Err(Error::validation(format!(
            "cannot split {d_prime} genes into {k} partitions"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::validation(format!(
            "overlap fraction {overlap_fraction} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Overlap size `o` for `d` genes in `k` windows.
pub fn overlap_size(d_prime: usize, k: usize, overlap_fraction: f64) -> usize {
    let base = d_prime.div_ceil(k);
    (overlap_fraction * base as f64).round() as usize
}

/// Half-open window bounds over `0..d`. Works for any `k >= 1`.
pub(crate) fn window_bounds(d: usize, k: usize, overlap_fraction: f64) -> Vec<(usize, usize)> {
    let base = d.div_ceil(k);
    let o = (overlap_fraction * base as f64).round() as usize;
    let size = base + o;
    let stride = size - o;
    let mut windows: Vec<(usize, usize)> = Vec::with_capacity(k + 1);
    let mut start = 0;
    while start < d {
        windows.push((start, (start + size).min(d)));
        start += stride;
    }
    if windows.len() > 1 {
        let (s, e) = windows[windows.len() - 1];
        if e - s <= o {
            windows.pop();
            let last = windows.len() - 1;
            windows[last].1 = d;
        }
    }
    windows
}

/// Overlapping windows over genes in index order.
pub fn sequential_subspaces(d_prime: usize, k: usize, overlap_fraction: f64) -> Result<SubspaceSpec> {
    check_args(d_prime, k, overlap_fraction)?;
    let partitions = window_bounds(d_prime, k, overlap_fraction)
        .into_iter()
        .map(|(s, e)| (s..e).collect())
        .collect();
    Ok(SubspaceSpec {
        strategy: Strategy::Sequential,
        n_genes: d_prime,
        overlap_fraction,
        seed: 0,
        partitions,
    })
}

/// Sequential windows over a seeded random permutation of the genes.
pub fn shuffled_subspaces(
    d_prime: usize,
    k: usize,
    overlap_fraction: f64,
    seed: u64,
) -> Result<SubspaceSpec> {
    check_args(d_prime, k, overlap_fraction)?;
    let mut order: Vec<usize> = (0..d_prime).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let partitions = window_bounds(d_prime, k, overlap_fraction)
        .into_iter()
        .map(|(s, e)| order[s..e].to_vec())
        .collect();
    Ok(SubspaceSpec {
        strategy: Strategy::Shuffled,
        n_genes: d_prime,
        overlap_fraction,
        seed,
        partitions,
    })
}

/// Random gene-to-bucket assignment with cross-bucket duplication.
///
/// Bucket contents are returned in ascending gene order.
pub fn random_bucket_subspaces(
    d_prime: usize,
    k: usize,
    overlap_fraction: f64,
    seed: u64,
) -> Result<SubspaceSpec> {
    check_args(d_prime, k, overlap_fraction)?;
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..d_prime).collect();
    order.shuffle(&mut rng);

    let mut member = vec![vec![false; d_prime]; k];
    let mut buckets: Vec<Vec<usize>> = vec![Vec::with_capacity(d_prime / k + 1); k];
    for (i, &g) in order.iter().enumerate() {
        buckets[i % k].push(g);
        member[i % k][g] = true;
    }

    let budget = ((1.0 + overlap_fraction) * d_prime as f64).round() as usize;
    let budget = budget.min(k * d_prime);
    let mut total = d_prime;
    while total < budget {
        let g = rng.random_range(0..d_prime);
        let b = rng.random_range(0..k);
        if !member[b][g] {
            member[b][g] = true;
            buckets[b].push(g);
            total += 1;
        }
    }
    for b in &mut buckets {
        b.sort_unstable();
    }
    Ok(SubspaceSpec {
        strategy: Strategy::Random,
        n_genes: d_prime,
        overlap_fraction,
        seed,
        partitions: buckets,
    })
}
