//! Library-size normalization, `ln(1 + x)` transform and highly variable
//! gene selection.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvgConfig {
    pub target_sum: f64,
    pub n_top_genes: usize,
    pub n_bins: usize,
}

impl Default for HvgConfig {
    fn default() -> Self {
        Self {
            target_sum: 1e4,
            n_top_genes: 10_000,
            n_bins: 20,
        }
    }
}

impl HvgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_sum > 0.0 && self.target_sum.is_finite()) {
            return Err(Error::validation(format!(
                "target_sum must be positive, got {}",
                self.target_sum
            )));
        }
        if self.n_top_genes == 0 || self.n_bins == 0 {
            return Err(Error::validation("n_top_genes and n_bins must be at least 1"));
        }
        Ok(())
    }
}

/// Scales each cell to `target_sum` total counts, then applies `ln(1 + x)`.
pub fn normalize_log(m: &ExpressionMatrix, target_sum: f64) -> Result<ExpressionMatrix> {
    if !(target_sum > 0.0 && target_sum.is_finite()) {
        return Err(Error::validation(format!(
            "target_sum must be positive, got {target_sum}"
        )));
    }
    let mut values = m.values().clone();
    for (i, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
        if let Some(v) = row.iter().find(|v| **v < 0.0) {
            return Err(Error::validation(format!(
                "cell '{}' has negative value {v}",
                m.cell_ids()[i]
            )));
        }
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(Error::validation(format!(
                "cell '{}' has zero total expression",
                m.cell_ids()[i]
            )));
        }
        let factor = target_sum / total;
        row.mapv_inplace(|x| (x * factor).ln_1p());
    }
    m.with_values(values)
}

/// Per-gene statistics behind the HVG ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneDispersion {
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean`, 0 for an all-zero gene.
    pub dispersion: f64,
    /// Dispersion z-scored within the gene's mean bin.
    pub normalized: f64,
}

/// Mean, sample variance and dispersion per gene, z-scored inside
/// `n_bins` equal-width bins over the gene means.
pub fn gene_dispersions(m: &ExpressionMatrix, n_bins: usize) -> Vec<GeneDispersion> {
    let n = m.n_cells() as f64;
    let mut stats: Vec<GeneDispersion> = m
        .values()
        .axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / n;
            let variance = if n > 1.0 {
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let dispersion = if mean > 0.0 { variance / mean } else { 0.0 };
            GeneDispersion {
                mean,
                variance,
                dispersion,
                normalized: 0.0,
            }
        })
        .collect();
    if stats.is_empty() {
        return stats;
    }

    let n_bins = n_bins.max(1);
    let lo = stats.iter().map(|s| s.mean).fold(f64::INFINITY, f64::min);
    let hi = stats.iter().map(|s| s.mean).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let bin_of = |mean: f64| -> usize {
        if width <= 0.0 {
            0
        } else {
            (((mean - lo) / width) as usize).min(n_bins - 1)
        }
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (g, s) in stats.iter().enumerate() {
        members[bin_of(s.mean)].push(g);
    }
    for genes in members.iter().filter(|g| g.len() > 1) {
        let values: Vec<f64> = genes.iter().map(|&g| stats[g].dispersion).collect();
        let k = values.len() as f64;
        let mu = values.iter().sum::<f64>() / k;
        let sd = (values.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        if sd > 0.0 {
            for &g in genes {
                stats[g].normalized = (stats[g].dispersion - mu) / sd;
            }
        }
    }
    stats
}

/// Keeps the `min(n_top_genes, d)` genes with the highest bin-normalized
/// dispersion, ordered by descending rank. Ties fall back to raw dispersion,
/// then to ascending gene index.
pub fn select_hvg(m: &ExpressionMatrix, cfg: &HvgConfig) -> Result<ExpressionMatrix> {
    cfg.validate()?;
    if m.n_genes() == 0 {
        return Err(Error::validation("matrix has no genes"));
    }
    let stats = gene_dispersions(m, cfg.n_bins);
    // z-scores that agree to 1e-9 count as tied; small bins produce the same
    // score in different bins up to rounding (e.g. +-1/sqrt(2) for two genes).
    let key: Vec<f64> = stats.iter().map(|s| (s.normalized * 1e9).round()).collect();
    let mut order: Vec<usize> = (0..m.n_genes()).collect();
    order.sort_by(|&a, &b| {
        key[b]
            .total_cmp(&key[a])
            .then(stats[b].dispersion.total_cmp(&stats[a].dispersion))
            .then(a.cmp(&b))
    });
    order.truncate(cfg.n_top_genes.min(m.n_genes()));
    m.select_genes(&order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_total_cell_is_rejected() {
        let m = ExpressionMatrix::from_values(array![[0.0, 0.0], [1.0, 2.0]]).unwrap();
        let err = normalize_log(&m, 4.0).unwrap_err();
        assert!(err.to_string().contains("cell0"));
    }

    #[test]
    fn equal_counts_normalize_to_ln3() {
        let m = ExpressionMatrix::from_values(array![[2.0, 2.0]]).unwrap();
        let out = normalize_log(&m, 4.0).unwrap();
        for v in out.values() {
            assert!((v - 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_matrix_stays_constant() {
        let m = ExpressionMatrix::from_values(ndarray::Array2::from_elem((4, 3), 5.0)).unwrap();
        let out = normalize_log(&m, 1e4).unwrap();
        let first = out.values()[[0, 0]];
        assert!(out.values().iter().all(|&v| v == first));
    }

    #[test]
    fn all_genes_kept_at_threshold() {
        let m = ExpressionMatrix::from_values(array![[1.0, 2.0, 0.5, 3.0, 1.0], [0.0, 1.0, 2.0, 1.0, 4.0]])
            .unwrap();
        let cfg = HvgConfig {
            n_top_genes: 5,
            ..Default::default()
        };
        let out = select_hvg(&m, &cfg).unwrap();
        let mut ids = out.gene_ids().to_vec();
        ids.sort();
        let mut want = m.gene_ids().to_vec();
        want.sort();
        assert_eq!(ids, want);
    }

    #[test]
    fn variable_gene_beats_constant_gene() {
        // Gene B (constant) comes first so index tie-breaking alone would pick it.
        let m = ExpressionMatrix::new(
            array![[3.0, 0.0], [3.0, 10.0], [3.0, 0.0], [3.0, 10.0]],
            (0..4).map(|i| format!("c{i}")).collect(),
            vec!["B".into(), "A".into()],
        )
        .unwrap();
        let cfg = HvgConfig {
            n_top_genes: 1,
            ..Default::default()
        };
        let out = select_hvg(&m, &cfg).unwrap();
        assert_eq!(out.gene_ids(), &["A".to_string()]);
    }
}
