//! Per-subspace PCA and block merging.
//!
//! PCA here follows the textbook five stages: standardize each feature
//! (population variance, constant features get scale 1), form the
//! covariance, eigendecompose it, keep the smallest number of leading axes
//! whose cumulative explained-variance ratio reaches the threshold, and
//! project. When a block has more features than cells the eigenproblem is
//! solved on the `n x n` Gram matrix instead of the `p x p` covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::subspace::SubspaceSpec;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.95;

/// Slack applied when comparing cumulative ratios to the threshold.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    /// `p x m`, columns are unit principal axes.
    pub components: Array2<f64>,
    /// Eigenvalues of the standardized covariance for the retained axes.
    pub explained_variance: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn retained_variance(&self) -> f64 {
        self.explained_variance_ratio.sum()
    }
}

struct Standardized {
    z: Array2<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
}

fn standardize(block: ArrayView2<f64>) -> Standardized {
    let n = block.nrows() as f64;
    let mean = block.mean_axis(Axis(0)).expect("block has rows");
    let mut z = &block - &mean;
    let mut scale = Array1::ones(block.ncols());
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd == 0.0 || sd <= 1e-12 * mean[j].abs() {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| v / sd);
            scale[j] = sd;
        }
    }
    Standardized { z, mean, scale }
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenpairs sorted by descending eigenvalue; vectors are columns.
fn sorted_eigen(sym: &Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(to_nalgebra(sym));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(sym.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Fits PCA keeping enough components to explain `variance_threshold` of the
/// standardized variance, capped at `min(n - 1, p)`.
pub fn pca_fit(block: ArrayView2<f64>, variance_threshold: f64) -> Result<PcaModel> {
    fit_with_scores(block, variance_threshold).map(|(model, _)| model)
}

fn fit_with_scores(block: ArrayView2<f64>, variance_threshold: f64) -> Result<(PcaModel, Array2<f64>)> {
    let (n, p) = block.dim();
    if n < 2 {
        return Err(Error::validation(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if p == 0 {
        return Err(Error::validation("PCA needs at least 1 feature"));
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::validation(format!(
            "variance threshold {variance_threshold} outside (0, 1]"
        )));
    }
    let Standardized { z, mean, scale } = standardize(block);
    let nf = n as f64;
    let total: f64 = z.iter().map(|v| v * v).sum::<f64>() / nf;
    if total <= 0.0 {
        return Err(Error::validation(format!(
            "all {p} features are constant; nothing to project"
        )));
    }

    let (eigenvalues, axes, usable) = if p <= n {
        let cov = z.t().dot(&z) / nf;
        let (values, vectors) = sorted_eigen(&cov);
        let axes = Array2::from_shape_fn((p, p), |(i, j)| vectors[(i, j)]);
        (values, axes, p)
    } else {
        let gram = z.dot(&z.t()) / nf;
        let (values, vectors) = sorted_eigen(&gram);
        let floor = values[0] * 1e-10;
        let usable = values.iter().take_while(|&&v| v > floor).count().max(1);
        let u = Array2::from_shape_fn((n, usable), |(i, j)| vectors[(i, j)]);
        let mut axes = z.t().dot(&u);
        for (j, mut col) in axes.axis_iter_mut(Axis(1)).enumerate() {
            col /= (nf * values[j]).sqrt();
        }
        (values, axes, usable)
    };

    let cap = (n - 1).min(p).min(usable).max(1);
    let mut m = cap;
    let mut cumulative = 0.0;
    for (i, &v) in eigenvalues.iter().take(cap).enumerate() {
        cumulative += v / total;
        if cumulative >= variance_threshold - THRESHOLD_SLACK {
            m = i + 1;
            break;
        }
    }

    let mut components = axes.slice(ndarray::s![.., ..m]).to_owned();
    for mut col in components.axis_iter_mut(Axis(1)) {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let explained_variance = Array1::from_iter(eigenvalues[..m].iter().copied());
    let explained_variance_ratio = explained_variance.mapv(|v| v / total);
    let scores = z.dot(&components);
    Ok((
        PcaModel {
            mean,
            scale,
            components,
            explained_variance,
            explained_variance_ratio,
        },
        scores,
    ))
}

/// Projects `block` onto the model's axes: `((block - mean) / scale) . components`.
pub fn pca_transform(model: &PcaModel, block: ArrayView2<f64>) -> Result<Array2<f64>> {
    if block.ncols() != model.n_features() {
        return Err(Error::validation(format!(
            "block has {} features, model expects {}",
            block.ncols(),
            model.n_features()
        )));
    }
    let z = (&block - &model.mean) / &model.scale;
    Ok(z.dot(&model.components))
}

/// PCA output for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlock {
    pub scores: Array2<f64>,
    pub source_partition: usize,
    pub retained_variance: f64,
}

impl EmbeddingBlock {
    pub fn width(&self) -> usize {
        self.scores.ncols()
    }
}

/// Fits PCA on every partition independently, in parallel; blocks come back
/// in partition order.
pub fn reduce_subspaces(
    m: &ExpressionMatrix,
    spec: &SubspaceSpec,
    variance_threshold: f64,
) -> Result<Vec<EmbeddingBlock>> {
    if spec.n_genes != m.n_genes() {
        return Err(Error::validation(format!(
            "subspace spec covers {} genes, matrix has {}",
            spec.n_genes,
            m.n_genes()
        )));
    }
    spec.validate()?;
    spec.partitions
        .par_iter()
        .enumerate()
        .map(|(idx, cols)| {
            let block = m.values().select(Axis(1), cols);
            let (model, scores) = fit_with_scores(block.view(), variance_threshold)?;
            Ok(EmbeddingBlock {
                scores,
                source_partition: idx,
                retained_variance: model.retained_variance(),
            })
        })
        .collect()
}

/// Concatenates block scores column-wise, in block order.
pub fn merge_blocks(blocks: &[EmbeddingBlock]) -> Result<Array2<f64>> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::validation("no embedding blocks to merge"))?;
    let n = first.scores.nrows();
    if let Some(b) = blocks.iter().find(|b| b.scores.nrows() != n) {
        return Err(Error::validation(format!(
            "block {} has {} rows, expected {n}",
            b.source_partition,
            b.scores.nrows()
        )));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.scores.view()).collect();
    Ok(concatenate(Axis(1), &views).expect("row counts checked"))
}
