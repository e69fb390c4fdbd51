//! Seeded K-means (Lloyd iterations, k-means++ seeding, best of several
//! restarts).

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, splitmix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub n_clusters: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(n_clusters: usize, seed: u64) -> Self {
        Self {
            n_clusters,
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub n_iter: usize,
}

/// One restart's full history, exposed for diagnostics.
#[derive(Debug, Clone)]
pub struct RestartTrace {
    pub assignment: ClusterAssignment,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut closest: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in closest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            let d = sq_dist(p, centers.row(c));
            if d < closest[i] {
                closest[i] = d;
            }
        }
    }
    centers
}

/// Assigns every point to its nearest center (lowest index on ties).
fn assign(points: ArrayView2<f64>, centers: &Array2<f64>, labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.outer_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.outer_iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        inertia += best_d;
    }
    inertia
}

fn run_restart(points: ArrayView2<f64>, cfg: &KmeansConfig, seed: u64) -> RestartTrace {
    let n = points.nrows();
    let k = cfg.n_clusters;
    let mut rng = rng_from_seed(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut inertia = assign(points, &centers, &mut labels, &mut dists);
    history.push(inertia);
    let mut n_iter = 0;

    while n_iter < cfg.max_iter {
        n_iter += 1;
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.outer_iter().enumerate() {
            sums.row_mut(labels[i]).scaled_add(1.0, &p);
            counts[labels[i]] += 1;
        }
        let mut new_centers = sums;
        for (c, mut row) in new_centers.outer_iter_mut().enumerate() {
            if counts[c] > 0 {
                row /= counts[c] as f64;
            }
        }
        // Empty clusters move to the point farthest from its own center.
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                new_centers.row_mut(c).assign(&points.row(far));
            }
        }
        let shift = new_centers
            .outer_iter()
            .zip(centers.outer_iter())
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0f64, f64::max)
            .sqrt();
        centers = new_centers;
        inertia = assign(points, &centers, &mut labels, &mut dists);
        history.push(inertia);
        if shift <= cfg.tol {
            break;
        }
    }

    RestartTrace {
        assignment: ClusterAssignment {
            labels,
            inertia,
            n_iter,
        },
        inertia_history: history,
    }
}

fn validate(points: ArrayView2<f64>, cfg: &KmeansConfig) -> Result<()> {
    let n = points.nrows();
    if cfg.n_clusters == 0 {
        return Err(Error::validation("n_clusters must be at least 1"));
    }
    if n < cfg.n_clusters {
        return Err(Error::validation(format!(
            "{n} points cannot form {} clusters",
            cfg.n_clusters
        )));
    }
    if cfg.n_init == 0 || cfg.max_iter == 0 {
        return Err(Error::validation("n_init and max_iter must be positive"));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::validation(format!("tolerance {} is negative", cfg.tol)));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("points contain non-finite values"));
    }
    Ok(())
}

/// Every restart, in restart order.
pub fn kmeans_traces(points: ArrayView2<f64>, cfg: &KmeansConfig) -> Result<Vec<RestartTrace>> {
    validate(points, cfg)?;
    Ok((0..cfg.n_init)
        .into_par_iter()
        .map(|r| run_restart(points, cfg, splitmix64(cfg.seed ^ splitmix64(r as u64))))
        .collect())
}

/// Best restart by inertia; ties go to the lower restart index.
pub fn kmeans(points: ArrayView2<f64>, cfg: &KmeansConfig) -> Result<ClusterAssignment> {
    let traces = kmeans_traces(points, cfg)?;
    let best = traces
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.assignment
                .inertia
                .total_cmp(&b.assignment.inertia)
                .then(ia.cmp(ib))
        })
        .map(|(_, t)| t.assignment)
        .expect("n_init >= 1");
    Ok(best)
}

/// Within-cluster sum of squares of an arbitrary labeling.
pub fn inertia_of(points: ArrayView2<f64>, labels: &[usize], n_clusters: usize) -> f64 {
    let mut sums = Array2::<f64>::zeros((n_clusters, points.ncols()));
    let mut counts = vec![0usize; n_clusters];
    for (p, &l) in points.outer_iter().zip(labels) {
        sums.row_mut(l).scaled_add(1.0, &p);
        counts[l] += 1;
    }
    for (c, mut row) in sums.axis_iter_mut(Axis(0)).enumerate() {
        if counts[c] > 0 {
            row /= counts[c] as f64;
        }
    }
    points
        .outer_iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, sums.row(l)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separates_two_groups() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        let out = kmeans(x.view(), &KmeansConfig::new(2, 1)).unwrap();
        assert_eq!(out.labels[0], out.labels[1]);
        assert_eq!(out.labels[2], out.labels[3]);
        assert_ne!(out.labels[0], out.labels[2]);
        assert!((out.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_inertia_is_total_scatter() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]];
        let out = kmeans(x.view(), &KmeansConfig::new(1, 5)).unwrap();
        assert!(out.labels.iter().all(|&l| l == 0));
        // centroid (2, 1): 4+0 + 0+4 + 4+4
        assert!((out.inertia - 16.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters() {
        let x = array![[0.0], [1.0]];
        assert!(kmeans(x.view(), &KmeansConfig::new(3, 0)).is_err());
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let x = array![[1.0], [1.0], [1.0], [5.0]];
        let out = kmeans(x.view(), &KmeansConfig::new(3, 2)).unwrap();
        assert!(out.labels.iter().all(|&l| l < 3));
        assert!(out.inertia.is_finite());
    }

    #[test]
    fn deterministic() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64);
        let cfg = KmeansConfig::new(4, 99);
        assert_eq!(kmeans(x.view(), &cfg).unwrap(), kmeans(x.view(), &cfg).unwrap());
    }
}
