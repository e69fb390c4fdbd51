//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random_range(-3.0..3.0))
}

/// Cyclic Jacobi rotations. Returns eigenvalues in descending order and the
/// matching unit eigenvectors as columns.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Column-standardized copy (population sd; constant columns become zero).
pub fn standardize(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for mut col in z.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if sd > 1e-12 * mean.abs().max(1e-300) {
            col.mapv_inplace(|v| v / sd);
        } else {
            col.fill(0.0);
        }
    }
    z
}

/// ARI from the four pair counts, looping over every pair of items.
pub fn pair_counting_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut both, mut only_a, mut only_b, mut neither) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let denom = (both + only_a) * (only_a + neither) + (both + only_b) * (only_b + neither);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * (both * neither - only_a * only_b) / denom
    }
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=max + 1 {
            prefix.push(label);
            grow(prefix, max.max(label), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    grow(&mut prefix, 0, n, &mut out);
    out
}

/// Sum of squared distances to cluster means.
pub fn inertia(points: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
    let d = points.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in points.rows().into_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| {
            row.iter()
                .zip(&sums[l])
                .map(|(v, s)| (v - s / counts[l] as f64).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Minimum inertia over every labeling that uses all `k` clusters.
pub fn exhaustive_kmeans_optimum(points: &Array2<f64>, k: usize) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        // Canonical form only: first occurrence order 0, 1, 2, ...
        let mut next = 0;
        let mut canonical = true;
        for &l in &labels {
            if l > next {
                canonical = false;
                break;
            }
            if l == next {
                next += 1;
            }
        }
        if !canonical || next != k {
            continue;
        }
        best = best.min(inertia(points, &labels, k));
    }
    best
}

/// Dense modularity straight from the definition.
pub fn naive_modularity(n: usize, edges: &[(usize, usize, f64)], community: &[usize], resolution: f64) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v, w) in edges {
        if w > 0.0 {
            a[u][v] += w;
            if u != v {
                a[v][u] += w;
            }
        }
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if community[i] == community[j] {
                q += a[i][j] - resolution * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// True when every community induces a connected subgraph on positive edges.
pub fn communities_connected(n: usize, edges: &[(usize, usize, f64)], community: &[usize]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        if w > 0.0 && community[u] == community[v] {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut seen_root = std::collections::HashMap::new();
    let mut visited = vec![false; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        if seen_root.insert(community[start], start).is_some() {
            return false;
        }
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    true
}

/// Random weighted graph with planted groups: dense inside, sparse across.
pub fn planted_graph(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize, f64)> {
    let groups = rng.random_range(1..=6usize);
    let p_in = rng.random_range(0.3..0.9);
    let p_out = rng.random_range(0.0..0.1);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u % groups == v % groups { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v, rng.random_range(0.1..2.0)));
            }
        }
    }
    edges
}
