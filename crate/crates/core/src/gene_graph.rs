//! Gene similarity graph and Leiden community detection.
//!
//! Genes are linked to their most correlated genes (Pearson correlation
//! across cells, negative values clamped to 0) and the resulting undirected
//! graph is partitioned by maximizing modularity with the Leiden procedure:
//! fast local moving, refinement of each community into well-connected
//! sub-communities, and aggregation of the refined partition. Only
//! positive-weight edges take part in the optimization.

use std::collections::{BTreeMap, VecDeque};

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::seed::rng_from_seed;
use crate::subspace::{Strategy, SubspaceSpec};

pub const DEFAULT_N_NEIGHBORS: usize = 15;
pub const DEFAULT_RESOLUTION: f64 = 1.0;

/// Randomness of the refinement merge choice.
const THETA: f64 = 0.01;
/// Minimum gain (in units of edge weight) that counts as an improvement.
const MIN_GAIN: f64 = 1e-12;
const MAX_ITERATIONS: usize = 16;

/// Undirected weighted graph over `n_vertices` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneGraph {
    n_vertices: usize,
    /// `(u, v, w)` with `u < v`, sorted, unique.
    edges: Vec<(usize, usize, f64)>,
}

impl GeneGraph {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u == v {
                return Err(Error::validation(format!("self-loop on vertex {u}")));
            }
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) outside {n_vertices} vertices"
                )));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            normalized.push((u.min(v), u.max(v), w));
        }
        normalized.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = normalized.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::validation(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            n_vertices,
            edges: normalized,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Adjacency lists over positive-weight edges, neighbors ascending.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(u, v, w) in &self.edges {
            if w > 0.0 {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }
}

/// Links every gene to its `n_neighbors` most correlated genes; an edge is
/// kept when either endpoint selects the other. Ties in correlation go to
/// the lower gene index.
pub fn build_gene_knn_graph(m: &ExpressionMatrix, n_neighbors: usize) -> Result<GeneGraph> {
    let d = m.n_genes();
    if n_neighbors == 0 {
        return Err(Error::validation("n_neighbors must be at least 1"));
    }
    if d <= n_neighbors {
        return Err(Error::validation(format!(
            "{d} genes cannot each have {n_neighbors} neighbors"
        )));
    }
    let corr = correlation_matrix(m);
    let picks: Vec<Vec<(usize, f64)>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let row = corr.row(i);
            let mut others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            others
                .into_iter()
                .take(n_neighbors)
                .map(|j| (j, row[j].max(0.0)))
                .collect()
        })
        .collect();
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, list) in picks.into_iter().enumerate() {
        for (j, w) in list {
            edges.insert((i.min(j), i.max(j)), w);
        }
    }
    GeneGraph::new(d, edges.into_iter().map(|((u, v), w)| (u, v, w)).collect())
}

/// Pearson correlation between gene columns; constant genes correlate 0
/// with everything.
pub fn correlation_matrix(m: &ExpressionMatrix) -> ndarray::Array2<f64> {
    let x = m.values();
    let mean = x.mean_axis(Axis(0)).expect("matrix has cells");
    let mut c = x - &mean;
    for mut col in c.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            col /= norm;
        } else {
            col.fill(0.0);
        }
    }
    let mut corr = c.t().dot(&c);
    corr.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    corr
}

/// Community label per vertex plus the partition's modularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub community_of: Vec<usize>,
    pub quality: f64,
    /// Modularity of the working partition after each aggregation pass.
    pub pass_quality: Vec<f64>,
}

impl CommunityPartition {
    pub fn n_communities(&self) -> usize {
        self.community_of.iter().max().map_or(0, |&c| c + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_communities()];
        for &c in &self.community_of {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Modularity with resolution: `sum_c [ in_c / m - resolution * (tot_c / 2m)^2 ]`.
/// Defined as 0 for a graph without positive edge weight.
pub fn modularity(g: &GeneGraph, community_of: &[usize], resolution: f64) -> f64 {
    let m: f64 = g.edges().iter().map(|e| e.2).sum();
    if m <= 0.0 {
        return 0.0;
    }
    let n_comm = community_of.iter().max().map_or(0, |&c| c + 1);
    let mut inside = vec![0.0; n_comm];
    let mut tot = vec![0.0; n_comm];
    for &(u, v, w) in g.edges() {
        tot[community_of[u]] += w;
        tot[community_of[v]] += w;
        if community_of[u] == community_of[v] {
            inside[community_of[u]] += w;
        }
    }
    inside
        .iter()
        .zip(&tot)
        .map(|(i, t)| i / m - resolution * (t / (2.0 * m)).powi(2))
        .sum()
}

/// Working network for one aggregation level.
struct Network {
    adj: Vec<Vec<(usize, f64)>>,
    /// Weight of edges collapsed inside each node.
    self_weight: Vec<f64>,
    degree: Vec<f64>,
}

impl Network {
    fn n(&self) -> usize {
        self.adj.len()
    }

    fn quality(&self, comm: &[usize], m: f64, resolution: f64) -> f64 {
        let n_comm = comm.iter().max().map_or(0, |&c| c + 1);
        let mut inside = vec![0.0; n_comm];
        let mut tot = vec![0.0; n_comm];
        for v in 0..self.n() {
            inside[comm[v]] += self.self_weight[v];
            tot[comm[v]] += self.degree[v];
            for &(u, w) in &self.adj[v] {
                if u > v && comm[u] == comm[v] {
                    inside[comm[v]] += w;
                }
            }
        }
        inside
            .iter()
            .zip(&tot)
            .map(|(i, t)| i / m - resolution * (t / (2.0 * m)).powi(2))
            .sum()
    }

    /// Collapses each refined community into a node.
    fn aggregate(&self, refined: &[usize]) -> Network {
        let n_new = refined.iter().max().map_or(0, |&c| c + 1);
        let mut self_weight = vec![0.0; n_new];
        let mut degree = vec![0.0; n_new];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_new];
        for v in 0..self.n() {
            let a = refined[v];
            self_weight[a] += self.self_weight[v];
            degree[a] += self.degree[v];
            for &(u, w) in &self.adj[v] {
                if u <= v {
                    continue;
                }
                let b = refined[u];
                if a == b {
                    self_weight[a] += w;
                } else {
                    *links[a].entry(b).or_insert(0.0) += w;
                    *links[b].entry(a).or_insert(0.0) += w;
                }
            }
        }
        Network {
            adj: links.into_iter().map(|l| l.into_iter().collect()).collect(),
            self_weight,
            degree,
        }
    }
}

/// Relabels to `0..C` in order of first appearance.
fn renumber(labels: &mut [usize]) -> usize {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

struct Optimizer<'a, R: Rng> {
    m: f64,
    resolution: f64,
    rng: &'a mut R,
}

impl<R: Rng> Optimizer<'_, R> {
    /// Gain of joining a community, in units of edge weight.
    fn score(&self, w_to: f64, k_v: f64, tot: f64) -> f64 {
        w_to - self.resolution * k_v * tot / (2.0 * self.m)
    }

    fn move_nodes_fast(&mut self, net: &Network, comm: &mut [usize]) {
        let n = net.n();
        let mut tot = vec![0.0; n];
        let mut size = vec![0usize; n];
        for v in 0..n {
            tot[comm[v]] += net.degree[v];
            size[comm[v]] += 1;
        }
        let mut free: Vec<usize> = (0..n).rev().filter(|&c| size[c] == 0).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(self.rng);
        let mut queue: VecDeque<usize> = order.into_iter().collect();
        let mut queued = vec![true; n];
        let mut w_to = vec![0.0; n];
        let mut touched = Vec::new();

        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let current = comm[v];
            let k_v = net.degree[v];
            for &(u, w) in &net.adj[v] {
                let c = comm[u];
                if w_to[c] == 0.0 {
                    touched.push(c);
                }
                w_to[c] += w;
            }
            tot[current] -= k_v;
            size[current] -= 1;

            let mut best = current;
            let mut best_score = self.score(w_to[current], k_v, tot[current]);
            for &c in &touched {
                let s = self.score(w_to[c], k_v, tot[c]);
                if s > best_score + MIN_GAIN {
                    best = c;
                    best_score = s;
                }
            }
            if best_score < -MIN_GAIN && size[current] > 0 {
                // An empty community scores exactly 0.
                best = free.pop().expect("an empty community exists");
            }

            if best != current && size[current] == 0 {
                free.push(current);
            }
            tot[best] += k_v;
            size[best] += 1;
            comm[v] = best;
            for c in touched.drain(..) {
                w_to[c] = 0.0;
            }
            if best != current {
                for &(u, _) in &net.adj[v] {
                    if !queued[u] && comm[u] != best {
                        queued[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
    }

    /// Splits every community of `comm` into well-connected sub-communities.
    fn refine(&mut self, net: &Network, comm: &[usize]) -> Vec<usize> {
        let n = net.n();
        let mut refined: Vec<usize> = (0..n).collect();
        let mut tot_r = net.degree.clone();
        let mut size_r = vec![1usize; n];
        let n_comm = comm.iter().max().map_or(0, |&c| c + 1);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
        let mut tot_c = vec![0.0; n_comm];
        for v in 0..n {
            members[comm[v]].push(v);
            tot_c[comm[v]] += net.degree[v];
        }
        // Weight from each refined community to the rest of its parent.
        let mut external: Vec<f64> = (0..n)
            .map(|v| {
                net.adj[v]
                    .iter()
                    .filter(|&&(u, _)| comm[u] == comm[v])
                    .map(|&(_, w)| w)
                    .sum()
            })
            .collect();
        let mut w_to = vec![0.0; n];
        let mut touched = Vec::new();
        let scale = self.resolution / (2.0 * self.m);

        for (c, nodes) in members.iter_mut().enumerate() {
            if nodes.len() < 2 {
                continue;
            }
            nodes.shuffle(self.rng);
            let total = tot_c[c];
            for &v in nodes.iter() {
                let k_v = net.degree[v];
                if external[v] < scale * k_v * (total - k_v) {
                    continue;
                }
                if size_r[v] != 1 || refined[v] != v {
                    continue;
                }
                for &(u, w) in &net.adj[v] {
                    if comm[u] != c {
                        continue;
                    }
                    let r = refined[u];
                    if r == v {
                        continue;
                    }
                    if w_to[r] == 0.0 {
                        touched.push(r);
                    }
                    w_to[r] += w;
                }
                let mut candidates: Vec<(usize, f64)> = vec![(v, 0.0)];
                for &r in &touched {
                    let well_connected = external[r] >= scale * tot_r[r] * (total - tot_r[r]);
                    let gain = self.score(w_to[r], k_v, tot_r[r]);
                    if well_connected && gain >= 0.0 {
                        candidates.push((r, gain));
                    }
                }
                let top = candidates.iter().map(|c| c.1).fold(0.0f64, f64::max);
                let weights: Vec<f64> = candidates
                    .iter()
                    .map(|&(_, g)| ((g - top) / THETA).exp())
                    .collect();
                let sum: f64 = weights.iter().sum();
                let mut target = self.rng.random::<f64>() * sum;
                let mut chosen = candidates[candidates.len() - 1].0;
                for (&(r, _), w) in candidates.iter().zip(&weights) {
                    if target < *w {
                        chosen = r;
                        break;
                    }
                    target -= w;
                }
                if chosen != v {
                    let w_link = w_to[chosen];
                    external[chosen] += external[v] - 2.0 * w_link;
                    tot_r[chosen] += k_v;
                    size_r[chosen] += 1;
                    tot_r[v] = 0.0;
                    size_r[v] = 0;
                    refined[v] = chosen;
                }
                for r in touched.drain(..) {
                    w_to[r] = 0.0;
                }
            }
        }
        renumber(&mut refined);
        refined
    }

    /// One Leiden iteration starting from `initial` on the base network.
    /// Returns the flat partition and the quality after each pass.
    fn iterate(&mut self, base: &Network, initial: &[usize]) -> (Vec<usize>, Vec<f64>) {
        let mut net = Network {
            adj: base.adj.clone(),
            self_weight: base.self_weight.clone(),
            degree: base.degree.clone(),
        };
        let mut comm = initial.to_vec();
        let mut membership: Vec<usize> = (0..base.n()).collect();
        let mut history = Vec::new();
        loop {
            self.move_nodes_fast(&net, &mut comm);
            let n_comm = renumber(&mut comm);
            history.push(net.quality(&comm, self.m, self.resolution));
            if n_comm == net.n() {
                break;
            }
            let refined = self.refine(&net, &comm);
            let n_refined = refined.iter().max().map_or(0, |&c| c + 1);
            if n_refined == net.n() {
                break;
            }
            let mut next_comm = vec![0; n_refined];
            for v in 0..net.n() {
                next_comm[refined[v]] = comm[v];
            }
            for mv in membership.iter_mut() {
                *mv = refined[*mv];
            }
            net = net.aggregate(&refined);
            comm = next_comm;
        }
        let flat = membership.iter().map(|&a| comm[a]).collect();
        (flat, history)
    }
}

/// Splits any community whose induced subgraph is disconnected.
fn split_disconnected(adj: &[Vec<(usize, f64)>], comm: &[usize]) -> Vec<usize> {
    let n = adj.len();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if out[start] != usize::MAX {
            continue;
        }
        out[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if out[u] == usize::MAX && comm[u] == comm[start] {
                    out[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    out
}

/// Leiden community detection maximizing modularity at `resolution`.
/// Deterministic for a given seed; every returned community is connected
/// through positive-weight edges.
pub fn leiden_partition(g: &GeneGraph, resolution: f64, seed: u64) -> Result<CommunityPartition> {
    if g.n_vertices() == 0 {
        return Err(Error::validation("graph has no vertices"));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::validation(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let adj = g.adjacency();
    let m: f64 = adj.iter().flatten().map(|e| e.1).sum::<f64>() / 2.0;
    let n = g.n_vertices();
    if m <= 0.0 {
        return Ok(CommunityPartition {
            community_of: (0..n).collect(),
            quality: 0.0,
            pass_quality: Vec::new(),
        });
    }
    let degree = adj.iter().map(|l| l.iter().map(|e| e.1).sum()).collect();
    let base = Network {
        adj,
        self_weight: vec![0.0; n],
        degree,
    };
    let mut rng = rng_from_seed(seed);
    let mut opt = Optimizer {
        m,
        resolution,
        rng: &mut rng,
    };
    let mut partition: Vec<usize> = (0..n).collect();
    let mut history = vec![base.quality(&partition, m, resolution)];
    for _ in 0..MAX_ITERATIONS {
        let (mut next, passes) = opt.iterate(&base, &partition);
        renumber(&mut next);
        history.extend(passes);
        if next == partition {
            break;
        }
        partition = next;
    }
    let mut community_of = split_disconnected(&base.adj, &partition);
    renumber(&mut community_of);
    let quality = modularity(g, &community_of, resolution);
    history.push(quality);
    Ok(CommunityPartition {
        community_of,
        quality,
        pass_quality: history,
    })
}

/// One disjoint partition per community; communities with fewer than two
/// genes fold into the largest community.
pub fn communities_to_subspaces(p: &CommunityPartition) -> SubspaceSpec {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); p.n_communities()];
    for (v, &c) in p.community_of.iter().enumerate() {
        groups[c].push(v);
    }
    let largest = groups
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i);
    let mut leftovers = Vec::new();
    let mut kept = Vec::new();
    for (i, g) in groups.into_iter().enumerate() {
        if i != largest && g.len() < 2 {
            leftovers.extend(g);
        } else {
            kept.push((i, g));
        }
    }
    let mut partitions: Vec<Vec<usize>> = kept
        .into_iter()
        .map(|(i, mut g)| {
            if i == largest {
                g.extend(leftovers.iter().copied());
                g.sort_unstable();
            }
            g
        })
        .collect();
    partitions.retain(|p| !p.is_empty());
    SubspaceSpec {
        strategy: Strategy::GeneCluster,
        n_genes: p.community_of.len(),
        overlap_fraction: 0.0,
        seed: 0,
        partitions,
    }
}
