//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs under `cargo test` with its own harness.

mod common;

use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::Rng;

use subspca_core::cluster::{kmeans_traces, KmeansConfig};
use subspca_core::gene_graph::{leiden_partition, GeneGraph};
use subspca_core::impute::{impute_zeros, train, AutoencoderConfig, AutoencoderModel};
use subspca_core::io::report_to_string;
use subspca_core::metrics::adjusted_rand_index;
use subspca_core::pipeline::{run_baseline, run_pipeline, run_sweep, run_trial, PipelineConfig};
use subspca_core::reduce::{pca_fit, reduce_subspaces};
use subspca_core::subspace::{
    overlap_size, random_bucket_subspaces, sequential_subspaces, shuffled_subspaces, Strategy,
    SubspaceSpec,
};
use subspca_core::synthetic::{generate, SyntheticConfig};
use subspca_core::{io, ExpressionMatrix};

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ari_oracle() -> Outcome {
    let mut pairs = 0usize;
    let mut worst = 0.0f64;
    for n in 2..=7 {
        let parts = set_partitions(n);
        for a in &parts {
            for b in &parts {
                let fast = adjusted_rand_index(a, b).map_err(|e| e.to_string())?;
                let slow = pair_counting_ari(a, b);
                worst = worst.max((fast - slow).abs());
                pairs += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{pairs} partition pairs, max deviation {worst:.1e}"))
}

fn pca_oracle() -> Outcome {
    let mut rng = rng(11);
    let mut worst_value = 0.0f64;
    let mut worst_vector = 0.0f64;
    for case in 0..50 {
        let n = rng.random_range(3..=30);
        let p = rng.random_range(1..=10);
        let x = random_matrix(&mut rng, n, p);
        let model = pca_fit(x.view(), 0.95).map_err(|e| format!("case {case}: {e}"))?;
        let z = standardize(&x);
        let cov = z.t().dot(&z) / n as f64;
        let (values, vectors) = jacobi_eigen(&cov);
        let total: f64 = values.iter().sum();
        for (i, &v) in model.explained_variance.iter().enumerate() {
            worst_value = worst_value.max((v - values[i]).abs());
            let gap = values
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, w)| (w - values[i]).abs())
                .fold(f64::INFINITY, f64::min);
            if gap > 1e-6 {
                let dot: f64 = model.components.column(i).dot(&vectors.column(i));
                let sign = dot.signum();
                let dev = model
                    .components
                    .column(i)
                    .iter()
                    .zip(vectors.column(i))
                    .map(|(a, b)| (a - sign * b).abs())
                    .fold(0.0, f64::max);
                worst_vector = worst_vector.max(dev);
            }
        }
        let retained = model.explained_variance.sum() / total;
        let full_rank = model.n_components() == (n - 1).min(p);
        ensure(retained >= 0.95 - 1e-12 || full_rank, || {
            format!("case {case}: retained {retained} with {} components", model.n_components())
        })?;
    }
    ensure(worst_value <= 1e-8 && worst_vector <= 1e-8, || {
        format!("eigenvalue dev {worst_value:e}, component dev {worst_vector:e}")
    })?;
    Ok(format!("50 matrices, eigenvalue dev {worst_value:.1e}, component dev {worst_vector:.1e}"))
}

fn check_cover(spec: &SubspaceSpec, d: usize) -> Result<(), String> {
    let mut seen = vec![false; d];
    for part in &spec.partitions {
        let mut local = std::collections::HashSet::new();
        for &g in part {
            ensure(g < d && local.insert(g), || format!("bad or repeated index {g}"))?;
            seen[g] = true;
        }
    }
    ensure(seen.iter().all(|&s| s), || "not every gene covered".into())
}

fn subspace_laws() -> Outcome {
    let mut cases = 0;
    for d in (50..=200).step_by(25) {
        for k in 2..=20 {
            for f in [0.20, 0.25, 0.30] {
                let ctx = || format!("d={d} k={k} f={f}");
                let o = overlap_size(d, k, f);
                let size = d.div_ceil(k) + o;
                let seq = sequential_subspaces(d, k, f).map_err(|e| format!("{}: {e}", ctx()))?;
                check_cover(&seq, d).map_err(|e| format!("{}: {e}", ctx()))?;
                let w = &seq.partitions;
                for i in 0..w.len() {
                    if i + 1 < w.len() {
                        ensure(w[i].len() == size, || format!("{}: window {i} has {}", ctx(), w[i].len()))?;
                        let shared = w[i].iter().filter(|g| w[i + 1].contains(g)).count();
                        ensure(shared == o, || format!("{}: windows {i},{} share {shared}", ctx(), i + 1))?;
                    }
                    for j in i + 2..w.len() {
                        ensure(w[i].iter().all(|g| !w[j].contains(g)), || {
                            format!("{}: windows {i},{j} intersect", ctx())
                        })?;
                    }
                }
                let shuf = shuffled_subspaces(d, k, f, 7).map_err(|e| e.to_string())?;
                check_cover(&shuf, d).map_err(|e| format!("{} shuffled: {e}", ctx()))?;
                let (mut a, mut b) = (seq.sizes(), shuf.sizes());
                a.sort();
                b.sort();
                ensure(a == b, || format!("{}: shuffled sizes differ", ctx()))?;
                let rand = random_bucket_subspaces(d, k, f, 7).map_err(|e| e.to_string())?;
                check_cover(&rand, d).map_err(|e| format!("{} random: {e}", ctx()))?;
                ensure(rand.k() == k, || format!("{}: {} buckets", ctx(), rand.k()))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} parameter triples x 3 strategies"))
}

fn autoencoder_checks() -> Outcome {
    let mut rng = rng(5);
    let ids: Vec<String> = (0..8).map(|j| format!("g{j}")).collect();
    let mut model = AutoencoderModel::init(ids, 3, &mut rng);
    let input = Array2::from_shape_fn((5, 8), |_| rng.random_range(0.0..2.0));
    let (_, grads) = model.loss_and_gradient(input.view(), input.view());
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0;
    macro_rules! check_param {
        ($field:ident) => {
            for idx in 0..model.$field.len() {
                let orig = model.$field.as_slice().unwrap()[idx];
                model.$field.as_slice_mut().unwrap()[idx] = orig + h;
                let (up, _) = model.loss_and_gradient(input.view(), input.view());
                model.$field.as_slice_mut().unwrap()[idx] = orig - h;
                let (down, _) = model.loss_and_gradient(input.view(), input.view());
                model.$field.as_slice_mut().unwrap()[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.$field.as_slice().unwrap()[idx];
                let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-7);
                worst = worst.max(rel);
                checked += 1;
            }
        };
    }
    check_param!(encoder_weights);
    check_param!(encoder_bias);
    check_param!(decoder_weights);
    check_param!(decoder_bias);
    ensure(worst <= 1e-4, || format!("gradient relative error {worst:e}"))?;

    let sparse = Array2::from_shape_fn((20, 8), |_| {
        if rng.random::<f64>() < 0.4 {
            0.0
        } else {
            rng.random_range(0.1..5.0)
        }
    });
    let m = ExpressionMatrix::from_values(sparse.clone()).map_err(|e| e.to_string())?;
    let cfg = AutoencoderConfig {
        bottleneck: 4,
        epochs: 20,
        batch_size: 8,
        ..Default::default()
    };
    let (trained, _) = train(&m, &cfg).map_err(|e| e.to_string())?;
    let imputed = impute_zeros(&m, &trained).map_err(|e| e.to_string())?;
    let preserved = sparse
        .iter()
        .zip(imputed.values())
        .filter(|(a, _)| **a != 0.0)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(preserved, || "an observed entry changed".into())?;
    Ok(format!("{checked} parameters, max relative error {worst:.1e}; observed entries bit-identical"))
}

fn kmeans_checks() -> Outcome {
    let mut rng = rng(21);
    let mut iterations = 0;
    for case in 0..100 {
        let n = rng.random_range(10..80);
        let d = rng.random_range(1..6);
        let points = random_matrix(&mut rng, n, d);
        let k = rng.random_range(1..=6.min(n));
        let cfg = KmeansConfig {
            n_init: 3,
            ..KmeansConfig::new(k, case)
        };
        for trace in kmeans_traces(points.view(), &cfg).map_err(|e| e.to_string())? {
            for pair in trace.inertia_history.windows(2) {
                ensure(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-12, || {
                    format!("case {case}: inertia rose {} -> {}", pair[0], pair[1])
                })?;
            }
            iterations += trace.inertia_history.len();
        }
    }

    let centers = [[0.0, 0.0], [3.0, 0.5], [1.2, 2.8]];
    let points = Array2::from_shape_fn((12, 2), |(i, j)| centers[i % 3][j] + rng.random_range(-1.2..1.2));
    let optimum = exhaustive_kmeans_optimum(&points, 3);
    let hits = (0..10u64)
        .filter(|&seed| {
            let a = subspca_core::kmeans(points.view(), &KmeansConfig::new(3, seed)).unwrap();
            (a.inertia - optimum).abs() <= 1e-9 * optimum.max(1.0)
        })
        .count();
    ensure(hits >= 9, || format!("global optimum reached for {hits}/10 seeds"))?;
    Ok(format!("100 instances monotone over {iterations} iterations; optimum {optimum:.6} hit by {hits}/10 seeds"))
}

fn leiden_checks() -> Outcome {
    let mut rng = rng(31);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let n = rng.random_range(1..=60);
        let edges = planted_graph(&mut rng, n);
        let g = GeneGraph::new(n, edges.clone()).map_err(|e| e.to_string())?;
        let p = leiden_partition(&g, 1.0, case).map_err(|e| e.to_string())?;
        ensure(communities_connected(n, &edges, &p.community_of), || {
            format!("case {case}: disconnected community")
        })?;
        let q = naive_modularity(n, &edges, &p.community_of, 1.0);
        worst = worst.max((q - p.quality).abs());
    }
    ensure(worst <= 1e-10, || format!("modularity deviation {worst:e}"))?;

    let mut edges = Vec::new();
    for offset in [0, 8] {
        for u in 0..8 {
            for v in u + 1..8 {
                edges.push((offset + u, offset + v, 1.0));
            }
        }
    }
    edges.push((7, 8, 1.0));
    let g = GeneGraph::new(16, edges).map_err(|e| e.to_string())?;
    let p = leiden_partition(&g, 1.0, 0).map_err(|e| e.to_string())?;
    let c = &p.community_of;
    let exact = (0..8).all(|i| c[i] == c[0]) && (8..16).all(|i| c[i] == c[8]) && c[0] != c[8];
    ensure(exact, || format!("two-clique partition {c:?}"))?;
    Ok(format!("50 graphs connected, modularity deviation {worst:.1e}; two cliques recovered"))
}

fn synthetic_sweep_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        normalize: false,
        hvg: false,
        impute: false,
        strategies: vec![Strategy::Sequential],
        k_min: 2,
        k_max: 10,
        seed,
        ..Default::default()
    }
}

fn win_case() -> Outcome {
    let mut not_worse = 0;
    let mut summary = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let (m, labels) = generate(&SyntheticConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let report = run_sweep(&m, &labels, &synthetic_sweep_config(seed)).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        let s = &report.strategies[0];
        let max = s.max_ari.unwrap_or(f64::NEG_INFINITY);
        if max >= report.baseline_ari {
            not_worse += 1;
        }
        if s.win_count == 0 {
            failures.push(seed);
        }
        summary.push(format!("{}/{}", s.win_count, s.trial_count));
    }
    ensure(not_worse >= 8, || format!("max >= baseline in only {not_worse}/10 seeds"))?;
    ensure(failures.is_empty(), || format!("no win for seeds {failures:?}"))?;
    ensure(slowest < Duration::from_secs(300), || format!("slowest sweep {slowest:?}"))?;
    Ok(format!(
        "max >= baseline in {not_worse}/10 seeds; wins per seed {}; slowest sweep {:.1}s",
        summary.join(" "),
        slowest.as_secs_f64()
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (m, labels) = generate(&SyntheticConfig {
        n_cells: 120,
        n_genes: 300,
        n_clusters: 4,
        markers_per_cluster: 15,
        effect: 2.5,
        seed: 3,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let input = dir.path().join("m.tsv");
    let label_path = dir.path().join("l.tsv");
    io::save_dense(&m.with_values(m.values().mapv(|v| (v * 10.0).round())).unwrap(), &input, b'\t')
        .map_err(|e| e.to_string())?;
    io::save_labels(&label_path, m.cell_ids(), labels.labels()).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        input,
        labels: label_path,
        n_top_genes: 200,
        ae_epochs: 5,
        ae_bottleneck: 16,
        k_max: 6,
        seed: 99,
        ..Default::default()
    };
    let first = report_to_string(&run_pipeline(&cfg).map_err(|e| e.to_string())?.0).map_err(|e| e.to_string())?;
    let second = report_to_string(&run_pipeline(&cfg).map_err(|e| e.to_string())?.0).map_err(|e| e.to_string())?;
    ensure(first == second, || "reports differ".into())?;
    Ok(format!("all four strategies with imputation, {} identical bytes", first.len()))
}

fn k1_degeneracy() -> Outcome {
    let (m, labels) = generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let cfg = synthetic_sweep_config(4);
    let baseline = run_baseline(&m, &labels, &cfg).map_err(|e| e.to_string())?;
    let single = SubspaceSpec {
        strategy: Strategy::Sequential,
        n_genes: m.n_genes(),
        overlap_fraction: cfg.overlap_fraction,
        seed: cfg.seed,
        partitions: vec![(0..m.n_genes()).collect()],
    };
    let (ari, _) = run_trial(&m, &labels, &single, &cfg).map_err(|e| e.to_string())?;
    ensure(ari.to_bits() == baseline.to_bits(), || format!("k=1 ARI {ari} vs baseline {baseline}"))?;
    let blocks = reduce_subspaces(&m, &single, cfg.variance_threshold).map_err(|e| e.to_string())?;
    let whole = pca_fit(m.values().view(), cfg.variance_threshold).map_err(|e| e.to_string())?;
    ensure(blocks.len() == 1 && blocks[0].scores.len_of(Axis(1)) == whole.n_components(), || {
        "k=1 embedding width differs from whole-matrix PCA".into()
    })?;
    Ok(format!("ARI {ari:.10} identical to baseline"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("ARI oracle", Duration::from_secs(10), ari_oracle),
        ("PCA oracle", Duration::from_secs(5), pca_oracle),
        ("Subspace laws", Duration::from_secs(5), subspace_laws),
        ("Autoencoder gradient and preservation", Duration::from_secs(30), autoencoder_checks),
        ("K-means monotonicity and global optimum", Duration::from_secs(60), kmeans_checks),
        ("Leiden guarantees", Duration::from_secs(60), leiden_checks),
        ("Win-case reproduction", Duration::from_secs(600), win_case),
        ("Determinism", Duration::from_secs(600), determinism),
        ("k=1 degeneracy", Duration::from_secs(600), k1_degeneracy),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed <= limit {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {:.2}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.2}s]", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.2}s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
