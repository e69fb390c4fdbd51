//! `subspca` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid input or arguments, 3 I/O failure,
//! 4 numerical divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use subspca_core::gene_graph::{build_gene_knn_graph, communities_to_subspaces, leiden_partition};
use subspca_core::impute::{impute_zeros, train};
use subspca_core::io;
use subspca_core::pipeline::{self, emit_plot_data, PipelineConfig};
use subspca_core::preprocess::{normalize_log, select_hvg};
use subspca_core::reduce::reduce_subspaces;
use subspca_core::seed::{derive_seed, Stream};
use subspca_core::subspace::{random_bucket_subspaces, sequential_subspaces, shuffled_subspaces};
use subspca_core::synthetic::{generate, SyntheticConfig};
use subspca_core::{
    adjusted_rand_index, kmeans, AutoencoderConfig, Error, ExpressionMatrix, HvgConfig,
    KmeansConfig, Orientation, Strategy,
};

#[derive(Parser)]
#[command(name = "subspca", version, about = "Feature-subspace PCA clustering for single-cell expression data")]
struct Cli {
    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic mixture and its labels.
    Generate(GenerateArgs),
    /// Normalize, log-transform and keep highly variable genes.
    Preprocess(PreprocessArgs),
    /// Train a denoising autoencoder and fill zero entries.
    Impute(ImputeArgs),
    /// Build a gene partition for one strategy.
    Subspace(SubspaceArgs),
    /// Per-partition PCA, merged into one embedding.
    Reduce(ReduceArgs),
    /// K-means on an embedding.
    Cluster(ClusterArgs),
    /// Full pipeline: baseline plus the division sweep.
    Sweep(SweepArgs),
    /// Summarize a saved report.
    Report(ReportArgs),
}

#[derive(Args)]
struct MatrixInput {
    /// Dense delimited table, or a MatrixMarket file with --mtx-cells/--mtx-genes.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "cells-in-rows")]
    orientation: Orientation,
    #[arg(long, default_value = "\t")]
    delimiter: char,
    #[arg(long, requires = "mtx_genes")]
    mtx_cells: Option<PathBuf>,
    #[arg(long, requires = "mtx_cells")]
    mtx_genes: Option<PathBuf>,
}

impl MatrixInput {
    fn load(&self) -> Result<ExpressionMatrix> {
        let m = match (&self.mtx_cells, &self.mtx_genes) {
            (Some(c), Some(g)) => io::load_matrix_market_oriented(&self.input, c, g, self.orientation)?,
            _ => io::load_dense(&self.input, self.orientation, delimiter_byte(self.delimiter)?)?,
        };
        info!("loaded {} cells x {} genes from {}", m.n_cells(), m.n_genes(), self.input.display());
        Ok(m)
    }
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::validation(format!("delimiter '{c}' is not a single byte")).into())
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 300)]
    cells: usize,
    #[arg(long, default_value_t = 2000)]
    genes: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 20)]
    markers: usize,
    #[arg(long, default_value_t = 2.0)]
    effect: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    labels_out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    matrix: MatrixInput,
    #[arg(long, default_value_t = 1e4)]
    target_sum: f64,
    #[arg(long, default_value_t = 10_000)]
    n_top_genes: usize,
    #[arg(long, default_value_t = 20)]
    n_bins: usize,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    no_hvg: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImputeArgs {
    #[command(flatten)]
    matrix: MatrixInput,
    #[arg(long, default_value_t = 50)]
    bottleneck: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse a saved model instead of training.
    #[arg(long, conflicts_with = "model_out")]
    model: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SubspaceArgs {
    /// Matrix to partition (required for gene-cluster; otherwise only its width is used).
    #[arg(short, long, conflicts_with = "n_genes")]
    input: Option<PathBuf>,
    #[arg(long)]
    n_genes: Option<usize>,
    #[arg(long, default_value = "cells-in-rows")]
    orientation: Orientation,
    #[arg(long, default_value = "\t")]
    delimiter: char,
    #[arg(short, long, default_value = "sequential")]
    strategy: Strategy,
    #[arg(short, long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    overlap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    n_neighbors: usize,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    matrix: MatrixInput,
    /// Partition file from `subspace`; omitted means the whole matrix.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    variance_threshold: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(short, long)]
    embedding: PathBuf,
    /// Ground truth; when given, the ARI is printed and sets the default cluster count.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(short = 'c', long)]
    n_clusters: Option<usize>,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set k_max=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated strategy names.
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    no_impute: bool,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    /// Also write the plot table here.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

fn run_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        n_cells: a.cells,
        n_genes: a.genes,
        n_clusters: a.clusters,
        markers_per_cluster: a.markers,
        effect: a.effect,
        noise_sd: a.noise,
        seed: a.seed,
    };
    let (m, labels) = generate(&cfg)?;
    io::save_dense(&m, &a.out, b'\t')?;
    io::save_labels(&a.labels_out, m.cell_ids(), labels.labels())?;
    println!("wrote {} cells x {} genes to {}", m.n_cells(), m.n_genes(), a.out.display());
    Ok(())
}

fn run_preprocess(a: &PreprocessArgs) -> Result<()> {
    let cfg = HvgConfig {
        target_sum: a.target_sum,
        n_top_genes: a.n_top_genes,
        n_bins: a.n_bins,
    };
    cfg.validate()?;
    let mut m = a.matrix.load()?;
    if !a.no_normalize {
        m = normalize_log(&m, cfg.target_sum)?;
    }
    if !a.no_hvg {
        m = select_hvg(&m, &cfg)?;
    }
    io::save_dense(&m, &a.out, b'\t')?;
    println!("kept {} genes", m.n_genes());
    Ok(())
}

fn run_impute(a: &ImputeArgs) -> Result<()> {
    let m = a.matrix.load()?;
    let model = match &a.model {
        Some(path) => subspca_core::AutoencoderModel::load(path)?,
        None => {
            let cfg = AutoencoderConfig {
                bottleneck: a.bottleneck,
                noise_mask_prob: a.noise,
                epochs: a.epochs,
                batch_size: a.batch_size,
                learning_rate: a.learning_rate,
                seed: derive_seed(a.seed, Stream::Autoencoder, 0),
            };
            let (model, losses) = train(&m, &cfg)?;
            if let Some(last) = losses.last() {
                info!("final training loss {last:.6}");
            }
            if let Some(path) = &a.model_out {
                model.save(path)?;
            }
            model
        }
    };
    let out = impute_zeros(&m, &model)?;
    io::save_dense(&out, &a.out, b'\t')?;
    println!("imputed {} cells x {} genes", out.n_cells(), out.n_genes());
    Ok(())
}

fn run_subspace(a: &SubspaceArgs) -> Result<()> {
    let matrix = match &a.input {
        Some(path) => Some(io::load_dense(path, a.orientation, delimiter_byte(a.delimiter)?)?),
        None => None,
    };
    let d = match (&matrix, a.n_genes) {
        (Some(m), _) => m.n_genes(),
        (None, Some(d)) => d,
        (None, None) => return Err(Error::validation("either --input or --n-genes is required").into()),
    };
    let spec = match a.strategy {
        Strategy::Sequential => sequential_subspaces(d, a.k, a.overlap)?,
        Strategy::Shuffled => shuffled_subspaces(d, a.k, a.overlap, derive_seed(a.seed, Stream::Shuffle, a.k as u64))?,
        Strategy::Random => random_bucket_subspaces(d, a.k, a.overlap, derive_seed(a.seed, Stream::Bucket, a.k as u64))?,
        Strategy::GeneCluster => {
            let m = matrix.ok_or_else(|| Error::validation("gene-cluster needs --input"))?;
            let graph = build_gene_knn_graph(&m, a.n_neighbors)?;
            let seed = derive_seed(a.seed, Stream::Leiden, 0);
            let partition = leiden_partition(&graph, a.resolution, seed)?;
            info!("modularity {:.6}", partition.quality);
            let mut spec = communities_to_subspaces(&partition);
            spec.seed = seed;
            spec
        }
    };
    io::save_spec(&a.out, &spec)?;
    println!("{} partitions, sizes {:?}", spec.k(), spec.sizes());
    Ok(())
}

fn run_reduce(a: &ReduceArgs) -> Result<()> {
    let m = a.matrix.load()?;
    let spec = match &a.spec {
        Some(path) => io::load_spec(path)?,
        None => subspca_core::SubspaceSpec::whole(m.n_genes()),
    };
    let blocks = reduce_subspaces(&m, &spec, a.variance_threshold)?;
    io::save_embedding(&a.out, m.cell_ids(), &blocks)?;
    let widths: Vec<usize> = blocks.iter().map(|b| b.width()).collect();
    println!("embedding width {} from blocks {:?}", widths.iter().sum::<usize>(), widths);
    Ok(())
}

fn run_cluster(a: &ClusterArgs) -> Result<()> {
    let (emb, _) = io::load_embedding(&a.embedding)?;
    let truth = match &a.labels {
        Some(path) => Some(io::load_labels(path, emb.cell_ids())?),
        None => None,
    };
    let n_clusters = a
        .n_clusters
        .or_else(|| truth.as_ref().map(|t| t.n_classes()))
        .ok_or_else(|| Error::validation("--n-clusters is required without --labels"))?;
    let cfg = KmeansConfig {
        n_clusters,
        n_init: a.n_init,
        max_iter: a.max_iter,
        tol: a.tol,
        seed: derive_seed(a.seed, Stream::Kmeans, 0),
    };
    let assignment = kmeans(emb.values().view(), &cfg)?;
    io::save_labels(&a.out, emb.cell_ids(), &assignment.labels)?;
    println!("inertia {:.6} after {} iterations", assignment.inertia, assignment.n_iter);
    if let Some(t) = truth {
        println!("ARI {:.6}", adjusted_rand_index(t.labels(), &assignment.labels)?);
    }
    Ok(())
}

fn sweep_config(a: &SweepArgs) -> Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::from_kv_file(path)?,
        None => PipelineConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(p) = &a.input {
        cfg.input = p.clone();
    }
    if let Some(p) = &a.labels {
        cfg.labels = p.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.output_dir {
        cfg.output_dir = p.clone();
    }
    if let Some(s) = &a.strategies {
        cfg.set("strategies", s)?;
    }
    if let Some(k) = a.k_min {
        cfg.k_min = k;
    }
    if let Some(k) = a.k_max {
        cfg.k_max = k;
    }
    if a.no_impute {
        cfg.impute = false;
    }
    if cfg.input.as_os_str().is_empty() || cfg.labels.as_os_str().is_empty() {
        return Err(Error::validation("input and labels must be set").into());
    }
    Ok(cfg)
}

fn print_summary(report: &pipeline::PipelineReport) {
    println!(
        "{} cells, {} genes, {} clusters; baseline ARI {:.4}",
        report.n_cells, report.n_genes, report.n_clusters, report.baseline_ari
    );
    let fmt = |x: Option<f64>| x.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"));
    for s in &report.strategies {
        println!(
            "{:<13} wins {:>2}/{:<2} mean {} max {}",
            s.strategy.as_str(),
            s.win_count,
            s.trial_count,
            fmt(s.mean_ari),
            fmt(s.max_ari)
        );
    }
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = sweep_config(a)?;
    let (report, timings) = pipeline::run_pipeline(&cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_report(&report, &dir.join("report.json"))?;
    emit_plot_data(&report, &dir.join("plot.tsv"))?;
    write_json(&dir.join("timings.json"), &timings)?;
    print_summary(&report);
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing timings")?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let report = io::load_report(&a.report)?;
    print_summary(&report);
    if let Some(path) = &a.plot_out {
        emit_plot_data(&report, path)?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io { .. }) => 3,
        Some(Error::Divergence(_)) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Impute(a) => run_impute(a),
        Command::Subspace(a) => run_subspace(a),
        Command::Reduce(a) => run_reduce(a),
        Command::Cluster(a) => run_cluster(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
