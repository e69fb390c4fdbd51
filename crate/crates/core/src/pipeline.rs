//! End-to-end orchestration: preprocessing, the undivided baseline, the
//! division sweep over every strategy, and report assembly.
//!
//! Report values (ARIs and their summaries) are rounded to 10 significant
//! digits when the report is assembled and serialized as `d.ddddddddde±x`,
//! so a report written twice from the same inputs is byte-identical and
//! re-reading it reproduces the in-memory values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, KmeansConfig};
use crate::error::{Error, Result};
use crate::gene_graph::{
    build_gene_knn_graph, communities_to_subspaces, leiden_partition, DEFAULT_N_NEIGHBORS,
    DEFAULT_RESOLUTION,
};
use crate::impute::{impute_zeros, train, AutoencoderConfig};
use crate::io;
use crate::matrix::{ExpressionMatrix, LabelSet, Orientation};
use crate::metrics::adjusted_rand_index;
use crate::preprocess::{normalize_log, select_hvg, HvgConfig};
use crate::reduce::{merge_blocks, reduce_subspaces, DEFAULT_VARIANCE_THRESHOLD};
use crate::seed::{derive_seed, Stream};
use crate::subspace::{
    random_bucket_subspaces, sequential_subspaces, shuffled_subspaces, Strategy, SubspaceSpec,
    DEFAULT_OVERLAP_FRACTION,
};

/// Every knob of a run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub orientation: Orientation,
    pub delimiter: char,
    /// Identifier files for a MatrixMarket input.
    pub mtx_cells: Option<PathBuf>,
    pub mtx_genes: Option<PathBuf>,
    pub labels: PathBuf,
    pub normalize: bool,
    pub hvg: bool,
    pub target_sum: f64,
    pub n_top_genes: usize,
    pub n_bins: usize,
    pub impute: bool,
    pub ae_bottleneck: usize,
    pub ae_noise: f64,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,
    pub strategies: Vec<Strategy>,
    pub k_min: usize,
    pub k_max: usize,
    pub overlap_fraction: f64,
    pub variance_threshold: f64,
    /// Defaults to the number of ground-truth classes.
    pub n_clusters: Option<usize>,
    pub kmeans_n_init: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub n_neighbors: usize,
    pub resolution: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Store full partition index lists in the report.
    pub verbose: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let hvg = HvgConfig::default();
        let ae = AutoencoderConfig::default();
        Self {
            input: PathBuf::new(),
            orientation: Orientation::CellsInRows,
            delimiter: '\t',
            mtx_cells: None,
            mtx_genes: None,
            labels: PathBuf::new(),
            normalize: true,
            hvg: true,
            target_sum: hvg.target_sum,
            n_top_genes: hvg.n_top_genes,
            n_bins: hvg.n_bins,
            impute: true,
            ae_bottleneck: ae.bottleneck,
            ae_noise: ae.noise_mask_prob,
            ae_epochs: ae.epochs,
            ae_batch_size: ae.batch_size,
            ae_learning_rate: ae.learning_rate,
            strategies: Strategy::ALL.to_vec(),
            k_min: 2,
            k_max: 20,
            overlap_fraction: DEFAULT_OVERLAP_FRACTION,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            n_clusters: None,
            kmeans_n_init: 10,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-6,
            n_neighbors: DEFAULT_N_NEIGHBORS,
            resolution: DEFAULT_RESOLUTION,
            seed: 0,
            output_dir: PathBuf::from("."),
            verbose: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::validation(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::validation(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl PipelineConfig {
    pub fn hvg_config(&self) -> HvgConfig {
        HvgConfig {
            target_sum: self.target_sum,
            n_top_genes: self.n_top_genes,
            n_bins: self.n_bins,
        }
    }

    /// Autoencoder settings; the seed comes from the master seed.
    pub fn autoencoder_config(&self) -> AutoencoderConfig {
        AutoencoderConfig {
            bottleneck: self.ae_bottleneck,
            noise_mask_prob: self.ae_noise,
            epochs: self.ae_epochs,
            batch_size: self.ae_batch_size,
            learning_rate: self.ae_learning_rate,
            seed: derive_seed(self.seed, Stream::Autoencoder, 0),
        }
    }

    pub fn kmeans_config(&self, n_clusters: usize) -> KmeansConfig {
        KmeansConfig {
            n_clusters,
            n_init: self.kmeans_n_init,
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            seed: derive_seed(self.seed, Stream::Kmeans, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 {
            return Err(Error::validation(format!("k_min must be at least 2, got {}", self.k_min)));
        }
        if self.k_max < self.k_min {
            return Err(Error::validation(format!(
                "k_max {} is below k_min {}",
                self.k_max, self.k_min
            )));
        }
        if !(0.20..=0.30).contains(&self.overlap_fraction) {
            return Err(Error::validation(format!(
                "overlap_fraction {} outside [0.20, 0.30]",
                self.overlap_fraction
            )));
        }
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(Error::validation(format!(
                "variance_threshold {} outside (0, 1]",
                self.variance_threshold
            )));
        }
        if self.n_clusters == Some(0) {
            return Err(Error::validation("n_clusters must be at least 1"));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::validation("resolution must be positive"));
        }
        self.hvg_config().validate()
    }

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input" => self.input = PathBuf::from(v),
            "orientation" => self.orientation = v.parse()?,
            "delimiter" => {
                self.delimiter = match v {
                    "tab" | "\\t" => '\t',
                    "comma" => ',',
                    _ => {
                        let mut chars = v.chars();
                        match (chars.next(), chars.next()) {
                            (Some(c), None) => c,
                            _ => return Err(Error::validation(format!("invalid delimiter '{v}'"))),
                        }
                    }
                }
            }
            "mtx_cells" => self.mtx_cells = Some(PathBuf::from(v)),
            "mtx_genes" => self.mtx_genes = Some(PathBuf::from(v)),
            "labels" => self.labels = PathBuf::from(v),
            "normalize" => self.normalize = parse_bool(key, v)?,
            "hvg" => self.hvg = parse_bool(key, v)?,
            "target_sum" => self.target_sum = parse_value(key, v)?,
            "n_top_genes" => self.n_top_genes = parse_value(key, v)?,
            "n_bins" => self.n_bins = parse_value(key, v)?,
            "impute" => self.impute = parse_bool(key, v)?,
            "ae_bottleneck" => self.ae_bottleneck = parse_value(key, v)?,
            "ae_noise" => self.ae_noise = parse_value(key, v)?,
            "ae_epochs" => self.ae_epochs = parse_value(key, v)?,
            "ae_batch_size" => self.ae_batch_size = parse_value(key, v)?,
            "ae_learning_rate" => self.ae_learning_rate = parse_value(key, v)?,
            "strategies" => {
                self.strategies = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?
                }
            }
            "k_min" => self.k_min = parse_value(key, v)?,
            "k_max" => self.k_max = parse_value(key, v)?,
            "overlap_fraction" => self.overlap_fraction = parse_value(key, v)?,
            "variance_threshold" => self.variance_threshold = parse_value(key, v)?,
            "n_clusters" => self.n_clusters = Some(parse_value(key, v)?),
            "kmeans_n_init" => self.kmeans_n_init = parse_value(key, v)?,
            "kmeans_max_iter" => self.kmeans_max_iter = parse_value(key, v)?,
            "kmeans_tol" => self.kmeans_tol = parse_value(key, v)?,
            "n_neighbors" => self.n_neighbors = parse_value(key, v)?,
            "resolution" => self.resolution = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "verbose" => self.verbose = parse_bool(key, v)?,
            other => return Err(Error::validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document; `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("config line {} is not 'key = value'", i + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_kv_text(&text)?;
        Ok(cfg)
    }
}

/// Rounds to 10 significant digits (the report's precision).
pub fn round_sig10(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.9e}").parse().expect("formatted float parses")
}

fn format_sig10(x: f64) -> String {
    format!("{x:.9e}")
}

mod sig10 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if !x.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(super::format_sig10(*x)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) if v.is_finite() => super::serialize(v, s),
                _ => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<f64>::deserialize(d)
        }
    }
}

/// Outcome of one (strategy, division count) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Requested division count; for gene clustering, the partition count.
    pub k: usize,
    #[serde(with = "sig10::option")]
    pub ari: Option<f64>,
    pub n_partitions: usize,
    pub partition_sizes: Vec<usize>,
    /// Merged embedding width (sum of retained components).
    pub embedding_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<Vec<usize>>>,
}

impl TrialResult {
    pub fn failed(k: usize, err: &Error) -> Self {
        Self {
            k,
            ari: None,
            n_partitions: 0,
            partition_sizes: Vec::new(),
            embedding_dim: 0,
            error: Some(err.to_string()),
            seed: None,
            partitions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub trial_count: usize,
    /// Trials whose ARI is strictly above the baseline.
    pub win_count: usize,
    #[serde(with = "sig10::option")]
    pub mean_ari: Option<f64>,
    #[serde(with = "sig10::option")]
    pub max_ari: Option<f64>,
    pub trials: Vec<TrialResult>,
}

impl StrategyReport {
    /// Rounds every ARI and derives the tallies from the rounded values.
    pub fn from_trials(strategy: Strategy, mut trials: Vec<TrialResult>, baseline_ari: f64) -> Self {
        let baseline = round_sig10(baseline_ari);
        for t in &mut trials {
            t.ari = t.ari.map(round_sig10);
        }
        let aris: Vec<f64> = trials.iter().filter_map(|t| t.ari).collect();
        let win_count = aris.iter().filter(|&&a| a > baseline).count();
        let mean_ari = (!aris.is_empty()).then(|| round_sig10(aris.iter().sum::<f64>() / aris.len() as f64));
        let max_ari = aris.iter().copied().reduce(f64::max);
        Self {
            strategy,
            trial_count: trials.len(),
            win_count,
            mean_ari,
            max_ari,
            trials,
        }
    }

    /// `(k, ari)` for every successful trial.
    pub fn series(&self) -> Vec<(usize, f64)> {
        self.trials.iter().filter_map(|t| t.ari.map(|a| (t.k, a))).collect()
    }
}

/// Deterministic record of a sweep. Wall-clock timings live in
/// [`StageTimings`], outside the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub n_cells: usize,
    pub n_genes: usize,
    pub n_clusters: usize,
    #[serde(with = "sig10")]
    pub baseline_ari: f64,
    pub baseline_embedding_dim: usize,
    pub strategies: Vec<StrategyReport>,
}

impl PipelineReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    pub fn total_wins(&self) -> usize {
        self.strategies.iter().map(|s| s.win_count).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_s: f64,
    pub preprocess_s: f64,
    pub impute_s: f64,
    pub baseline_s: f64,
    pub sweep_s: f64,
}

/// Loads the configured input and labels.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<(ExpressionMatrix, LabelSet)> {
    let m = match (&cfg.mtx_cells, &cfg.mtx_genes) {
        (Some(cells), Some(genes)) => {
            io::load_matrix_market_oriented(&cfg.input, cells, genes, cfg.orientation)?
        }
        (None, None) => {
            let delim = u8::try_from(cfg.delimiter)
                .map_err(|_| Error::validation("delimiter must be a single-byte character"))?;
            io::load_dense(&cfg.input, cfg.orientation, delim)?
        }
        _ => return Err(Error::validation("mtx_cells and mtx_genes must be given together")),
    };
    let labels = io::load_labels(&cfg.labels, m.cell_ids())?;
    Ok((m, labels))
}

/// Normalization and HVG selection, as enabled.
pub fn preprocess(m: &ExpressionMatrix, cfg: &PipelineConfig) -> Result<ExpressionMatrix> {
    let mut out = m.clone();
    if cfg.normalize {
        out = normalize_log(&out, cfg.target_sum)?;
    }
    if cfg.hvg {
        out = select_hvg(&out, &cfg.hvg_config())?;
    }
    Ok(out)
}

/// Autoencoder imputation when enabled; otherwise the input unchanged.
pub fn impute_stage(m: &ExpressionMatrix, cfg: &PipelineConfig) -> Result<ExpressionMatrix> {
    if !cfg.impute {
        return Ok(m.clone());
    }
    let (model, losses) = train(m, &cfg.autoencoder_config())?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        log::info!("autoencoder loss {first:.6} -> {last:.6} over {} epochs", losses.len());
    }
    impute_zeros(m, &model)
}

fn n_clusters(labels: &LabelSet, cfg: &PipelineConfig) -> usize {
    cfg.n_clusters.unwrap_or_else(|| labels.n_classes())
}

fn check_labels(m: &ExpressionMatrix, labels: &LabelSet) -> Result<()> {
    if labels.len() != m.n_cells() {
        return Err(Error::validation(format!(
            "{} labels for {} cells",
            labels.len(),
            m.n_cells()
        )));
    }
    Ok(())
}

/// Reduces with `spec`, clusters the merged embedding and scores it.
pub fn run_trial(
    m: &ExpressionMatrix,
    labels: &LabelSet,
    spec: &SubspaceSpec,
    cfg: &PipelineConfig,
) -> Result<(f64, usize)> {
    check_labels(m, labels)?;
    let blocks = reduce_subspaces(m, spec, cfg.variance_threshold)?;
    let merged = merge_blocks(&blocks)?;
    let assignment = kmeans(merged.view(), &cfg.kmeans_config(n_clusters(labels, cfg)))?;
    let ari = adjusted_rand_index(labels.labels(), &assignment.labels)?;
    Ok((ari, merged.ncols()))
}

/// Whole-matrix PCA, K-means and ARI: the undivided reference.
pub fn run_baseline(m: &ExpressionMatrix, labels: &LabelSet, cfg: &PipelineConfig) -> Result<f64> {
    run_trial(m, labels, &SubspaceSpec::whole(m.n_genes()), cfg).map(|(ari, _)| ari)
}

/// Partitions for one strategy at division count `k`.
pub fn make_spec(m: &ExpressionMatrix, strategy: Strategy, k: usize, cfg: &PipelineConfig) -> Result<SubspaceSpec> {
    let d = m.n_genes();
    let f = cfg.overlap_fraction;
    match strategy {
        Strategy::Sequential => sequential_subspaces(d, k, f),
        Strategy::Shuffled => shuffled_subspaces(d, k, f, derive_seed(cfg.seed, Stream::Shuffle, k as u64)),
        Strategy::Random => random_bucket_subspaces(d, k, f, derive_seed(cfg.seed, Stream::Bucket, k as u64)),
        Strategy::GeneCluster => {
            let graph = build_gene_knn_graph(m, cfg.n_neighbors)?;
            let seed = derive_seed(cfg.seed, Stream::Leiden, 0);
            let partition = leiden_partition(&graph, cfg.resolution, seed)?;
            let mut spec = communities_to_subspaces(&partition);
            spec.seed = seed;
            Ok(spec)
        }
    }
}

fn trial(m: &ExpressionMatrix, labels: &LabelSet, strategy: Strategy, k: usize, cfg: &PipelineConfig) -> TrialResult {
    let spec = match make_spec(m, strategy, k, cfg) {
        Ok(s) => s,
        Err(e) => return TrialResult::failed(k, &e),
    };
    let k_reported = if strategy == Strategy::GeneCluster { spec.k() } else { k };
    match run_trial(m, labels, &spec, cfg) {
        Ok((ari, dim)) => TrialResult {
            k: k_reported,
            ari: Some(ari),
            n_partitions: spec.k(),
            partition_sizes: spec.sizes(),
            embedding_dim: dim,
            error: None,
            seed: (strategy != Strategy::Sequential).then_some(spec.seed),
            partitions: cfg.verbose.then(|| spec.partitions.clone()),
        },
        Err(e) => TrialResult::failed(k_reported, &e),
    }
}

/// Runs every enabled strategy over `k_min..=k_max` (gene clustering once)
/// and assembles the report. Trials that fail are recorded, not fatal.
pub fn run_sweep(m: &ExpressionMatrix, labels: &LabelSet, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    check_labels(m, labels)?;
    let baseline = run_baseline(m, labels, cfg)?;
    let baseline_dim = reduce_subspaces(m, &SubspaceSpec::whole(m.n_genes()), cfg.variance_threshold)?
        .iter()
        .map(|b| b.width())
        .sum();
    let mut strategies: Vec<Strategy> = cfg.strategies.clone();
    strategies.sort();
    strategies.dedup();

    let jobs: Vec<(Strategy, usize)> = strategies
        .iter()
        .flat_map(|&s| {
            let ks: Vec<usize> = if s == Strategy::GeneCluster {
                vec![0]
            } else {
                (cfg.k_min..=cfg.k_max).collect()
            };
            ks.into_iter().map(move |k| (s, k))
        })
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(s, k)| trial(m, labels, s, k, cfg))
        .collect();

    let reports = strategies
        .iter()
        .map(|&s| {
            let trials = jobs
                .iter()
                .zip(&results)
                .filter(|((js, _), _)| *js == s)
                .map(|(_, r)| r.clone())
                .collect();
            StrategyReport::from_trials(s, trials, baseline)
        })
        .collect();

    Ok(PipelineReport {
        config: cfg.clone(),
        n_cells: m.n_cells(),
        n_genes: m.n_genes(),
        n_clusters: n_clusters(labels, cfg),
        baseline_ari: round_sig10(baseline),
        baseline_embedding_dim: baseline_dim,
        strategies: reports,
    })
}

/// Load, preprocess, impute and sweep, timing each stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(PipelineReport, StageTimings)> {
    cfg.validate()?;
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let (raw, labels) = load_inputs(cfg)?;
    timings.load_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let processed = preprocess(&raw, cfg)?;
    timings.preprocess_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let imputed = impute_stage(&processed, cfg)?;
    timings.impute_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let report = run_sweep(&imputed, &labels, cfg)?;
    timings.sweep_s = t.elapsed().as_secs_f64();
    Ok((report, timings))
}

/// Plot table: one row per strategy with the baseline, mean and max ARI,
/// the tallies and the `k:ari` series.
pub fn emit_plot_data(report: &PipelineReport, path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "strategy\tbaseline_ari\tmean_ari\tmax_ari\twin_count\ttrial_count\tseries").map_err(io_err)?;
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_owned(), format_sig10);
    for s in &report.strategies {
        let series: Vec<String> = s
            .series()
            .iter()
            .map(|(k, a)| format!("{k}:{}", format_sig10(*a)))
            .collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.strategy,
            format_sig10(report.baseline_ari),
            opt(s.mean_ari),
            opt(s.max_ari),
            s.win_count,
            s.trial_count,
            series.join(";")
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Parsed plot row: strategy, baseline, mean, max, wins, trials, series.
pub type PlotRow = (String, f64, Option<f64>, Option<f64>, usize, usize, Vec<(usize, f64)>);

pub fn read_plot_data(path: &Path) -> Result<Vec<PlotRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let num = |s: &str, line: u64| -> Result<Option<f64>> {
        if s == "NA" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::parse(path, line, format!("bad number '{s}'")))
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let lineno = i as u64 + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(Error::parse(path, lineno, "expected 7 columns"));
        }
        let series = if f[6].is_empty() {
            Vec::new()
        } else {
            f[6].split(';')
                .map(|kv| {
                    let (k, a) = kv.split_once(':').ok_or_else(|| Error::parse(path, lineno, "bad series entry"))?;
                    Ok((
                        k.parse().map_err(|_| Error::parse(path, lineno, "bad k"))?,
                        num(a, lineno)?.unwrap_or(f64::NAN),
                    ))
                })
                .collect::<Result<_>>()?
        };
        rows.push((
            f[0].to_owned(),
            num(f[1], lineno)?.unwrap_or(f64::NAN),
            num(f[2], lineno)?,
            num(f[3], lineno)?,
            f[4].parse().map_err(|_| Error::parse(path, lineno, "bad win count"))?,
            f[5].parse().map_err(|_| Error::parse(path, lineno, "bad trial count"))?,
            series,
        ));
    }
    Ok(rows)
}
