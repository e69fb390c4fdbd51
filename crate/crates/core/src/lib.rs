//! Feature-subspace PCA clustering for single-cell expression data.
//!
//! The gene axis of a cells x genes matrix is split into (possibly
//! overlapping) subspaces, each subspace is reduced independently with PCA,
//! the reduced blocks are concatenated and the cells are clustered with
//! K-means. Clusterings are scored against ground truth with the adjusted
//! Rand index.
//!
//! Module map:
//!
//! * [`matrix`] and [`io`]: expression matrix model and file formats
//! * [`preprocess`]: log-normalization and highly variable gene selection
//! * [`impute`]: denoising autoencoder imputation of dropout zeros
//! * [`subspace`]: sequential, shuffled and random-bucket gene partitions
//! * [`gene_graph`]: gene kNN graph and Leiden community partitions
//! * [`reduce`]: per-subspace PCA and block merging
//! * [`cluster`]: seeded K-means
//! * [`metrics`]: Rand index and adjusted Rand index
//! * [`pipeline`]: baseline, division sweeps and reports

pub mod cluster;
pub mod error;
pub mod gene_graph;
pub mod impute;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod reduce;
pub mod seed;
pub mod subspace;
pub mod synthetic;

pub use cluster::{kmeans, ClusterAssignment, KmeansConfig};
pub use error::{Error, Result};
pub use gene_graph::{CommunityPartition, GeneGraph};
pub use impute::{AutoencoderConfig, AutoencoderModel};
pub use matrix::{ExpressionMatrix, LabelSet, Orientation};
pub use metrics::{adjusted_rand_index, rand_index, ContingencyTable};
pub use pipeline::{PipelineConfig, PipelineReport, StrategyReport, TrialResult};
pub use preprocess::HvgConfig;
pub use reduce::{EmbeddingBlock, PcaModel};
pub use subspace::{Strategy, SubspaceSpec};
