//! Surrogate-assisted multi-objective search over a residual encoder space.
//!
//! The engine trades predicted segmentation accuracy against inference speed:
//! a ranking-loss MLP predicts accuracy, an additive look-up table predicts
//! latency, NSGA-II searches the surrogate problem, and a Kolmogorov–Smirnov
//! uniformity criterion picks which candidates receive an expensive
//! evaluation.
//!
//! Module map:
//!
//! - [`encoding`]: the 29-gene genotype, canonical form, decoding and one-hot features
//! - [`surrogate`]: the accuracy predictor, its losses and teacher ensemble
//! - [`latency`]: the per-layer latency look-up table
//! - [`moea`]: NSGA-II over genotypes
//! - [`prescreen`]: in-fill selection strategies
//! - [`evaluator`]: synthetic, tabular and external-process evaluators
//! - [`search`]: the outer loop, archive and final selection
//! - [`metrics`]: hypervolume, rank correlations, mIoU
//! - [`cli`]: command implementations behind the `archsearch` binary

pub mod cli;
pub mod config;
pub mod encoding;
pub mod evaluator;
pub mod latency;
pub mod metrics;
pub mod moea;
pub mod prescreen;
pub mod search;
pub mod seed;
pub mod surrogate;

pub use encoding::{Genotype, SearchSpace, GENOTYPE_LEN};
pub use evaluator::{EvaluationResult, Evaluator};
pub use latency::LatencyTable;
pub use search::{Archive, SearchConfig};
pub use surrogate::RankNetModel;
