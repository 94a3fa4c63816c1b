//! Accuracy surrogate: a ranking-loss MLP distilled from a teacher ensemble.

pub mod loss;
pub mod mlp;
pub mod ranknet;
pub mod teachers;
pub mod tree;

use thiserror::Error;

use crate::encoding::GenotypeError;

pub use loss::{cosine_lr, mse_loss, ranking_loss, sigmoid};
pub use ranknet::{regularized_objective, train_ranknet, FeatureEncoding, LossKind, Optimizer, RankNetModel, TrainConfig, TrainReport};
pub use teachers::TeacherEnsemble;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("no pair with distinct labels")]
    NoPairs,
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("epoch {epoch} outside schedule of {total} epochs")]
    Schedule { epoch: usize, total: usize },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("training labels are degenerate (fewer than two distinct values)")]
    DegenerateLabels,
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
