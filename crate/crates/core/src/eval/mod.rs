//! Metrics, confusion matrices, t-SNE projections and report emission.

pub mod metrics;
pub mod plots;
pub mod tsne;

use std::path::PathBuf;

use thiserror::Error;

pub use metrics::{
    collapse_confusion, confusion_matrix, confusion_matrix_named, emit_report, metrics,
    read_report, ConfusionMatrix, EvalReport, ExperimentDescriptor, Metrics,
};
pub use plots::{emit_projection_plot, emit_report_plots};
pub use tsne::{joint_probabilities, tsne, tsne_embed, Projection2D, TsneParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("confusion counts are not square")]
    NotSquare,
    #[error("{n} points are too few for perplexity {perplexity}")]
    TooFewPoints { n: usize, perplexity: f64 },
    #[error("input rows have different lengths")]
    RaggedInput,
    #[error("non-finite value")]
    NonFinite,
    #[error("invalid parameter {0}")]
    InvalidParameter(&'static str),
    #[error("cannot write {0}: {1}")]
    Write(PathBuf, std::io::Error),
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
