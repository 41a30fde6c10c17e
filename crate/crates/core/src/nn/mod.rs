//! Saliency prediction network: model, losses, training and weight files.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod train;
pub mod weights;

pub use gradcheck::{grad_check, isolated_tap_gradients, random_case, GradCheckOptions, GradCheckReport};
pub use loss::{loss_bce, loss_l1, loss_mse, Loss, BCE_EPS};
pub use model::{sigmoid, BlockSpec, Model, ModelConfig, Param, Prediction};
pub use train::{pretrain_then_finetune, sample_gradients, sample_objective, train, PhaseRecord, Recipe, TrainConfig, TrainHistory};
pub use weights::{export_weights, import_encoder_weights, import_weights, read_weights, weights_bytes, write_weights, WeightFile};

use crate::chess::ChessError;
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected size {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("weight file mismatch: {0}")]
    FormatMismatch(String),
    #[error("recipe {recipe}: {reason}")]
    RecipeMismatch { recipe: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Chess(#[from] ChessError),
}
