//! Optimization loop, initialization schemes, early stopping and
//! checkpoints.

mod adam;
mod checkpoint;
mod config;
mod data;
mod early_stop;
mod harness;
mod init;

pub use adam::{adam_step, clip_grad_norm, collect_gradients, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Manifest, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{DataConfig, TrainConfig, SEED_ENV, THREADS_ENV};
pub use data::{load_dataset, read_tokens, token_files};
pub use early_stop::{early_stop_update, EarlyStopState};
pub use harness::{
    evaluate_nll, train, Dataset, NllReport, StepRecord, StopReason, TrainOptions, TrainOutcome, TrainReport,
    DIVERGENCE_FACTOR, DIVERGENCE_STEPS,
};
pub use init::{init_parameters, xavier_bound, InitScheme, DEFAULT_INIT_STD};

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
