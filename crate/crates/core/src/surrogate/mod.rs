//! Surrogate networks: dense, GCN and ARMA layers, training, grid search and checkpoints.

pub mod checkpoint;
pub mod grid;
pub mod model;
pub mod spec;
pub mod train;

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::scenario::ScenarioError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, GraphBinding, CHECKPOINT_SCHEMA_VERSION};
pub use grid::{grid_search, kfold, write_grid_csv, GridPoint, GridResult, GridSpace};
pub use model::{labels_to_rows, rows_to_labels, FeatureScaling, Network, Surrogate};
pub use spec::{Activation, LayerKind, LayerSpec, ModelSpec, Preset};
pub use train::{train, train_from, EpochRecord, OptimizerKind, TrainConfig, TrainingMeta};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("encoding mismatch: expected {expected} values, found {found}")]
    Encoding { expected: usize, found: usize },
    #[error("graph mismatch: {0}")]
    GraphMismatch(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{0}")]
    EmptySplit(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint schema version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
