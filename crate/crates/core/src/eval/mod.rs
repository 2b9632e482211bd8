//! Dataset splits, MAPE evaluation, the mean-trajectory baseline and runtime benchmarks.

pub mod bench;
pub mod metrics;
pub mod split;

use thiserror::Error;

use crate::scenario::ScenarioError;
use crate::surrogate::SurrogateError;

pub use bench::{bench_runtime, write_bench_csv, BenchCell, BenchConfig, BenchReport};
pub use metrics::{
    evaluate_dummy, evaluate_model, mape, CellReport, DummyEstimator, EvalReport, MapeAccumulator, MapeSummary,
    NodeReport, Predictor,
};
pub use split::{split_dataset, SplitPlan};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("the training labels are empty")]
    EmptyTrain,
    #[error("encoding mismatch: expected {expected} values, found {found}")]
    Encoding { expected: usize, found: usize },
    #[error("no model for horizon {0}")]
    MissingModel(usize),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
