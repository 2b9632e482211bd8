//! Scenario sampling, feature encoding and dataset files.

pub mod dataset;
pub mod encode;
pub mod sampling;

use thiserror::Error;

use crate::epi::EpiError;
use crate::metapop::MetapopError;

pub use dataset::{
    generate_dataset, read_dataset, run_scenario, write_ndjson, Dataset, DatasetHeader, DatasetWriter, GraphSpec, Sample,
    SampleMeta, ScenarioConfig, ScenarioRun, DATASET_SCHEMA_VERSION,
};
pub use encode::{
    descriptor, encode_nonspatial, encode_spatial, inverse_log1p, transform_log1p, DESCRIPTOR_WIDTH, INPUT_DAYS,
    NONSPATIAL_WIDTH, SPATIAL_WIDTH,
};
pub use sampling::{
    sample_change_points, sample_change_points_exact, sample_init, sample_outbreak_init, sample_persistent_init,
    OutbreakDraw, PersistentDraw, Regime, CHANGE_WINDOW,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected {expected}, found {found}")]
    Shape { what: &'static str, expected: usize, found: usize },
    #[error("log1p transform needs a nonnegative value, got {0}")]
    Domain(f64),
    #[error("initial infections exceed the population of age group {age} by {excess}")]
    InfeasibleAllocation { age: usize, excess: f64 },
    #[error("sample {index} failed after {attempts} attempts: {message}")]
    Simulation { index: usize, attempts: u32, message: String },
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
    #[error("dataset schema version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error(transparent)]
    Epi(#[from] EpiError),
    #[error(transparent)]
    Metapop(#[from] MetapopError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
