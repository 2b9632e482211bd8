//! Regions coupled by commuter mobility.

pub mod graph;
pub mod mobility;
pub mod population;
pub mod simulate;

use thiserror::Error;

use crate::epi::EpiError;

pub use graph::{adjacency_from_mobility, gcn_normalize, normalize_adjacency, BinaryAdjacency, GraphSummary, MetapopGraph};
pub use mobility::{load_mobility, parse_mobility, synth_mobility, MobilityMatrix};
pub use population::{load_populations, synth_populations, NodePopulation};
pub use simulate::{simulate_metapopulation, CommuteConfig, MetapopRun, SimulationOptions};

#[derive(Debug, Error)]
pub enum MetapopError {
    #[error("a graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mobility weight ({row}, {col}) must be finite and nonnegative, got {value}")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("mobility diagonal entry {node} must be zero, got {value}")]
    NonzeroDiagonal { node: usize, value: f64 },
    #[error("parse error at row {row}{}: {message}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse { row: usize, col: Option<usize>, message: String },
    #[error("matrix is not square: {rows} rows, {cols} columns")]
    NotSquare { rows: usize, cols: usize },
    #[error("target density must be in (0, 1], got {0}")]
    InvalidDensity(f64),
    #[error("invalid population for node {node}: {reason}")]
    InvalidPopulation { node: usize, reason: String },
    #[error("node {node}: {source}")]
    Node { node: usize, source: EpiError },
    #[error(transparent)]
    Epi(#[from] EpiError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
