//! Single-region compartment model.

pub mod contact;
pub mod io;
pub mod model;
pub mod params;
pub mod solver;
pub mod state;
pub mod trajectory;

use thiserror::Error;

pub use contact::{ContactChangePoint, ContactMatrix, ContactPolicy, MAX_CHANGE_POINTS};
pub use model::{force_of_infection, integrate, rhs};
pub use params::{AgeGroupSpec, AgeParameters, EpiParameters, AGE_GROUPS};
pub use solver::{SolverError, SolverStats, Tolerances};
pub use state::{CompartmentState, InfectionState, COMPARTMENTS, STATES};
pub use trajectory::DailyTrajectory;

#[derive(Debug, Error)]
pub enum EpiError {
    #[error("living population of age group {age} is not positive")]
    DegeneratePopulation { age: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("invalid contact policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("horizon must be at least one day, got {0}")]
    InvalidHorizon(u32),
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
