use epigraph::epi::{ContactChangePoint, ContactPolicy, COMPARTMENTS};
use epigraph::scenario::{Regime, CHANGE_WINDOW, INPUT_DAYS};
use epigraph::epi::MAX_CHANGE_POINTS;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const SCHEMA_VERSION: u32 = 1;
pub const HORIZONS: [u32; 3] = [30, 60, 90];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Mechanistic,
    Surrogate,
}

/// Initial conditions at day 0, sampled per node or given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Sampled { regime: Regime, seed: u64 },
    States { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangePointSpec {
    pub day: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub engine: Engine,
    pub initial: InitialSpec,
    #[serde(default)]
    pub change_points: Vec<ChangePointSpec>,
    pub horizon: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_id: Option<String>,
}

/// Trajectory values after the input window, flattened `[day][node][age][state]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResponse {
    pub schema_version: u32,
    pub engine: Engine,
    pub horizon: u32,
    pub nodes: usize,
    /// Simulation day of the first value; days before it are the input window.
    pub start_day: u32,
    pub shape: [usize; 4],
    pub values: Vec<f32>,
    pub latency_ms: f64,
    pub request: ScenarioRequest,
}

impl ScenarioRequest {
    /// Parses a body, reporting the failing field path.
    pub fn parse(body: &[u8]) -> Result<Self, ApiError> {
        let de = &mut serde_json::Deserializer::from_slice(body);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { None } else { Some(path) };
            ApiError::invalid(field, e.into_inner().to_string())
        })
    }

    /// Checks the constraints that do not depend on the loaded graph or model
    /// and builds the contact policy.
    pub fn validate(&self, base: &ContactPolicy, nodes: usize) -> Result<ContactPolicy, ApiError> {
        if !HORIZONS.contains(&self.horizon) {
            return Err(ApiError::invalid(Some("horizon".into()), format!("horizon must be one of 30, 60, 90, got {}", self.horizon)));
        }
        if self.change_points.len() > MAX_CHANGE_POINTS {
            return Err(ApiError::invalid(
                Some("change_points".into()),
                format!("at most {MAX_CHANGE_POINTS} change points are allowed, got {}", self.change_points.len()),
            ));
        }
        for (i, cp) in self.change_points.iter().enumerate() {
            if !(1.0..=CHANGE_WINDOW as f64).contains(&cp.day) {
                return Err(ApiError::invalid(
                    Some(format!("change_points[{i}].day")),
                    format!("day must lie in [1, {CHANGE_WINDOW}], got {}", cp.day),
                ));
            }
            if !(0.0..1.0).contains(&cp.reduction) {
                return Err(ApiError::invalid(
                    Some(format!("change_points[{i}].reduction")),
                    format!("reduction must lie in [0, 1), got {}", cp.reduction),
                ));
            }
        }
        if let InitialSpec::States { states } = &self.initial {
            if states.len() != nodes {
                return Err(ApiError::invalid(
                    Some("initial.states".into()),
                    format!("expected {nodes} node states, got {}", states.len()),
                ));
            }
            for (i, s) in states.iter().enumerate() {
                if s.len() != COMPARTMENTS {
                    return Err(ApiError::invalid(
                        Some(format!("initial.states[{i}]")),
                        format!("expected {COMPARTMENTS} values, got {}", s.len()),
                    ));
                }
                if let Some(j) = s.iter().position(|v| !v.is_finite() || *v < 0.0) {
                    return Err(ApiError::invalid(
                        Some(format!("initial.states[{i}][{j}]")),
                        format!("counts must be finite and nonnegative, got {}", s[j]),
                    ));
                }
            }
        }
        let cps = self.change_points.iter().map(|c| ContactChangePoint::new(c.day, c.reduction)).collect();
        base.with_change_points(cps).map_err(|e| ApiError::invalid(Some("change_points".into()), e.to_string()))
    }

    pub fn simulated_days(&self) -> u32 {
        self.horizon + INPUT_DAYS as u32 - 1
    }
}
