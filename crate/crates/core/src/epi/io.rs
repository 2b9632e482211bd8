//! JSON model configuration and trajectory export.
//!
//! A model configuration file looks like
//!
//! ```json
//! {
//!   "parameters": { "ages": [ { "time_exposed": 3.335, ... }, ... ],
//!                   "nonisolated_no_symptoms": 1.0, "nonisolated_symptoms": 0.3 },
//!   "policy": { "baseline": [[...6 values...], ...6 rows...],
//!               "change_points": [ { "day": 12, "reduction": 0.4 } ],
//!               "ramp_width": 0.5 },
//!   "tolerances": { "abs": 1e-8, "rel": 1e-6 }
//! }
//! ```
//!
//! Every top-level key is optional and falls back to the built-in defaults.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::contact::{ContactMatrix, ContactPolicy};
use super::params::{default_age_groups, AgeGroupSpec, EpiParameters, AGE_GROUPS};
use super::solver::Tolerances;
use super::state::{InfectionState, STATES};
use super::trajectory::DailyTrajectory;
use super::EpiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_age_groups")]
    pub age_groups: Vec<AgeGroupSpec>,
    #[serde(default)]
    pub parameters: EpiParameters,
    #[serde(default)]
    pub policy: ContactPolicy,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            age_groups: default_age_groups(),
            parameters: EpiParameters::default(),
            policy: ContactPolicy::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, EpiError> {
        let config: ModelConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EpiError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), EpiError> {
        self.parameters.validate()?;
        if self.age_groups.len() != AGE_GROUPS {
            return Err(EpiError::InvalidParameter {
                name: "age_groups".into(),
                reason: format!("expected {AGE_GROUPS} groups, got {}", self.age_groups.len()),
            });
        }
        let total: f64 = self.age_groups.iter().map(|g| g.population_share).sum();
        if (total - 1.0).abs() > 1e-9 || self.age_groups.iter().any(|g| g.population_share < 0.0) {
            return Err(EpiError::InvalidParameter {
                name: "age_groups".into(),
                reason: format!("population shares must be nonnegative and sum to 1, got {total}"),
            });
        }
        if !(self.tolerances.abs > 0.0 && self.tolerances.rel > 0.0) {
            return Err(EpiError::InvalidParameter {
                name: "tolerances".into(),
                reason: "tolerances must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn age_shares(&self) -> [f64; AGE_GROUPS] {
        std::array::from_fn(|a| self.age_groups[a].population_share)
    }
}

/// Reads a 6x6 contact matrix from a headerless CSV file.
pub fn read_contact_matrix(reader: impl std::io::Read) -> Result<ContactMatrix, EpiError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut out = [[0.0; AGE_GROUPS]; AGE_GROUPS];
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if i >= AGE_GROUPS || record.len() != AGE_GROUPS {
            return Err(EpiError::InvalidPolicy(format!(
                "contact matrix must be {AGE_GROUPS}x{AGE_GROUPS}, row {} has {} columns",
                i + 1,
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            out[i][j] = field.parse().map_err(|_| {
                EpiError::InvalidPolicy(format!("contact matrix row {}, column {}: not a number: {field:?}", i + 1, j + 1))
            })?;
        }
        rows += 1;
    }
    if rows != AGE_GROUPS {
        return Err(EpiError::InvalidPolicy(format!("contact matrix has {rows} rows, expected {AGE_GROUPS}")));
    }
    Ok(out)
}

/// Writes `day,node,age,state,value` rows for every node trajectory.
pub fn write_trajectories_csv<W: Write>(writer: W, nodes: &[DailyTrajectory]) -> Result<(), EpiError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "node", "age", "state", "value"])?;
    let horizon = nodes.iter().map(DailyTrajectory::horizon).max().unwrap_or(0);
    for day in 0..=horizon {
        for (node, traj) in nodes.iter().enumerate() {
            if day > traj.horizon() {
                continue;
            }
            let state = traj.day(day);
            for age in 0..AGE_GROUPS {
                for s in InfectionState::ALL {
                    w.write_record([
                        day.to_string(),
                        node.to_string(),
                        age.to_string(),
                        s.short_name().to_string(),
                        state[(age, s)].to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub day: usize,
    pub node: usize,
    /// Six rows (age groups) of eight values (infection states).
    pub values: Vec<[f64; STATES]>,
}

/// Writes one JSON object per (day, node).
pub fn write_trajectories_ndjson<W: Write>(mut writer: W, nodes: &[DailyTrajectory]) -> Result<(), EpiError> {
    let horizon = nodes.iter().map(DailyTrajectory::horizon).max().unwrap_or(0);
    for day in 0..=horizon {
        for (node, traj) in nodes.iter().enumerate() {
            if day > traj.horizon() {
                continue;
            }
            let state = traj.day(day);
            let record = TrajectoryRecord {
                day,
                node,
                values: (0..AGE_GROUPS).map(|a| state.age(a).try_into().expect("row width")).collect(),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trajectories_ndjson<R: BufRead>(reader: R) -> Result<Vec<TrajectoryRecord>, EpiError> {
    reader
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect()
}
