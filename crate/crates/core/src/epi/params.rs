//! Age groups and disease parameters.

use serde::{Deserialize, Serialize};

use super::EpiError;

/// Number of age groups the model is stratified into.
pub const AGE_GROUPS: usize = 6;

/// One of the six age brackets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeGroupSpec {
    pub index: usize,
    pub label: String,
    pub population_share: f64,
}

pub const AGE_LABELS: [&str; AGE_GROUPS] = ["0-4", "5-14", "15-34", "35-59", "60-79", "80+"];

/// Synthetic population shares, roughly shaped like a western European
/// age pyramid. They sum to exactly one.
pub const DEFAULT_AGE_SHARES: [f64; AGE_GROUPS] = [0.047, 0.092, 0.227, 0.353, 0.216, 0.065];

pub fn default_age_groups() -> Vec<AgeGroupSpec> {
    AGE_LABELS
        .iter()
        .zip(DEFAULT_AGE_SHARES)
        .enumerate()
        .map(|(index, (label, share))| AgeGroupSpec {
            index,
            label: (*label).to_string(),
            population_share: share,
        })
        .collect()
}

/// Checks that `shares` are valid probabilities and renormalizes them so that
/// they sum to one up to rounding.
pub fn normalize_shares(shares: &[f64; AGE_GROUPS]) -> Result<[f64; AGE_GROUPS], EpiError> {
    if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(EpiError::InvalidParameter {
            name: "age_shares".into(),
            reason: "shares must be finite and nonnegative".into(),
        });
    }
    let total: f64 = shares.iter().sum();
    if total <= 0.0 {
        return Err(EpiError::InvalidParameter {
            name: "age_shares".into(),
            reason: "shares sum to zero".into(),
        });
    }
    let mut out = [0.0; AGE_GROUPS];
    for (o, s) in out.iter_mut().zip(shares) {
        *o = s / total;
    }
    Ok(out)
}

/// Disease parameters of a single age group.
///
/// Durations are mean stay times in days; the `*_per_*` fields are the
/// probabilities of moving on to the more severe state instead of recovering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeParameters {
    pub time_exposed: f64,
    pub time_infected_no_symptoms: f64,
    pub time_infected_symptoms: f64,
    pub time_infected_severe: f64,
    pub time_infected_critical: f64,
    pub transmission_probability: f64,
    pub symptoms_per_infection_no_symptoms: f64,
    pub severe_per_infected_symptoms: f64,
    pub critical_per_severe: f64,
    pub deaths_per_critical: f64,
}

/// Full parameter set of the compartment model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpiParameters {
    pub ages: [AgeParameters; AGE_GROUPS],
    /// Share of nonsymptomatic infectious persons who are not isolated.
    pub nonisolated_no_symptoms: f64,
    /// Share of symptomatic infectious persons who are not isolated.
    pub nonisolated_symptoms: f64,
}

const TIME_EXPOSED: [f64; AGE_GROUPS] = [3.335; AGE_GROUPS];
const TIME_NO_SYMPTOMS: [f64; AGE_GROUPS] = [2.74, 2.74, 2.565, 2.565, 2.565, 2.565];
const TIME_SYMPTOMS: [f64; AGE_GROUPS] = [7.02625, 7.02625, 7.0665, 6.9385, 6.835, 6.775];
const TIME_SEVERE: [f64; AGE_GROUPS] = [5.0, 5.0, 5.925, 7.55, 8.5, 11.0];
const TIME_CRITICAL: [f64; AGE_GROUPS] = [6.95, 6.95, 6.86, 17.36, 17.1, 11.6];
const TRANSMISSION: [f64; AGE_GROUPS] = [0.03, 0.06, 0.06, 0.06, 0.09, 0.175];
const MU_SYMPTOMS: [f64; AGE_GROUPS] = [0.75, 0.75, 0.8, 0.8, 0.8, 0.8];
const MU_SEVERE: [f64; AGE_GROUPS] = [0.0075, 0.0075, 0.019, 0.0615, 0.165, 0.225];
const MU_CRITICAL: [f64; AGE_GROUPS] = [0.075, 0.075, 0.075, 0.15, 0.3, 0.4];
const MU_DEATH: [f64; AGE_GROUPS] = [0.05, 0.05, 0.14, 0.14, 0.4, 0.6];

impl Default for EpiParameters {
    /// Wild-type SARS-CoV-2 parameters of the first 2020 waves.
    fn default() -> Self {
        let ages = std::array::from_fn(|i| AgeParameters {
            time_exposed: TIME_EXPOSED[i],
            time_infected_no_symptoms: TIME_NO_SYMPTOMS[i],
            time_infected_symptoms: TIME_SYMPTOMS[i],
            time_infected_severe: TIME_SEVERE[i],
            time_infected_critical: TIME_CRITICAL[i],
            transmission_probability: TRANSMISSION[i],
            symptoms_per_infection_no_symptoms: MU_SYMPTOMS[i],
            severe_per_infected_symptoms: MU_SEVERE[i],
            critical_per_severe: MU_CRITICAL[i],
            deaths_per_critical: MU_DEATH[i],
        });
        // Isolation shares are not age resolved in the source table; these are
        // configuration defaults.
        Self {
            ages,
            nonisolated_no_symptoms: 1.0,
            nonisolated_symptoms: 0.3,
        }
    }
}

impl EpiParameters {
    pub fn validate(&self) -> Result<(), EpiError> {
        fn positive(name: &str, age: usize, v: f64) -> Result<(), EpiError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(EpiError::InvalidParameter {
                    name: format!("ages[{age}].{name}"),
                    reason: format!("duration must be > 0, got {v}"),
                })
            }
        }
        fn probability(name: &str, v: f64) -> Result<(), EpiError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(EpiError::InvalidParameter {
                    name: name.to_string(),
                    reason: format!("probability must lie in [0, 1], got {v}"),
                })
            }
        }

        for (i, a) in self.ages.iter().enumerate() {
            positive("time_exposed", i, a.time_exposed)?;
            positive("time_infected_no_symptoms", i, a.time_infected_no_symptoms)?;
            positive("time_infected_symptoms", i, a.time_infected_symptoms)?;
            positive("time_infected_severe", i, a.time_infected_severe)?;
            positive("time_infected_critical", i, a.time_infected_critical)?;
            for (name, v) in [
                ("transmission_probability", a.transmission_probability),
                ("symptoms_per_infection_no_symptoms", a.symptoms_per_infection_no_symptoms),
                ("severe_per_infected_symptoms", a.severe_per_infected_symptoms),
                ("critical_per_severe", a.critical_per_severe),
                ("deaths_per_critical", a.deaths_per_critical),
            ] {
                probability(&format!("ages[{i}].{name}"), v)?;
            }
        }
        probability("nonisolated_no_symptoms", self.nonisolated_no_symptoms)?;
        probability("nonisolated_symptoms", self.nonisolated_symptoms)?;
        Ok(())
    }
}
