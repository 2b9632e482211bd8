//! Time-dependent contact rates with smooth change points.
//!
//! Between change points the contact matrix is constant. Each change point
//! `c` blends from the previous plateau to the new one over `(c, c + δ)`
//! with a half cosine, so the rate is continuously differentiable.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::params::AGE_GROUPS;
use super::EpiError;

pub type ContactMatrix = [[f64; AGE_GROUPS]; AGE_GROUPS];

/// Most change points a policy may carry.
pub const MAX_CHANGE_POINTS: usize = 3;

pub const DEFAULT_RAMP_WIDTH: f64 = 0.5;

/// Synthetic baseline of mean daily contacts between age groups (row: the
/// contacting group, column: the contacted group). Not derived from survey
/// data; row sums range from 6 to 12.5 contacts per day.
pub const DEFAULT_BASELINE_CONTACTS: ContactMatrix = [
    [3.0, 1.2, 1.5, 2.5, 0.8, 0.1],
    [0.8, 6.5, 1.5, 2.8, 0.8, 0.1],
    [0.4, 0.6, 6.0, 3.8, 1.0, 0.2],
    [0.4, 0.8, 2.8, 5.5, 1.4, 0.3],
    [0.3, 0.4, 1.3, 2.6, 3.2, 0.5],
    [0.1, 0.2, 0.8, 1.8, 1.6, 1.5],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactChangePoint {
    /// Day at which the ramp starts.
    pub day: f64,
    /// Homogeneous reduction factor in `[0, 1)`.
    pub reduction: f64,
    /// Explicit post-change matrix. Defaults to `(1 - reduction) * baseline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<ContactMatrix>,
}

impl ContactChangePoint {
    pub fn new(day: f64, reduction: f64) -> Self {
        Self { day, reduction, matrix: None }
    }

    /// Contact matrix in force once the ramp has finished.
    pub fn target(&self, baseline: &ContactMatrix) -> ContactMatrix {
        match &self.matrix {
            Some(m) => *m,
            None => {
                let keep = 1.0 - self.reduction;
                let mut out = [[0.0; AGE_GROUPS]; AGE_GROUPS];
                for (row, base) in out.iter_mut().zip(baseline) {
                    for (o, b) in row.iter_mut().zip(base) {
                        *o = keep * b;
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct ContactPolicy {
    baseline: ContactMatrix,
    change_points: Vec<ContactChangePoint>,
    ramp_width: f64,
    // Post-change matrices, cached per change point.
    #[serde(skip)]
    targets: Vec<ContactMatrix>,
}

#[derive(Deserialize)]
struct RawPolicy {
    baseline: ContactMatrix,
    #[serde(default)]
    change_points: Vec<ContactChangePoint>,
    #[serde(default = "default_ramp")]
    ramp_width: f64,
}

fn default_ramp() -> f64 {
    DEFAULT_RAMP_WIDTH
}

impl TryFrom<RawPolicy> for ContactPolicy {
    type Error = EpiError;
    fn try_from(raw: RawPolicy) -> Result<Self, EpiError> {
        ContactPolicy::new(raw.baseline, raw.change_points, raw.ramp_width)
    }
}

impl Default for ContactPolicy {
    fn default() -> Self {
        Self::constant(DEFAULT_BASELINE_CONTACTS)
    }
}

fn policy_error(reason: impl Into<String>) -> EpiError {
    EpiError::InvalidPolicy(reason.into())
}

impl ContactPolicy {
    pub fn new(
        baseline: ContactMatrix,
        change_points: Vec<ContactChangePoint>,
        ramp_width: f64,
    ) -> Result<Self, EpiError> {
        if !(ramp_width > 0.0 && ramp_width < 1.0) {
            return Err(policy_error(format!("ramp width must lie in (0, 1), got {ramp_width}")));
        }
        if baseline.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(policy_error("baseline contact rates must be finite and nonnegative"));
        }
        if change_points.len() > MAX_CHANGE_POINTS {
            return Err(policy_error(format!(
                "at most {MAX_CHANGE_POINTS} change points are supported, got {}",
                change_points.len()
            )));
        }
        for (m, cp) in change_points.iter().enumerate() {
            if !(cp.day.is_finite() && cp.day > 0.0) {
                return Err(policy_error(format!("change point {m}: day must be > 0, got {}", cp.day)));
            }
            if !(0.0..1.0).contains(&cp.reduction) {
                return Err(policy_error(format!(
                    "change point {m}: reduction must lie in [0, 1), got {}",
                    cp.reduction
                )));
            }
            if let Some(matrix) = &cp.matrix {
                if matrix.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(policy_error(format!("change point {m}: matrix must be nonnegative")));
                }
            }
        }
        for (m, pair) in change_points.windows(2).enumerate() {
            // Ramps must not overlap.
            if pair[1].day < pair[0].day + ramp_width {
                return Err(policy_error(format!(
                    "change points {m} and {} overlap: days {} and {} with ramp width {ramp_width}",
                    m + 1,
                    pair[0].day,
                    pair[1].day
                )));
            }
        }
        let targets = change_points.iter().map(|cp| cp.target(&baseline)).collect();
        Ok(Self { baseline, change_points, ramp_width, targets })
    }

    pub fn constant(baseline: ContactMatrix) -> Self {
        Self::new(baseline, Vec::new(), DEFAULT_RAMP_WIDTH).expect("constant policy is valid")
    }

    /// Same baseline and ramp width, different change points.
    pub fn with_change_points(&self, change_points: Vec<ContactChangePoint>) -> Result<Self, EpiError> {
        Self::new(self.baseline, change_points, self.ramp_width)
    }

    pub fn baseline(&self) -> &ContactMatrix {
        &self.baseline
    }

    pub fn change_points(&self) -> &[ContactChangePoint] {
        &self.change_points
    }

    pub fn ramp_width(&self) -> f64 {
        self.ramp_width
    }

    /// Post-change matrix of change point `m`.
    pub fn plateau(&self, m: usize) -> &ContactMatrix {
        &self.targets[m]
    }

    pub fn contact_rate(&self, t: f64) -> ContactMatrix {
        let mut out = [[0.0; AGE_GROUPS]; AGE_GROUPS];
        self.contact_rate_into(t, &mut out);
        out
    }

    pub fn contact_rate_into(&self, t: f64, out: &mut ContactMatrix) {
        let mut previous = &self.baseline;
        for (cp, target) in self.change_points.iter().zip(&self.targets) {
            if t <= cp.day {
                break;
            }
            if t < cp.day + self.ramp_width {
                let weight = 0.5 * (1.0 + (PI * (t - cp.day) / self.ramp_width).cos());
                for ((o, p), q) in out.iter_mut().flatten().zip(previous.iter().flatten()).zip(target.iter().flatten()) {
                    *o = q + (p - q) * weight;
                }
                return;
            }
            previous = target;
        }
        *out = *previous;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(v: f64) -> ContactMatrix {
        [[v; AGE_GROUPS]; AGE_GROUPS]
    }

    #[test]
    fn plateau_after_ramp_is_reduced_baseline() {
        let p = ContactPolicy::new(uniform(10.0), vec![ContactChangePoint::new(5.0, 0.4)], 0.5).unwrap();
        assert_eq!(p.contact_rate(5.5)[0][0], 6.0);
        assert_eq!(p.contact_rate(40.0)[3][2], 6.0);
        assert_eq!(p.contact_rate(5.0)[0][0], 10.0);
        assert_eq!(p.contact_rate(0.0)[0][0], 10.0);
    }

    #[test]
    fn ramp_midpoint_is_mean_of_plateaus() {
        let p = ContactPolicy::new(uniform(10.0), vec![ContactChangePoint::new(5.0, 0.4)], 0.5).unwrap();
        let mid = p.contact_rate(5.25)[1][4];
        assert!((mid - 8.0).abs() < 1e-12, "{mid}");
    }

    #[test]
    fn zero_reduction_keeps_baseline() {
        let base = DEFAULT_BASELINE_CONTACTS;
        let p = ContactPolicy::new(base, vec![ContactChangePoint::new(3.0, 0.0)], 0.5).unwrap();
        for t in [0.0, 3.1, 3.25, 3.4, 10.0] {
            assert_eq!(p.contact_rate(t), base);
        }
    }

    #[test]
    fn successive_ramps_start_from_previous_plateau() {
        let p = ContactPolicy::new(
            uniform(10.0),
            vec![ContactChangePoint::new(2.0, 0.5), ContactChangePoint::new(4.0, 0.2)],
            0.5,
        )
        .unwrap();
        assert_eq!(p.contact_rate(3.0)[0][0], 5.0);
        assert!((p.contact_rate(4.25)[0][0] - 6.5).abs() < 1e-12);
        assert_eq!(p.contact_rate(4.5)[0][0], 8.0);
    }

    #[test]
    fn override_matrix_is_used() {
        let mut cp = ContactChangePoint::new(1.0, 0.3);
        cp.matrix = Some(uniform(2.0));
        let p = ContactPolicy::new(uniform(10.0), vec![cp], 0.5).unwrap();
        assert_eq!(p.contact_rate(2.0), uniform(2.0));
    }

    #[test]
    fn rejects_invalid_policies() {
        let base = uniform(1.0);
        assert!(ContactPolicy::new(base, vec![], 1.0).is_err());
        assert!(ContactPolicy::new(base, vec![], 0.0).is_err());
        assert!(ContactPolicy::new(base, vec![ContactChangePoint::new(2.0, 1.0)], 0.5).is_err());
        assert!(ContactPolicy::new(base, vec![ContactChangePoint::new(0.0, 0.1)], 0.5).is_err());
        let overlapping = vec![ContactChangePoint::new(2.0, 0.1), ContactChangePoint::new(2.3, 0.1)];
        assert!(ContactPolicy::new(base, overlapping, 0.5).is_err());
        let four = (1..=4).map(|d| ContactChangePoint::new(d as f64, 0.1)).collect();
        assert!(ContactPolicy::new(base, four, 0.5).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let json = r#"{"baseline": [[1,1,1,1,1,1],[1,1,1,1,1,1],[1,1,1,1,1,1],[1,1,1,1,1,1],[1,1,1,1,1,1],[1,1,1,1,1,1]],
                       "change_points": [{"day": 3, "reduction": 0.25}]}"#;
        let p: ContactPolicy = serde_json::from_str(json).unwrap();
        assert_eq!(p.ramp_width(), DEFAULT_RAMP_WIDTH);
        assert_eq!(p.contact_rate(10.0)[0][0], 0.75);
        let bad = json.replace("0.25", "1.5");
        assert!(serde_json::from_str::<ContactPolicy>(&bad).is_err());
    }
}
