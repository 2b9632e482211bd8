use serde::{Deserialize, Serialize};

use super::state::CompartmentState;

/// States at consecutive integer days, starting at day 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyTrajectory {
    days: Vec<CompartmentState>,
}

impl DailyTrajectory {
    pub fn new(days: Vec<CompartmentState>) -> Self {
        Self { days }
    }

    /// Number of simulated days; the trajectory holds `horizon() + 1` states.
    pub fn horizon(&self) -> usize {
        self.days.len().saturating_sub(1)
    }

    pub fn day(&self, day: usize) -> &CompartmentState {
        &self.days[day]
    }

    pub fn states(&self) -> &[CompartmentState] {
        &self.days
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &CompartmentState)> {
        self.days.iter().enumerate()
    }

    pub fn last(&self) -> &CompartmentState {
        self.days.last().expect("trajectory holds day 0")
    }

    /// Largest relative deviation of any age-group total from its day-0 value.
    pub fn max_relative_drift(&self) -> f64 {
        let initial = self.days[0].age_totals();
        self.days
            .iter()
            .flat_map(|s| {
                let totals = s.age_totals();
                (0..totals.len())
                    .filter(|&a| initial[a] > 0.0)
                    .map(move |a| ((totals[a] - initial[a]) / initial[a]).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

/// Linear interpolation of a trajectory given at increasing `times` onto the
/// integer days `0..=horizon`.
pub fn interpolate_to_days(times: &[f64], states: &[CompartmentState], horizon: usize) -> Option<DailyTrajectory> {
    if times.len() != states.len() || times.is_empty() || times[0] > 0.0 || *times.last()? < horizon as f64 {
        return None;
    }
    let mut out = Vec::with_capacity(horizon + 1);
    let mut k = 0;
    for day in 0..=horizon {
        let t = day as f64;
        while k + 1 < times.len() && times[k + 1] < t {
            k += 1;
        }
        if times[k] == t || k + 1 == times.len() {
            out.push(states[k]);
            continue;
        }
        let (t0, t1) = (times[k], times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let mut s = CompartmentState::zeros();
        for ((o, a), b) in s.as_mut_slice().iter_mut().zip(states[k].as_slice()).zip(states[k + 1].as_slice()) {
            *o = a + (b - a) * w;
        }
        out.push(s);
    }
    Some(DailyTrajectory::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(v: f64) -> CompartmentState {
        CompartmentState::from_slice(&[v; 48]).unwrap()
    }

    #[test]
    fn interpolates_between_samples() {
        let times = [0.0, 0.4, 1.6, 2.0];
        let states = [filled(0.0), filled(0.4), filled(1.6), filled(2.0)];
        let traj = interpolate_to_days(&times, &states, 2).unwrap();
        assert_eq!(traj.horizon(), 2);
        assert!((traj.day(1).as_slice()[0] - 1.0).abs() < 1e-12);
        assert_eq!(traj.day(2).as_slice()[5], 2.0);
    }

    #[test]
    fn rejects_short_time_grid() {
        assert!(interpolate_to_days(&[0.0, 1.0], &[filled(0.0), filled(1.0)], 2).is_none());
    }

    #[test]
    fn drift_is_zero_for_constant_totals() {
        let traj = DailyTrajectory::new(vec![filled(1.0), filled(1.0)]);
        assert_eq!(traj.max_relative_drift(), 0.0);
    }
}
