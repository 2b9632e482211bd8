//! Adaptive Dormand–Prince 5(4) integrator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-8, rel: 1e-6 }
    }
}

impl Tolerances {
    pub fn scaled(self, factor: f64) -> Self {
        Self { abs: self.abs * factor, rel: self.rel * factor }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {max_steps} steps before reaching t = {target}")]
    TooManySteps { max_steps: usize, target: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Right-hand side of `y' = f(t, y)`.
pub trait OdeSystem {
    type Error: From<SolverError>;

    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Self::Error>;
}

/// Counters collected while integrating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Entries set from a negative value to zero after an accepted step.
    pub clamped: usize,
    /// Clamped entries that were below `-NEGATIVITY_TOLERANCE`.
    pub clamped_beyond_tolerance: usize,
    /// Most negative value seen before clamping.
    pub min_before_clamp: f64,
}

impl SolverStats {
    pub fn merge(&mut self, other: &SolverStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evaluations += other.rhs_evaluations;
        self.clamped += other.clamped;
        self.clamped_beyond_tolerance += other.clamped_beyond_tolerance;
        self.min_before_clamp = self.min_before_clamp.min(other.min_before_clamp);
    }
}

pub const NEGATIVITY_TOLERANCE: f64 = 1e-9;

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DormandPrince {
    pub tolerances: Tolerances,
    pub max_step: f64,
    pub max_steps: usize,
    /// Set negative entries to zero after each accepted step.
    pub clamp_negative: bool,
}

impl Default for DormandPrince {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            max_step: f64::INFINITY,
            max_steps: 100_000,
            clamp_negative: false,
        }
    }
}

impl DormandPrince {
    pub fn new(tolerances: Tolerances) -> Self {
        Self { tolerances, ..Self::default() }
    }

    /// Solver for person counts: negative undershoots are clamped to zero.
    pub fn for_compartments(tolerances: Tolerances) -> Self {
        Self { tolerances, clamp_negative: true, ..Self::default() }
    }

    /// Advances `y` from `t0` to exactly `t1`.
    ///
    /// `step` carries the step size between calls; pass a nonpositive value to
    /// let the solver pick the initial step.
    pub fn integrate<S: OdeSystem>(
        &self,
        system: &S,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        step: &mut f64,
        stats: &mut SolverStats,
    ) -> Result<(), S::Error> {
        let n = system.dim();
        debug_assert_eq!(y.len(), n);
        if t1 <= t0 {
            return Ok(());
        }
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut stage = vec![0.0; n];
        let mut y_new = vec![0.0; n];

        let mut t = t0;
        system.rhs(t, y, &mut k[0])?;
        stats.rhs_evaluations += 1;

        let span = t1 - t0;
        let mut h = if *step > 0.0 { *step } else { self.initial_step(y, &k[0], span) };
        h = h.min(self.max_step);

        let mut steps = 0usize;
        while t < t1 {
            if steps >= self.max_steps {
                return Err(SolverError::TooManySteps { max_steps: self.max_steps, target: t1 }.into());
            }
            steps += 1;

            let remaining = t1 - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let h_try = if last { remaining } else { h };
            if h_try < 1e-12 * t.abs().max(1.0) {
                return Err(SolverError::StepSizeUnderflow { t, h: h_try }.into());
            }

            for i in 0..n {
                stage[i] = y[i] + h_try * A21 * k[0][i];
            }
            system.rhs(t + C2 * h_try, &stage, &mut k[1])?;
            for i in 0..n {
                stage[i] = y[i] + h_try * (A31 * k[0][i] + A32 * k[1][i]);
            }
            system.rhs(t + C3 * h_try, &stage, &mut k[2])?;
            for i in 0..n {
                stage[i] = y[i] + h_try * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            system.rhs(t + C4 * h_try, &stage, &mut k[3])?;
            for i in 0..n {
                stage[i] = y[i] + h_try * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            system.rhs(t + C5 * h_try, &stage, &mut k[4])?;
            for i in 0..n {
                stage[i] = y[i]
                    + h_try * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
            }
            system.rhs(t + h_try, &stage, &mut k[5])?;
            for i in 0..n {
                y_new[i] = y[i]
                    + h_try * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
            }
            let t_new = if last { t1 } else { t + h_try };
            system.rhs(t_new, &y_new, &mut k[6])?;
            stats.rhs_evaluations += 6;

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = h_try
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let scale = self.tolerances.abs + self.tolerances.rel * y[i].abs().max(y_new[i].abs());
                err_sq += (e / scale) * (e / scale);
            }
            let err = (err_sq / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                h = h_try * MIN_FACTOR;
                stats.rejected += 1;
                continue;
            }

            if err <= 1.0 {
                stats.accepted += 1;
                t = t_new;
                y.copy_from_slice(&y_new);
                if self.clamp_negative && self.clamp(y, stats) {
                    system.rhs(t, y, &mut k[0])?;
                    stats.rhs_evaluations += 1;
                } else {
                    k.swap(0, 6);
                }
                let factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
                // A shortened final step says nothing about the next step size.
                if !last || h_try >= h {
                    h = (h_try * factor).min(self.max_step);
                }
            } else {
                stats.rejected += 1;
                h = h_try * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { t }.into());
        }
        *step = h;
        Ok(())
    }

    fn clamp(&self, y: &mut [f64], stats: &mut SolverStats) -> bool {
        let mut changed = false;
        for v in y.iter_mut() {
            if *v < 0.0 {
                stats.min_before_clamp = stats.min_before_clamp.min(*v);
                if *v < -NEGATIVITY_TOLERANCE {
                    stats.clamped_beyond_tolerance += 1;
                }
                stats.clamped += 1;
                *v = 0.0;
                changed = true;
            }
        }
        changed
    }

    // Hairer & Wanner's starting step heuristic without the second rhs call.
    fn initial_step(&self, y: &[f64], dy: &[f64], span: f64) -> f64 {
        let n = y.len().max(1) as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (yi, fi) in y.iter().zip(dy) {
            let scale = self.tolerances.abs + self.tolerances.rel * yi.abs();
            d0 += (yi / scale).powi(2);
            d1 += (fi / scale).powi(2);
        }
        let d0 = (d0 / n).sqrt();
        let d1 = (d1 / n).sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-3 } else { 0.01 * d0 / d1 };
        h.min(span).min(self.max_step).max(1e-6 * span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl OdeSystem for Decay {
        type Error = SolverError;
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SolverError> {
            dy[0] = -self.0 * y[0];
            Ok(())
        }
    }

    struct Oscillator;

    impl OdeSystem for Oscillator {
        type Error = SolverError;
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SolverError> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let solver = DormandPrince::new(Tolerances { abs: 1e-12, rel: 1e-10 });
        let mut y = [1.0];
        let mut h = 0.0;
        let mut stats = SolverStats::default();
        solver.integrate(&Decay(0.7), 0.0, 5.0, &mut y, &mut h, &mut stats).unwrap();
        let exact = (-3.5f64).exp();
        assert!(((y[0] - exact) / exact).abs() < 1e-9, "{} vs {exact}", y[0]);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn lands_exactly_on_end_time_over_many_calls() {
        let solver = DormandPrince::default();
        let mut y = [1.0, 0.0];
        let mut h = 0.0;
        let mut stats = SolverStats::default();
        for day in 0..20 {
            solver.integrate(&Oscillator, day as f64, day as f64 + 1.0, &mut y, &mut h, &mut stats).unwrap();
        }
        assert!((y[0] - 20f64.cos()).abs() < 1e-5);
        assert!((y[1] + 20f64.sin()).abs() < 1e-5);
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let run = |tol: Tolerances| {
            let mut y = [1.0, 0.0];
            let mut h = 0.0;
            let mut stats = SolverStats::default();
            DormandPrince::new(tol).integrate(&Oscillator, 0.0, 30.0, &mut y, &mut h, &mut stats).unwrap();
            (y[0] - 30f64.cos()).abs()
        };
        assert!(run(Tolerances::default().scaled(1e-3)) < run(Tolerances::default()));
    }

    #[test]
    fn too_many_steps_is_reported() {
        let solver = DormandPrince { max_steps: 3, max_step: 0.01, ..DormandPrince::default() };
        let mut y = [1.0];
        let mut h = 0.0;
        let err = solver
            .integrate(&Decay(1.0), 0.0, 10.0, &mut y, &mut h, &mut SolverStats::default())
            .unwrap_err();
        assert!(matches!(err, SolverError::TooManySteps { .. }));
    }

    struct Blowup;

    impl OdeSystem for Blowup {
        type Error = SolverError;
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SolverError> {
            dy[0] = y[0] * y[0];
            Ok(())
        }
    }

    #[test]
    fn finite_time_blowup_underflows() {
        // y' = y^2, y(0) = 1 explodes at t = 1.
        let mut y = [1.0];
        let mut h = 0.0;
        let err = DormandPrince::default()
            .integrate(&Blowup, 0.0, 2.0, &mut y, &mut h, &mut SolverStats::default())
            .unwrap_err();
        assert!(matches!(err, SolverError::StepSizeUnderflow { .. } | SolverError::TooManySteps { .. }));
    }
}
