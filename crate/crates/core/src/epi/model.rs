//! The age-resolved compartment model of a single region.

use super::contact::{ContactMatrix, ContactPolicy};
use super::params::{EpiParameters, AGE_GROUPS};
use super::solver::{DormandPrince, OdeSystem, SolverError, SolverStats, Tolerances};
use super::state::{CompartmentState, InfectionState, COMPARTMENTS, STATES};
use super::trajectory::DailyTrajectory;
use super::EpiError;

use InfectionState::*;

const S: usize = Susceptible as usize;
const E: usize = Exposed as usize;
const INS: usize = InfectedNoSymptoms as usize;
const ISY: usize = InfectedSymptoms as usize;
const ISEV: usize = InfectedSevere as usize;
const ICR: usize = InfectedCritical as usize;
const R: usize = Recovered as usize;
const D: usize = Dead as usize;

/// Living persons and weighted infectious persons per age group, summed over
/// every population present in a region.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Exposure {
    pub living: [f64; AGE_GROUPS],
    pub infectious: [f64; AGE_GROUPS],
}

impl Exposure {
    pub fn add(&mut self, group: &[f64], params: &EpiParameters) {
        for a in 0..AGE_GROUPS {
            let x = &group[a * STATES..(a + 1) * STATES];
            self.living[a] += x[S] + x[E] + x[INS] + x[ISY] + x[ISEV] + x[ICR] + x[R];
            self.infectious[a] += params.nonisolated_no_symptoms * x[INS] + params.nonisolated_symptoms * x[ISY];
        }
    }

    pub fn force_of_infection(
        &self,
        params: &EpiParameters,
        contact: &ContactMatrix,
    ) -> Result<[f64; AGE_GROUPS], EpiError> {
        let mut pressure = [0.0; AGE_GROUPS];
        for j in 0..AGE_GROUPS {
            if self.living[j] <= 0.0 {
                return Err(EpiError::DegeneratePopulation { age: j });
            }
            pressure[j] = self.infectious[j] / self.living[j];
        }
        let mut lambda = [0.0; AGE_GROUPS];
        for i in 0..AGE_GROUPS {
            let mixed: f64 = contact[i].iter().zip(&pressure).map(|(c, p)| c * p).sum();
            lambda[i] = params.ages[i].transmission_probability * mixed;
        }
        Ok(lambda)
    }
}

/// Per-age rate at which susceptibles become exposed.
///
/// `N_j - D_j` is taken as the living population of age group `j`, which
/// equals the initial population minus deaths because the model conserves
/// persons.
pub fn force_of_infection(
    state: &CompartmentState,
    params: &EpiParameters,
    contact: &ContactMatrix,
) -> Result<[f64; AGE_GROUPS], EpiError> {
    let mut exposure = Exposure::default();
    exposure.add(state.as_slice(), params);
    exposure.force_of_infection(params, contact)
}

/// Writes the derivative of one population group given the force of
/// infection acting on it. Each age block of `dy` sums to zero.
pub(crate) fn transitions(y: &[f64], lambda: &[f64; AGE_GROUPS], params: &EpiParameters, dy: &mut [f64]) {
    for a in 0..AGE_GROUPS {
        let p = &params.ages[a];
        let x = &y[a * STATES..(a + 1) * STATES];
        let d = &mut dy[a * STATES..(a + 1) * STATES];

        let infections = x[S] * lambda[a];
        let leave_e = x[E] / p.time_exposed;
        let leave_ns = x[INS] / p.time_infected_no_symptoms;
        let leave_sy = x[ISY] / p.time_infected_symptoms;
        let leave_sev = x[ISEV] / p.time_infected_severe;
        let leave_cr = x[ICR] / p.time_infected_critical;

        let to_sy = p.symptoms_per_infection_no_symptoms * leave_ns;
        let to_sev = p.severe_per_infected_symptoms * leave_sy;
        let to_cr = p.critical_per_severe * leave_sev;
        let to_dead = p.deaths_per_critical * leave_cr;

        d[S] = -infections;
        d[E] = infections - leave_e;
        d[INS] = leave_e - leave_ns;
        d[ISY] = to_sy - leave_sy;
        d[ISEV] = to_sev - leave_sev;
        d[ICR] = to_cr - leave_cr;
        d[R] = (leave_ns - to_sy) + (leave_sy - to_sev) + (leave_sev - to_cr) + (leave_cr - to_dead);
        d[D] = to_dead;
    }
}

/// Time derivative of a single, closed region.
pub fn rhs(
    state: &CompartmentState,
    t: f64,
    params: &EpiParameters,
    policy: &ContactPolicy,
) -> Result<CompartmentState, EpiError> {
    let lambda = force_of_infection(state, params, &policy.contact_rate(t))?;
    let mut out = CompartmentState::zeros();
    transitions(state.as_slice(), &lambda, params, out.as_mut_slice());
    Ok(out)
}

/// A closed region as an ODE system.
pub struct SingleRegion<'a> {
    pub params: &'a EpiParameters,
    pub policy: &'a ContactPolicy,
}

impl OdeSystem for SingleRegion<'_> {
    type Error = EpiError;

    fn dim(&self) -> usize {
        COMPARTMENTS
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EpiError> {
        let mut contact = [[0.0; AGE_GROUPS]; AGE_GROUPS];
        self.policy.contact_rate_into(t, &mut contact);
        let mut exposure = Exposure::default();
        exposure.add(y, self.params);
        let lambda = exposure.force_of_infection(self.params, &contact)?;
        transitions(y, &lambda, self.params, dy);
        Ok(())
    }
}

pub fn validate_state(state: &CompartmentState) -> Result<(), EpiError> {
    if let Some((i, v)) = state.as_slice().iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(EpiError::InvalidState(format!(
            "compartment {} of age group {} is {v}",
            InfectionState::ALL[i % STATES],
            i / STATES
        )));
    }
    Ok(())
}

/// Integrates a single region over `horizon` days and returns the states at
/// days `0..=horizon`.
///
/// The solver is stopped at every integer day, so the daily values are exact
/// solver states rather than interpolants.
pub fn integrate(
    initial: &CompartmentState,
    params: &EpiParameters,
    policy: &ContactPolicy,
    horizon: u32,
    tolerances: Tolerances,
) -> Result<(DailyTrajectory, SolverStats), EpiError> {
    if horizon < 1 {
        return Err(EpiError::InvalidHorizon(horizon));
    }
    validate_state(initial)?;
    params.validate()?;

    let system = SingleRegion { params, policy };
    let solver = DormandPrince::for_compartments(tolerances);
    let mut y = *initial;
    let mut step = 0.0;
    let mut stats = SolverStats::default();
    let mut days = Vec::with_capacity(horizon as usize + 1);
    days.push(y);
    for day in 0..horizon {
        solver.integrate(&system, day as f64, day as f64 + 1.0, y.as_mut_slice(), &mut step, &mut stats)?;
        days.push(y);
    }
    Ok((DailyTrajectory::new(days), stats))
}

impl From<SolverError> for EpiError {
    fn from(e: SolverError) -> Self {
        EpiError::Solver(e)
    }
}
