//! Commute-and-return simulation on a region graph.
//!
//! Every day is split in two halves. During the first half all persons are
//! at home and each region evolves as a closed model. At midday a share of
//! every mobile compartment (all but severe, critical and dead) commutes
//! along each outgoing edge. During the second half commuters mix with the
//! population of their destination; all persons present there share one
//! force of infection. At the end of the day commuters return home with the
//! disease states they reached.
//!
//! Given the destination's force of infection, each commuter group follows a
//! linear ODE, so its end state is `Φ · g₀` for a propagator `Φ` shared by all
//! groups at that destination. The away half therefore integrates the total
//! present population together with the five mobile columns of `Φ` instead
//! of one state vector per edge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::MetapopGraph;
use super::MetapopError;
use crate::epi::model::{transitions, validate_state, Exposure, SingleRegion};
use crate::epi::solver::{DormandPrince, OdeSystem, SolverStats, Tolerances, NEGATIVITY_TOLERANCE};
use crate::epi::state::{flat_index, CompartmentState, InfectionState, COMPARTMENTS, STATES};
use crate::epi::{ContactMatrix, ContactPolicy, DailyTrajectory, EpiError, EpiParameters, AGE_GROUPS};

const MOBILE: [InfectionState; 5] = [
    InfectionState::Susceptible,
    InfectionState::Exposed,
    InfectionState::InfectedNoSymptoms,
    InfectionState::InfectedSymptoms,
    InfectionState::Recovered,
];

/// Commuter share along edge `(i, j)`:
/// `min(weight_share * w_ij / N_i, max_out_fraction / outdeg_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommuteConfig {
    pub weight_share: f64,
    pub max_out_fraction: f64,
}

impl Default for CommuteConfig {
    fn default() -> Self {
        Self { weight_share: 0.5, max_out_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub tolerances: Tolerances,
    pub commute: CommuteConfig,
    /// Integrate regions on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { tolerances: Tolerances::default(), commute: CommuteConfig::default(), parallel: true }
    }
}

#[derive(Debug, Clone)]
pub struct MetapopRun {
    pub nodes: Vec<DailyTrajectory>,
    pub stats: SolverStats,
}

impl MetapopRun {
    /// Relative change of the total population between day 0 and any later day.
    pub fn max_global_drift(&self) -> f64 {
        let horizon = self.nodes.first().map_or(0, DailyTrajectory::horizon);
        let total = |d: usize| self.nodes.iter().map(|t| t.day(d).total()).sum::<f64>();
        let initial = total(0);
        (0..=horizon).map(|d| ((total(d) - initial) / initial).abs()).fold(0.0, f64::max)
    }
}

/// Populations present at one destination during the away half: the total in
/// the first 48 entries, then one propagator column per mobile state.
struct AwayRegion<'a> {
    params: &'a EpiParameters,
    policy: &'a ContactPolicy,
}

const AWAY_DIM: usize = COMPARTMENTS * (1 + MOBILE.len());

impl OdeSystem for AwayRegion<'_> {
    type Error = EpiError;

    fn dim(&self) -> usize {
        AWAY_DIM
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EpiError> {
        let mut contact: ContactMatrix = [[0.0; AGE_GROUPS]; AGE_GROUPS];
        self.policy.contact_rate_into(t, &mut contact);
        let mut exposure = Exposure::default();
        exposure.add(&y[..COMPARTMENTS], self.params);
        let lambda = exposure.force_of_infection(self.params, &contact)?;
        for (block, dblock) in y.chunks_exact(COMPARTMENTS).zip(dy.chunks_exact_mut(COMPARTMENTS)) {
            transitions(block, &lambda, self.params, dblock);
        }
        Ok(())
    }
}

fn initial_propagator(y: &mut [f64]) {
    y[COMPARTMENTS..].fill(0.0);
    for (k, s) in MOBILE.iter().enumerate() {
        for a in 0..AGE_GROUPS {
            y[COMPARTMENTS * (1 + k) + flat_index(a, *s)] = 1.0;
        }
    }
}

fn propagate(y: &[f64], group: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (k, s) in MOBILE.iter().enumerate() {
        let column = &y[COMPARTMENTS * (1 + k)..COMPARTMENTS * (2 + k)];
        for a in 0..AGE_GROUPS {
            let g = group[flat_index(a, *s)];
            if g == 0.0 {
                continue;
            }
            let block = a * STATES..(a + 1) * STATES;
            for (o, c) in out[block.clone()].iter_mut().zip(&column[block]) {
                *o += g * c;
            }
        }
    }
}

/// Compiled commuter network plus the models it couples.
pub struct Metapopulation<'a> {
    params: &'a EpiParameters,
    policy: &'a ContactPolicy,
    options: SimulationOptions,
    n: usize,
    /// Incoming `(origin, fraction)` pairs per destination.
    incoming: Vec<Vec<(usize, f64)>>,
    /// Total outgoing fraction per origin.
    outgoing: Vec<f64>,
}

struct AwayResult {
    residents: CompartmentState,
    returning: Vec<(usize, CompartmentState)>,
    stats: SolverStats,
}

impl<'a> Metapopulation<'a> {
    pub fn new(
        graph: &MetapopGraph,
        params: &'a EpiParameters,
        policy: &'a ContactPolicy,
        options: SimulationOptions,
    ) -> Result<Self, MetapopError> {
        params.validate()?;
        let n = graph.n();
        let commute = options.commute;
        if !(commute.weight_share >= 0.0 && (0.0..=1.0).contains(&commute.max_out_fraction)) {
            return Err(EpiError::InvalidParameter {
                name: "commute".into(),
                reason: "weight_share must be nonnegative and max_out_fraction in [0, 1]".into(),
            }
            .into());
        }
        let mobility = graph.mobility();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![0.0; n];
        for i in 0..n {
            let row = mobility.row(i);
            let degree = row.iter().filter(|w| **w > 0.0).count();
            if degree == 0 {
                continue;
            }
            let population = graph.nodes()[i].population;
            let cap = commute.max_out_fraction / degree as f64;
            for (j, w) in row.iter().enumerate() {
                if *w > 0.0 {
                    let f = (commute.weight_share * w / population).min(cap);
                    incoming[j].push((i, f));
                    outgoing[i] += f;
                }
            }
        }
        Ok(Self { params, policy, options, n, incoming, outgoing })
    }

    /// Commuter share along `(origin, destination)`, zero without an edge.
    pub fn commuter_fraction(&self, origin: usize, destination: usize) -> f64 {
        self.incoming[destination].iter().find(|(i, _)| *i == origin).map_or(0.0, |(_, f)| *f)
    }

    /// Simulates `days` days starting at time `start_day`, returning the states
    /// at `start_day + 0..=days` per node.
    pub fn run(&self, initial: &[CompartmentState], start_day: u32, days: u32) -> Result<MetapopRun, MetapopError> {
        if days < 1 {
            return Err(EpiError::InvalidHorizon(days).into());
        }
        if initial.len() != self.n {
            return Err(MetapopError::DimensionMismatch { expected: self.n, found: initial.len() });
        }
        for (node, state) in initial.iter().enumerate() {
            validate_state(state).map_err(|source| MetapopError::Node { node, source })?;
        }
        let mut states = initial.to_vec();
        let mut home_steps = vec![0.0; self.n];
        let mut away_steps = vec![0.0; self.n];
        let mut stats = SolverStats::default();
        let mut days_out: Vec<Vec<CompartmentState>> = states.iter().map(|s| {
            let mut v = Vec::with_capacity(days as usize + 1);
            v.push(*s);
            v
        }).collect();
        for d in 0..days {
            let t = (start_day + d) as f64;
            self.step_day(t, &mut states, &mut home_steps, &mut away_steps, &mut stats)?;
            for (out, s) in days_out.iter_mut().zip(&states) {
                out.push(*s);
            }
        }
        Ok(MetapopRun { nodes: days_out.into_iter().map(DailyTrajectory::new).collect(), stats })
    }

    fn step_day(
        &self,
        t: f64,
        states: &mut [CompartmentState],
        home_steps: &mut [f64],
        away_steps: &mut [f64],
        stats: &mut SolverStats,
    ) -> Result<(), MetapopError> {
        let solver = DormandPrince::for_compartments(self.options.tolerances);
        let home = SingleRegion { params: self.params, policy: self.policy };
        let mid = t + 0.5;

        let home_stats = self.for_each_node(
            states.iter_mut().zip(home_steps.iter_mut()).enumerate().collect(),
            |node, (state, step)| {
                let mut s = SolverStats::default();
                solver
                    .integrate(&home, t, mid, state.as_mut_slice(), step, &mut s)
                    .map_err(|source| MetapopError::Node { node, source })?;
                Ok(s)
            },
        )?;
        for s in &home_stats {
            stats.merge(s);
        }

        let snapshot: &[CompartmentState] = states;
        let away: Vec<AwayResult> = self.for_each_node(
            away_steps.iter_mut().enumerate().collect(),
            |node, step| self.away_half(node, snapshot, mid, t + 1.0, step, &solver),
        )?;

        let mut next: Vec<CompartmentState> = away.iter().map(|r| r.residents).collect();
        for result in &away {
            stats.merge(&result.stats);
            for (origin, group) in &result.returning {
                for (x, g) in next[*origin].as_mut_slice().iter_mut().zip(group.as_slice()) {
                    *x += g;
                }
            }
        }
        states.copy_from_slice(&next);
        Ok(())
    }

    fn away_half(
        &self,
        node: usize,
        states: &[CompartmentState],
        t0: f64,
        t1: f64,
        step: &mut f64,
        solver: &DormandPrince,
    ) -> Result<AwayResult, MetapopError> {
        let mut stats = SolverStats::default();
        let stay = 1.0 - self.outgoing[node];
        let mut residents = states[node];
        for a in 0..AGE_GROUPS {
            for s in MOBILE {
                residents[(a, s)] *= stay;
            }
        }
        let wrap = |source| MetapopError::Node { node, source };

        if self.incoming[node].is_empty() {
            let system = SingleRegion { params: self.params, policy: self.policy };
            solver.integrate(&system, t0, t1, residents.as_mut_slice(), step, &mut stats).map_err(wrap)?;
            return Ok(AwayResult { residents, returning: Vec::new(), stats });
        }

        let groups: Vec<(usize, CompartmentState)> = self.incoming[node]
            .iter()
            .map(|&(origin, f)| {
                let mut g = CompartmentState::zeros();
                for a in 0..AGE_GROUPS {
                    for s in MOBILE {
                        g[(a, s)] = f * states[origin][(a, s)];
                    }
                }
                (origin, g)
            })
            .collect();

        let mut y = vec![0.0; AWAY_DIM];
        y[..COMPARTMENTS].copy_from_slice(residents.as_slice());
        for (_, g) in &groups {
            for (p, v) in y[..COMPARTMENTS].iter_mut().zip(g.as_slice()) {
                *p += v;
            }
        }
        initial_propagator(&mut y);
        let system = AwayRegion { params: self.params, policy: self.policy };
        solver.integrate(&system, t0, t1, &mut y, step, &mut stats).map_err(wrap)?;

        let mut present = [0.0; COMPARTMENTS];
        present.copy_from_slice(&y[..COMPARTMENTS]);
        let mut returning = Vec::with_capacity(groups.len());
        for (origin, g) in &groups {
            let mut back = CompartmentState::zeros();
            propagate(&y, g.as_slice(), back.as_mut_slice());
            for (p, b) in present.iter_mut().zip(back.as_slice()) {
                *p -= b;
            }
            returning.push((*origin, back));
        }
        for (r, p) in residents.as_mut_slice().iter_mut().zip(present) {
            if p < 0.0 {
                stats.clamped += 1;
                stats.min_before_clamp = stats.min_before_clamp.min(p);
                if p < -NEGATIVITY_TOLERANCE {
                    stats.clamped_beyond_tolerance += 1;
                }
                *r = 0.0;
            } else {
                *r = p;
            }
        }
        Ok(AwayResult { residents, returning, stats })
    }

    fn for_each_node<I, T, F>(&self, items: Vec<(usize, I)>, f: F) -> Result<Vec<T>, MetapopError>
    where
        I: Send,
        T: Send,
        F: Fn(usize, I) -> Result<T, MetapopError> + Sync,
    {
        if self.options.parallel {
            items.into_par_iter().map(|(node, item)| f(node, item)).collect()
        } else {
            items.into_iter().map(|(node, item)| f(node, item)).collect()
        }
    }
}

/// Simulates all regions over `horizon` days from day 0.
pub fn simulate_metapopulation(
    graph: &MetapopGraph,
    initial: &[CompartmentState],
    params: &EpiParameters,
    policy: &ContactPolicy,
    horizon: u32,
    options: SimulationOptions,
) -> Result<MetapopRun, MetapopError> {
    Metapopulation::new(graph, params, policy, options)?.run(initial, 0, horizon)
}
