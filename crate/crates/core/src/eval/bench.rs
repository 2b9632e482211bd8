use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::epi::io::ModelConfig;
use crate::epi::ContactChangePoint;
use crate::epi::CompartmentState;
use crate::metapop::MetapopGraph;
use crate::scenario::{
    encode_spatial, run_scenario, sample_change_points_exact, sample_init, Regime, CHANGE_WINDOW, INPUT_DAYS,
};
use crate::surrogate::Surrogate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub executions: Vec<usize>,
    pub horizons: Vec<usize>,
    pub changes: Vec<usize>,
    pub repetitions: usize,
    pub regime: Regime,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            executions: vec![1, 10, 100],
            horizons: vec![30, 60, 90],
            changes: vec![0, 3],
            repetitions: 5,
            regime: Regime::Outbreak,
            seed: 0,
        }
    }
}

/// Median wall-clock seconds of both engines for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub executions: usize,
    pub horizon: usize,
    pub changes: usize,
    pub simulator_seconds: f64,
    pub surrogate_seconds: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    /// Seconds per forecast day, least squares over horizons at the smallest executions and changes.
    pub simulator_slope: f64,
    pub surrogate_slope: f64,
    /// Time at the longest horizon over time at the shortest, same cells as the slopes.
    pub simulator_ratio: f64,
    pub surrogate_ratio: f64,
}

impl BenchReport {
    pub fn cell(&self, executions: usize, horizon: usize, changes: usize) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.executions == executions && c.horizon == horizon && c.changes == changes)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / n, points.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}

struct Scenario {
    initial: Vec<CompartmentState>,
    change_points: Vec<ContactChangePoint>,
}

/// Times the simulator against `surrogates` (keyed by horizon) on one worker.
///
/// The simulator runs the input window plus the horizon from the initial
/// state; the surrogate encodes the input window, predicts and decodes.
pub fn bench_runtime(
    config: &BenchConfig,
    graph: &MetapopGraph,
    model: &ModelConfig,
    surrogates: &BTreeMap<usize, Surrogate>,
) -> Result<BenchReport, EvalError> {
    let reps = config.repetitions.max(1);
    let max_exec = config.executions.iter().copied().max().unwrap_or(0);
    let mut cells = Vec::new();
    for &changes in &config.changes {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ changes as u64);
        let scenarios: Vec<Scenario> = (0..max_exec)
            .map(|_| {
                let change_points = sample_change_points_exact(&mut rng, changes, CHANGE_WINDOW);
                let initial: Result<Vec<CompartmentState>, _> = graph.nodes().iter().map(|p| sample_init(&mut rng, config.regime, p)).collect();
                initial.map(|initial| Scenario { initial, change_points })
            })
            .collect::<Result<_, _>>()?;
        for &horizon in &config.horizons {
            let net = surrogates.get(&horizon).ok_or(EvalError::MissingModel(horizon))?;
            let days = (horizon + INPUT_DAYS - 1) as u32;
            for &executions in &config.executions {
                let batch = &scenarios[..executions];
                let mut sim_times = Vec::with_capacity(reps);
                let mut runs = Vec::new();
                for _ in 0..reps {
                    let started = Instant::now();
                    runs = batch
                        .iter()
                        .map(|s| run_scenario(Some(graph), &s.initial, model, s.change_points.clone(), days, false))
                        .collect::<Result<Vec<_>, _>>()?;
                    sim_times.push(started.elapsed().as_secs_f64());
                }
                let inputs: Vec<_> = runs.iter().map(|r| (r.inputs(), r.policy.clone())).collect();
                let predict = || -> Result<(), EvalError> {
                    let features = inputs
                        .iter()
                        .map(|(states, policy)| encode_spatial(states, policy))
                        .collect::<Result<Vec<_>, _>>()?;
                    let refs: Vec<&[f32]> = features.iter().map(Vec::as_slice).collect();
                    std::hint::black_box(net.predict_batch(&refs)?);
                    Ok(())
                };
                predict()?;
                let mut sur_times = Vec::with_capacity(reps);
                for _ in 0..reps {
                    let started = Instant::now();
                    predict()?;
                    sur_times.push(started.elapsed().as_secs_f64());
                }
                let (sim, sur) = (median(sim_times), median(sur_times));
                cells.push(BenchCell {
                    executions,
                    horizon,
                    changes,
                    simulator_seconds: sim,
                    surrogate_seconds: sur,
                    speedup: sim / sur,
                });
            }
        }
    }
    let e0 = config.executions.iter().copied().min().unwrap_or(0);
    let c0 = config.changes.iter().copied().min().unwrap_or(0);
    let base: Vec<&BenchCell> = cells.iter().filter(|c| c.executions == e0 && c.changes == c0).collect();
    let pick = |f: fn(&BenchCell) -> f64| -> (f64, f64) {
        let pts: Vec<(f64, f64)> = base.iter().map(|c| (c.horizon as f64, f(c))).collect();
        let lo = base.iter().min_by_key(|c| c.horizon).map(|c| f(c)).unwrap_or(f64::NAN);
        let hi = base.iter().max_by_key(|c| c.horizon).map(|c| f(c)).unwrap_or(f64::NAN);
        (slope(&pts), hi / lo)
    };
    let (simulator_slope, simulator_ratio) = pick(|c| c.simulator_seconds);
    let (surrogate_slope, surrogate_ratio) = pick(|c| c.surrogate_seconds);
    Ok(BenchReport { cells, simulator_slope, surrogate_slope, simulator_ratio, surrogate_ratio })
}

/// One row per cell, mirroring the executions by horizon by changes grid.
pub fn write_bench_csv(report: &BenchReport, out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for c in &report.cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
