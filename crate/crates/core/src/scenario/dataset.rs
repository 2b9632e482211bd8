//! Scenario datasets.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "EGS1" | u32 header length | header JSON
//! per record: u32 body length | f32 features | f32 labels | meta JSON
//! ```
//!
//! Feature and label counts are fixed by the header, so the meta JSON fills
//! the rest of each record body. Labels hold the simulated states of the days
//! after the input window on the original scale, laid out as
//! `[day][node][age * 8 + state]`.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::{encode_nonspatial, encode_spatial, INPUT_DAYS, NONSPATIAL_WIDTH, SPATIAL_WIDTH};
use super::sampling::{sample_change_points, sample_change_points_exact, sample_init, Regime, CHANGE_WINDOW};
use super::ScenarioError;
use crate::epi::contact::MAX_CHANGE_POINTS;
use crate::epi::io::ModelConfig;
use crate::epi::model::integrate;
use crate::epi::state::{CompartmentState, COMPARTMENTS};
use crate::epi::{ContactChangePoint, ContactPolicy, DailyTrajectory};
use crate::metapop::{simulate_metapopulation, MetapopGraph, NodePopulation, SimulationOptions};

pub const DATASET_MAGIC: &[u8; 4] = b"EGS1";
pub const DATASET_SCHEMA_VERSION: u32 = 1;
/// Extra attempts per sample after a failed simulation.
pub const MAX_RETRIES: u32 = 3;

/// Seeded synthetic graph used for spatial datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub density: f64,
    pub seed: u64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self { n: 400, density: 0.25, seed: 0 }
    }
}

impl GraphSpec {
    pub fn build(&self) -> Result<MetapopGraph, ScenarioError> {
        Ok(MetapopGraph::synthetic(self.n, self.density, self.seed)?)
    }
}

fn default_input_days() -> usize {
    INPUT_DAYS
}

fn default_max_changes() -> usize {
    MAX_CHANGE_POINTS
}

fn default_window() -> u32 {
    CHANGE_WINDOW
}

fn default_population() -> f64 {
    100_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub regime: Regime,
    /// Days predicted after the input window.
    pub horizon: u32,
    #[serde(default = "default_input_days")]
    pub input_days: usize,
    /// The number of change points is uniform over `0..=max_changes`.
    #[serde(default = "default_max_changes")]
    pub max_changes: usize,
    /// Overrides `max_changes` with a fixed number of change points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_changes: Option<usize>,
    #[serde(default = "default_window")]
    pub change_window: u32,
    pub seed: u64,
    pub spatial: bool,
    pub n_samples: usize,
    /// Population of the single region of non-spatial samples.
    #[serde(default = "default_population")]
    pub population: f64,
    /// Graph of spatial samples.
    #[serde(default)]
    pub graph: GraphSpec,
    #[serde(default)]
    pub model: ModelConfig,
}

impl ScenarioConfig {
    pub fn new(regime: Regime, horizon: u32, spatial: bool, n_samples: usize, seed: u64) -> Self {
        Self {
            regime,
            horizon,
            input_days: INPUT_DAYS,
            max_changes: MAX_CHANGE_POINTS,
            fixed_changes: None,
            change_window: CHANGE_WINDOW,
            seed,
            spatial,
            n_samples,
            population: default_population(),
            graph: GraphSpec::default(),
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if self.input_days != INPUT_DAYS {
            return bad(format!("input_days must be {INPUT_DAYS}, got {}", self.input_days));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        let changes = self.fixed_changes.unwrap_or(self.max_changes);
        if changes > MAX_CHANGE_POINTS {
            return bad(format!("at most {MAX_CHANGE_POINTS} change points, got {changes}"));
        }
        if changes > 0 && (self.change_window as usize) < changes {
            return bad(format!("change_window {} cannot hold {changes} change points", self.change_window));
        }
        if changes > 0 && self.horizon < self.change_window {
            return bad(format!("horizon {} is shorter than change_window {}", self.horizon, self.change_window));
        }
        if !(self.population.is_finite() && self.population > 0.0) {
            return bad(format!("population must be positive, got {}", self.population));
        }
        self.model.validate()?;
        Ok(())
    }

    /// Total simulated days: the input window plus the horizon, counted from day 0.
    pub fn simulated_days(&self) -> u32 {
        self.horizon + INPUT_DAYS as u32 - 1
    }

    pub fn nodes(&self) -> usize {
        if self.spatial { self.graph.n } else { 1 }
    }

    pub fn feature_shape(&self) -> [usize; 2] {
        if self.spatial { [self.graph.n, SPATIAL_WIDTH] } else { [INPUT_DAYS, NONSPATIAL_WIDTH] }
    }

    pub fn label_shape(&self) -> [usize; 3] {
        [self.horizon as usize, self.nodes(), COMPARTMENTS]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub seed: u64,
    pub regime: Regime,
    pub horizon: u32,
    pub change_points: Vec<ContactChangePoint>,
    /// Simulation attempts needed, at least 1.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f32>,
    pub labels: Vec<f32>,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn change_count(&self) -> usize {
        self.meta.change_points.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub count: usize,
    pub feature_shape: [usize; 2],
    pub label_shape: [usize; 3],
    /// Graph of spatial datasets, mobility given as a weighted edge list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<MetapopGraph>,
}

impl DatasetHeader {
    pub fn feature_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn label_len(&self) -> usize {
        self.label_shape.iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn horizon(&self) -> usize {
        self.header.label_shape[0]
    }

    pub fn nodes(&self) -> usize {
        self.header.label_shape[1]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let samples: Vec<Sample> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let mut header = self.header.clone();
        header.count = samples.len();
        Dataset { header, samples }
    }
}

/// Mechanistic trajectories of one scenario, days `0..=simulated_days` per node.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub nodes: Vec<DailyTrajectory>,
    pub policy: ContactPolicy,
}

impl ScenarioRun {
    /// The first `INPUT_DAYS` states of every node.
    pub fn inputs(&self) -> Vec<Vec<CompartmentState>> {
        self.nodes.iter().map(|t| t.states()[..INPUT_DAYS].to_vec()).collect()
    }

    /// States after the input window as `[day][node][48]`.
    pub fn labels(&self, horizon: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(horizon * self.nodes.len() * COMPARTMENTS);
        for d in INPUT_DAYS..INPUT_DAYS + horizon {
            for traj in &self.nodes {
                out.extend(traj.day(d).as_slice().iter().map(|v| *v as f32));
            }
        }
        out
    }

    pub fn features(&self, spatial: bool) -> Result<Vec<f32>, ScenarioError> {
        if spatial {
            encode_spatial(&self.inputs(), &self.policy)
        } else {
            encode_nonspatial(&self.inputs()[0], &self.policy)
        }
    }
}

/// Runs the mechanistic model from `initial` over `days` days on `graph`, or
/// on a single region when `graph` is `None`.
pub fn run_scenario(
    graph: Option<&MetapopGraph>,
    initial: &[CompartmentState],
    model: &ModelConfig,
    change_points: Vec<ContactChangePoint>,
    days: u32,
    parallel: bool,
) -> Result<ScenarioRun, ScenarioError> {
    let policy = model.policy.with_change_points(change_points)?;
    let nodes = match graph {
        Some(g) => {
            let options = SimulationOptions { tolerances: model.tolerances, parallel, ..Default::default() };
            simulate_metapopulation(g, initial, &model.parameters, &policy, days, options)?.nodes
        }
        None => {
            let [state] = initial else {
                return Err(ScenarioError::Shape { what: "single-region initial states", expected: 1, found: initial.len() });
            };
            vec![integrate(state, &model.parameters, &policy, days, model.tolerances)?.0]
        }
    };
    Ok(ScenarioRun { nodes, policy })
}

/// Simulates sample `index` of a dataset.
pub fn generate_sample(config: &ScenarioConfig, graph: Option<&MetapopGraph>, index: usize) -> Result<Sample, ScenarioError> {
    let seed = config.seed ^ index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let single = [NodePopulation { population: config.population, age_shares: config.model.age_shares() }];
    let nodes: &[NodePopulation] = match graph {
        Some(g) => g.nodes(),
        None => &single,
    };
    let mut last_error = String::new();
    for attempt in 1..=1 + MAX_RETRIES {
        let change_points = match config.fixed_changes {
            Some(k) => sample_change_points_exact(&mut rng, k, config.change_window),
            None => sample_change_points(&mut rng, config.max_changes, config.change_window),
        };
        let initial = nodes
            .iter()
            .map(|p| sample_init(&mut rng, config.regime, p))
            .collect::<Result<Vec<_>, _>>()?;
        match run_scenario(graph, &initial, &config.model, change_points.clone(), config.simulated_days(), false) {
            Ok(run) => {
                return Ok(Sample {
                    features: run.features(config.spatial)?,
                    labels: run.labels(config.horizon as usize),
                    meta: SampleMeta {
                        index,
                        seed,
                        regime: config.regime,
                        horizon: config.horizon,
                        change_points,
                        attempts: attempt,
                    },
                });
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(ScenarioError::Simulation { index, attempts: 1 + MAX_RETRIES, message: last_error })
}

pub struct DatasetWriter<W: Write> {
    inner: W,
    header: DatasetHeader,
    written: usize,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut inner: W, header: DatasetHeader) -> Result<Self, ScenarioError> {
        let json = serde_json::to_vec(&header)?;
        inner.write_all(DATASET_MAGIC)?;
        inner.write_all(&(json.len() as u32).to_le_bytes())?;
        inner.write_all(&json)?;
        Ok(Self { inner, header, written: 0 })
    }

    pub fn write_sample(&mut self, sample: &Sample) -> Result<(), ScenarioError> {
        let (f, l) = (self.header.feature_len(), self.header.label_len());
        if sample.features.len() != f {
            return Err(ScenarioError::Shape { what: "sample features", expected: f, found: sample.features.len() });
        }
        if sample.labels.len() != l {
            return Err(ScenarioError::Shape { what: "sample labels", expected: l, found: sample.labels.len() });
        }
        let meta = serde_json::to_vec(&sample.meta)?;
        let body = 4 * (f + l) + meta.len();
        let mut buf = Vec::with_capacity(4 + body);
        buf.extend_from_slice(&(body as u32).to_le_bytes());
        for v in sample.features.iter().chain(&sample.labels) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&meta);
        self.inner.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, ScenarioError> {
        if self.written != self.header.count {
            return Err(ScenarioError::Corrupt(format!(
                "header announces {} records but {} were written",
                self.header.count, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<Option<u32>, ScenarioError> {
    let mut b = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let k = r.read(&mut b[got..])?;
        if k == 0 {
            return if got == 0 { Ok(None) } else { Err(ScenarioError::Corrupt(format!("truncated {what}"))) };
        }
        got += k;
    }
    Ok(Some(u32::from_le_bytes(b)))
}

fn read_exact(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>, ScenarioError> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => ScenarioError::Corrupt(format!("truncated {what}")),
        _ => ScenarioError::Io(e),
    })?;
    Ok(buf)
}

fn floats(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

pub fn read_dataset(mut r: impl BufRead) -> Result<Dataset, ScenarioError> {
    let magic = read_exact(&mut r, 4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(ScenarioError::Corrupt("not a scenario dataset (bad magic)".into()));
    }
    let len = read_u32(&mut r, "header length")?.ok_or_else(|| ScenarioError::Corrupt("missing header".into()))?;
    let raw: serde_json::Value = serde_json::from_slice(&read_exact(&mut r, len as usize, "header")?)?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != DATASET_SCHEMA_VERSION {
        return Err(ScenarioError::VersionMismatch { expected: DATASET_SCHEMA_VERSION, found: version });
    }
    let header: DatasetHeader = serde_json::from_value(raw)?;
    let (f, l) = (header.feature_len(), header.label_len());
    let mut samples = Vec::with_capacity(header.count);
    while let Some(body) = read_u32(&mut r, "record length")? {
        let body = body as usize;
        if body < 4 * (f + l) {
            return Err(ScenarioError::Corrupt(format!("record {} is shorter than its tensors", samples.len())));
        }
        let bytes = read_exact(&mut r, body, "record")?;
        let (tensors, meta) = bytes.split_at(4 * (f + l));
        samples.push(Sample {
            features: floats(&tensors[..4 * f]),
            labels: floats(&tensors[4 * f..]),
            meta: serde_json::from_slice(meta)?,
        });
    }
    if samples.len() != header.count {
        return Err(ScenarioError::Corrupt(format!("header announces {} records, found {}", header.count, samples.len())));
    }
    Ok(Dataset { header, samples })
}

/// Generates `config.n_samples` samples in parallel and writes them in index
/// order, so the bytes depend only on `config`.
pub fn generate_dataset<W: Write>(config: &ScenarioConfig, out: W) -> Result<DatasetHeader, ScenarioError> {
    config.validate()?;
    let graph = if config.spatial { Some(config.graph.build()?) } else { None };
    let header = DatasetHeader {
        schema_version: DATASET_SCHEMA_VERSION,
        config: config.clone(),
        count: config.n_samples,
        feature_shape: config.feature_shape(),
        label_shape: config.label_shape(),
        graph: graph.clone(),
    };
    let mut writer = DatasetWriter::new(out, header.clone())?;
    let chunk = 4 * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < config.n_samples {
        let end = (start + chunk).min(config.n_samples);
        let samples: Vec<Sample> = (start..end)
            .into_par_iter()
            .map(|i| generate_sample(config, graph.as_ref(), i))
            .collect::<Result<_, _>>()?;
        for s in &samples {
            writer.write_sample(s)?;
        }
        start = end;
    }
    writer.finish()?;
    Ok(header)
}

#[derive(Serialize)]
struct NdjsonRecord<'a> {
    meta: &'a SampleMeta,
    features: &'a [f32],
    labels: &'a [f32],
}

/// One JSON object per record.
pub fn write_ndjson<W: Write>(dataset: &Dataset, mut out: W) -> Result<(), ScenarioError> {
    for s in &dataset.samples {
        serde_json::to_writer(&mut out, &NdjsonRecord { meta: &s.meta, features: &s.features, labels: &s.labels })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
