use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::model::{labels_to_rows, FeatureScaling, Surrogate};
use super::spec::ModelSpec;
use super::SurrogateError;
use crate::autodiff::{Adam, AdamConfig, Optimizer, Sgd, Tape, Tensor, Var, MAPE_FLOOR};
use crate::metapop::BinaryAdjacency;
use crate::scenario::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = SurrogateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(SurrogateError::InvalidSpec(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
    /// Standardize input columns with training-set statistics.
    pub standardize: bool,
    /// Start the readout at zero weight and the mean log1p training target.
    pub init_output_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_epochs: 2000, patience: 50, batch_size: 32, optimizer: OptimizerKind::Adam, learning_rate: 1e-3, seed: 0, standardize: true, init_output_bias: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mape: f64,
    pub validation_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    /// On the log1p scale the model is fitted on; absent before the first epoch.
    pub best_validation_mape: Option<f64>,
    pub train_seconds: f64,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

impl TrainingMeta {
    pub fn untrained(seed: u64) -> Self {
        Self {
            seed,
            epochs: 0,
            best_epoch: 0,
            best_validation_mape: None,
            train_seconds: 0.0,
            config: TrainConfig { seed, ..TrainConfig::default() },
            history: Vec::new(),
        }
    }
}

/// Features and log1p targets in row layout.
pub(crate) struct Prepared {
    features: Vec<Vec<f32>>,
    targets: Vec<Vec<f32>>,
}

impl Prepared {
    pub(crate) fn new(model: &Surrogate, data: &Dataset) -> Result<Self, SurrogateError> {
        let spec = model.spec();
        let (fl, ll) = (spec.feature_len(), spec.label_len());
        let mut features = Vec::with_capacity(data.samples.len());
        let mut targets = Vec::with_capacity(data.samples.len());
        for s in &data.samples {
            if s.features.len() != fl {
                return Err(SurrogateError::Encoding { expected: fl, found: s.features.len() });
            }
            if s.labels.len() != ll {
                return Err(SurrogateError::Encoding { expected: ll, found: s.labels.len() });
            }
            let mut f = s.features.clone();
            model.scale_features(&mut f);
            features.push(f);
            let rows = labels_to_rows(&s.labels, spec.nodes, spec.horizon);
            targets.push(rows.iter().map(|y| y.max(0.0).ln_1p()).collect());
        }
        Ok(Self { features, targets })
    }

    fn len(&self) -> usize {
        self.features.len()
    }

    fn batch(&self, spec: &ModelSpec, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let rows = idx.len() * spec.nodes;
        let x: Vec<f32> = idx.iter().flat_map(|&i| self.features[i].iter().copied()).collect();
        let y: Vec<f32> = idx.iter().flat_map(|&i| self.targets[i].iter().copied()).collect();
        (
            Tensor::new(&[rows, spec.input_width], x).expect("checked lengths"),
            Tensor::new(&[rows, spec.output_width], y).expect("checked lengths"),
        )
    }
}

/// Pooled log1p-scale MAPE over `data`.
pub(crate) fn log_mape(model: &Surrogate, data: &Prepared, batch_size: usize) -> Result<f64, SurrogateError> {
    let (mut total, mut count) = (0.0f64, 0usize);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(model.spec(), chunk);
        let p = model.forward_rows(x)?;
        for (yh, y) in p.data().iter().zip(y.data()) {
            let y = *y as f64;
            if y.abs() > MAPE_FLOOR {
                total += (y - *yh as f64).abs() / y.abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SurrogateError::EmptySplit("no nonzero validation targets"));
    }
    Ok(100.0 * total / count as f64)
}

enum Opt {
    Adam(Adam),
    Sgd(Sgd),
}

impl Opt {
    fn step(&mut self, params: &mut [Arc<Tensor<f32>>], grads: &[Option<Tensor<f32>>]) -> Result<(), SurrogateError> {
        match self {
            Opt::Adam(o) => o.step(params, grads)?,
            Opt::Sgd(o) => o.step(params, grads)?,
        }
        Ok(())
    }
}

/// Trains a freshly initialized network and returns the best-validation checkpoint.
pub fn train(
    spec: &ModelSpec,
    graph: Option<&BinaryAdjacency>,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
) -> Result<Checkpoint, SurrogateError> {
    let mut model = Surrogate::init(spec.clone(), graph.cloned(), config.seed)?;
    if config.standardize {
        let rows = train.samples.iter().flat_map(|s| s.features.chunks(spec.input_width));
        model = model.with_scaling(Some(FeatureScaling::fit(rows, spec.input_width)))?;
    }
    if config.init_output_bias && !train.samples.is_empty() {
        let width = spec.output_width;
        let mut mean = vec![0.0f64; width];
        let mut rows = 0usize;
        for s in &train.samples {
            if s.labels.len() != spec.label_len() {
                return Err(SurrogateError::Encoding { expected: spec.label_len(), found: s.labels.len() });
            }
            for row in labels_to_rows(&s.labels, spec.nodes, spec.horizon).chunks_exact(width) {
                for (m, y) in mean.iter_mut().zip(row) {
                    *m += (y.max(0.0) as f64).ln_1p();
                }
                rows += 1;
            }
        }
        let params = model.params_mut();
        let k = params.len();
        Arc::make_mut(&mut params[k - 2]).data_mut().fill(0.0);
        for (b, m) in Arc::make_mut(&mut params[k - 1]).data_mut().iter_mut().zip(&mean) {
            *b = (m / rows as f64) as f32;
        }
    }
    train_from(model, train, validation, config)
}

/// Continues training `model`.
pub fn train_from(
    mut model: Surrogate,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
) -> Result<Checkpoint, SurrogateError> {
    if train.samples.is_empty() {
        return Err(SurrogateError::EmptySplit("training split is empty"));
    }
    if validation.samples.is_empty() {
        return Err(SurrogateError::EmptySplit("validation split is empty"));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(SurrogateError::InvalidSpec("batch size and learning rate must be positive".into()));
    }
    let started = Instant::now();
    let spec = model.spec().clone();
    let train_data = Prepared::new(&model, train)?;
    let val_data = Prepared::new(&model, validation)?;
    let mut opt = match config.optimizer {
        OptimizerKind::Adam => Opt::Adam(Adam::new(AdamConfig { lr: config.learning_rate, ..AdamConfig::default() })),
        OptimizerKind::Sgd => Opt::Sgd(Sgd { lr: config.learning_rate }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    let mut best = (f64::INFINITY, 0usize, model.params().to_vec());
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train_data.batch(&spec, chunk);
            let mut tape = Tape::new();
            let vars: Vec<Var> = model.params().iter().map(|p| tape.param(p.clone())).collect();
            let xv = tape.constant(x);
            let out = model.forward(&mut tape, xv, &vars)?;
            let loss = match tape.mape_loss(out, Arc::new(y)) {
                Ok(l) => l,
                Err(crate::autodiff::AutodiffError::NoParticipatingEntries) => continue,
                Err(e) => return Err(e.into()),
            };
            let value = tape.value(loss).data()[0] as f64;
            if !value.is_finite() {
                return Err(SurrogateError::Diverged { epoch });
            }
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Option<Tensor<f32>>> = vars.iter().map(|v| grads.take(*v)).collect();
            drop(tape);
            opt.step(model.params_mut(), &grads)?;
            loss_sum += value;
            batches += 1;
        }
        let validation_mape = log_mape(&model, &val_data, config.batch_size)?;
        if !validation_mape.is_finite() {
            return Err(SurrogateError::Diverged { epoch });
        }
        history.push(EpochRecord { epoch, train_mape: loss_sum / batches.max(1) as f64, validation_mape });
        if validation_mape < best.0 {
            best = (validation_mape, epoch, model.params().to_vec());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    let epochs = history.len();
    let (best_validation_mape, best_epoch, params) = best;
    model.set_params(params);
    let meta = TrainingMeta {
        seed: config.seed,
        epochs,
        best_epoch,
        best_validation_mape: best_validation_mape.is_finite().then_some(best_validation_mape),
        train_seconds: started.elapsed().as_secs_f64(),
        config: config.clone(),
        history,
    };
    Ok(Checkpoint::from_network(&model, meta))
}
