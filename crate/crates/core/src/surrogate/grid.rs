use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{Activation, LayerKind, LayerSpec, ModelSpec};
use super::train::{train, OptimizerKind, TrainConfig};
use super::SurrogateError;
use crate::scenario::Dataset;

/// One architecture and optimizer setting of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub kind: LayerKind,
    /// Hidden layers before the readout.
    pub depth: usize,
    pub channels: usize,
    pub activation: Activation,
    pub stacks: usize,
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

impl GridPoint {
    pub fn hidden(&self) -> Vec<LayerSpec> {
        let layer = LayerSpec {
            kind: self.kind,
            channels: self.channels,
            activation: self.activation,
            stacks: self.stacks,
            iterations: self.iterations,
        };
        vec![layer; self.depth]
    }
}

/// Cartesian product of the listed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub kinds: Vec<LayerKind>,
    pub depths: Vec<usize>,
    pub channels: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default = "single_one")]
    pub stacks: Vec<usize>,
    #[serde(default = "single_one")]
    pub iterations: Vec<usize>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
}

fn single_one() -> Vec<usize> {
    vec![1]
}

impl GridSpace {
    /// Dense networks with zero to four hidden layers.
    pub fn mlp() -> Self {
        Self {
            kinds: vec![LayerKind::Dense],
            depths: (0..=4).collect(),
            channels: vec![32, 64, 128, 512, 1024, 2048],
            activations: vec![Activation::Relu, Activation::Elu],
            stacks: vec![1],
            iterations: vec![1],
            optimizers: vec![OptimizerKind::Adam, OptimizerKind::Sgd],
            learning_rates: vec![1e-3],
        }
    }

    /// Graph layers with one to three layers of 32 to 1024 channels.
    pub fn graph() -> Self {
        Self {
            kinds: vec![LayerKind::GcnConv, LayerKind::ArmaConv],
            depths: vec![1, 2, 3],
            channels: vec![32, 64, 128, 256, 512, 1024],
            activations: vec![Activation::Relu],
            stacks: vec![1],
            iterations: vec![1],
            optimizers: vec![OptimizerKind::Adam],
            learning_rates: vec![1e-3],
        }
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &depth in &self.depths {
                for &channels in &self.channels {
                    for &activation in &self.activations {
                        for &stacks in &self.stacks {
                            for &iterations in &self.iterations {
                                if kind != LayerKind::ArmaConv && (stacks != 1 || iterations != 1) {
                                    continue;
                                }
                                for &optimizer in &self.optimizers {
                                    for &learning_rate in &self.learning_rates {
                                        out.push(GridPoint {
                                            kind,
                                            depth,
                                            channels,
                                            activation,
                                            stacks,
                                            iterations,
                                            optimizer,
                                            learning_rate,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    /// Best validation MAPE of each fold, log1p scale.
    pub fold_mapes: Vec<f64>,
    pub mean_mape: Option<f64>,
    pub std_mape: Option<f64>,
    pub train_seconds: f64,
    pub error: Option<String>,
}

/// Seeded shuffle split into `k` folds; returns `(train, validation)` index pairs.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>, SurrogateError> {
    if k < 2 || n < k {
        return Err(SurrogateError::InvalidSpec(format!("cannot split {n} samples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|f| {
            let (lo, hi) = (f * n / k, (f + 1) * n / k);
            let val = order[lo..hi].to_vec();
            let train = order[..lo].iter().chain(&order[hi..]).copied().collect();
            (train, val)
        })
        .collect())
}

/// k-fold cross-validation of every point; results sorted by mean MAPE, failures last.
pub fn grid_search(
    points: &[GridPoint],
    dataset: &Dataset,
    k: usize,
    base: &TrainConfig,
    parallel: bool,
) -> Result<Vec<GridResult>, SurrogateError> {
    if points.is_empty() {
        return Err(SurrogateError::InvalidSpec("empty grid".into()));
    }
    let folds = kfold(dataset.samples.len(), k, base.seed)?;
    let graph = dataset.header.graph.as_ref().map(|g| g.adjacency().clone());
    let cells: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..k).map(move |f| (p, f))).collect();
    let run = |&(p, f): &(usize, usize)| -> Result<(f64, f64), SurrogateError> {
        let point = &points[p];
        let spec = ModelSpec::for_dataset(&dataset.header, point.hidden())?;
        let config = TrainConfig { optimizer: point.optimizer, learning_rate: point.learning_rate, ..base.clone() };
        let (tr, va) = &folds[f];
        let ckpt = train(&spec, graph.as_ref(), &dataset.subset(tr), &dataset.subset(va), &config)?;
        let mape = ckpt.meta.best_validation_mape.ok_or(SurrogateError::Diverged { epoch: 0 })?;
        Ok((mape, ckpt.meta.train_seconds))
    };
    let outcomes: Vec<Result<(f64, f64), SurrogateError>> =
        if parallel { cells.par_iter().map(run).collect() } else { cells.iter().map(run).collect() };

    let mut results: Vec<GridResult> = points
        .iter()
        .enumerate()
        .map(|(p, point)| {
            let cell = &outcomes[p * k..(p + 1) * k];
            let train_seconds = cell.iter().filter_map(|r| r.as_ref().ok()).map(|r| r.1).sum();
            match cell.iter().find_map(|r| r.as_ref().err()) {
                Some(e) => GridResult {
                    point: *point,
                    fold_mapes: Vec::new(),
                    mean_mape: None,
                    std_mape: None,
                    train_seconds,
                    error: Some(e.to_string()),
                },
                None => {
                    let fold_mapes: Vec<f64> = cell.iter().map(|r| r.as_ref().expect("checked").0).collect();
                    let mean = fold_mapes.iter().sum::<f64>() / k as f64;
                    let var = fold_mapes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / k as f64;
                    GridResult {
                        point: *point,
                        fold_mapes,
                        mean_mape: Some(mean),
                        std_mape: Some(var.sqrt()),
                        train_seconds,
                        error: None,
                    }
                }
            }
        })
        .collect();
    results.sort_by(|a, b| match (a.mean_mape, b.mean_mape) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(results)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    rank: usize,
    kind: String,
    depth: usize,
    channels: usize,
    activation: String,
    stacks: usize,
    iterations: usize,
    optimizer: String,
    learning_rate: f64,
    mean_mape: Option<f64>,
    std_mape: Option<f64>,
    train_seconds: f64,
    error: &'a str,
}

/// One row per result in ranked order.
pub fn write_grid_csv(results: &[GridResult], out: impl Write) -> Result<(), SurrogateError> {
    let mut w = csv::Writer::from_writer(out);
    for (i, r) in results.iter().enumerate() {
        let p = &r.point;
        w.serialize(CsvRow {
            rank: i + 1,
            kind: p.kind.to_string(),
            depth: p.depth,
            channels: p.channels,
            activation: p.activation.to_string(),
            stacks: p.stacks,
            iterations: p.iterations,
            optimizer: p.optimizer.to_string(),
            learning_rate: p.learning_rate,
            mean_mape: r.mean_mape,
            std_mape: r.std_mape,
            train_seconds: r.train_seconds,
            error: r.error.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}
