use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::autodiff::MAPE_FLOOR;
use crate::epi::state::COMPARTMENTS;
use crate::scenario::Dataset;
use crate::surrogate::Surrogate;

/// Maps encoded features to original-scale outputs laid out like labels.
pub trait Predictor: Sync {
    fn predict(&self, features: &[f32]) -> Result<Vec<f32>, EvalError>;
}

impl Predictor for Surrogate {
    fn predict(&self, features: &[f32]) -> Result<Vec<f32>, EvalError> {
        Ok(Surrogate::predict(self, features)?)
    }
}

/// Running MAPE; targets with `|y| <= MAPE_FLOOR` are counted as excluded.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MapeAccumulator {
    sum: f64,
    participating: usize,
    excluded: usize,
}

impl MapeAccumulator {
    pub fn add(&mut self, prediction: f64, target: f64) {
        if target.abs() > MAPE_FLOOR {
            self.sum += (target - prediction).abs() / target.abs();
            self.participating += 1;
        } else {
            self.excluded += 1;
        }
    }

    pub fn merge(&mut self, other: &MapeAccumulator) {
        self.sum += other.sum;
        self.participating += other.participating;
        self.excluded += other.excluded;
    }

    pub fn summary(&self) -> MapeSummary {
        let total = self.participating + self.excluded;
        MapeSummary {
            mape: (self.participating > 0).then(|| 100.0 * self.sum / self.participating as f64),
            participating: self.participating,
            excluded: self.excluded,
            exclusion_rate: if total == 0 { 0.0 } else { self.excluded as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeSummary {
    /// Percent; absent when every target was excluded.
    pub mape: Option<f64>,
    pub participating: usize,
    pub excluded: usize,
    pub exclusion_rate: f64,
}

/// Pooled MAPE of `predictions` against `targets`.
pub fn mape(predictions: &[f32], targets: &[f32]) -> MapeSummary {
    assert_eq!(predictions.len(), targets.len());
    let mut acc = MapeAccumulator::default();
    for (p, y) in predictions.iter().zip(targets) {
        acc.add(*p as f64, *y as f64);
    }
    acc.summary()
}

/// Pointwise mean of the training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyEstimator {
    pub mean: Vec<f32>,
}

impl DummyEstimator {
    pub fn fit<'a>(labels: impl IntoIterator<Item = &'a [f32]>) -> Result<Self, EvalError> {
        let mut sum: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for l in labels {
            if count == 0 {
                sum = vec![0.0; l.len()];
            } else if l.len() != sum.len() {
                return Err(EvalError::Encoding { expected: sum.len(), found: l.len() });
            }
            for (s, v) in sum.iter_mut().zip(l) {
                *s += *v as f64;
            }
            count += 1;
        }
        if count == 0 || sum.is_empty() {
            return Err(EvalError::EmptyTrain);
        }
        Ok(Self { mean: sum.into_iter().map(|s| (s / count as f64) as f32).collect() })
    }

    pub fn fit_dataset(train: &Dataset) -> Result<Self, EvalError> {
        Self::fit(train.samples.iter().map(|s| s.labels.as_slice()))
    }
}

impl Predictor for DummyEstimator {
    fn predict(&self, _features: &[f32]) -> Result<Vec<f32>, EvalError> {
        Ok(self.mean.clone())
    }
}

/// MAPE of the dummy estimator on `eval`.
pub fn evaluate_dummy(dummy: &DummyEstimator, eval: &Dataset) -> Result<MapeSummary, EvalError> {
    let mut acc = MapeAccumulator::default();
    for s in &eval.samples {
        if s.labels.len() != dummy.mean.len() {
            return Err(EvalError::Encoding { expected: dummy.mean.len(), found: s.labels.len() });
        }
        let mut sample = MapeAccumulator::default();
        for (p, y) in dummy.mean.iter().zip(&s.labels) {
            sample.add(*p as f64, *y as f64);
        }
        acc.merge(&sample);
    }
    Ok(acc.summary())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: usize,
    pub mape: Option<f64>,
    pub participating: usize,
}

/// MAPE of the samples sharing a horizon and change-point count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub horizon: usize,
    pub changes: usize,
    pub samples: usize,
    pub mape: Option<f64>,
    pub participating: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: MapeSummary,
    pub per_node: Vec<NodeReport>,
    pub cells: Vec<CellReport>,
}

struct Partial {
    overall: MapeAccumulator,
    nodes: Vec<MapeAccumulator>,
    cell: (usize, usize),
}

/// Original-scale MAPE of `predictor` on every sample of `data`.
pub fn evaluate_model(predictor: &dyn Predictor, data: &Dataset) -> Result<EvalReport, EvalError> {
    let nodes = data.nodes();
    let label_len = data.header.label_len();
    let partials: Vec<Partial> = data
        .samples
        .par_iter()
        .map(|s| {
            let pred = predictor.predict(&s.features)?;
            if pred.len() != label_len || s.labels.len() != label_len {
                return Err(EvalError::Encoding { expected: label_len, found: pred.len().min(s.labels.len()) });
            }
            let mut part = Partial {
                overall: MapeAccumulator::default(),
                nodes: vec![MapeAccumulator::default(); nodes],
                cell: (s.meta.horizon as usize, s.change_count()),
            };
            for (i, (p, y)) in pred.iter().zip(&s.labels).enumerate() {
                let node = (i / COMPARTMENTS) % nodes;
                part.nodes[node].add(*p as f64, *y as f64);
                part.overall.add(*p as f64, *y as f64);
            }
            Ok(part)
        })
        .collect::<Result<_, EvalError>>()?;

    let mut overall = MapeAccumulator::default();
    let mut per_node = vec![MapeAccumulator::default(); nodes];
    let mut cells: BTreeMap<(usize, usize), (usize, MapeAccumulator)> = BTreeMap::new();
    for p in &partials {
        overall.merge(&p.overall);
        for (acc, n) in per_node.iter_mut().zip(&p.nodes) {
            acc.merge(n);
        }
        let cell = cells.entry(p.cell).or_default();
        cell.0 += 1;
        cell.1.merge(&p.overall);
    }
    Ok(EvalReport {
        overall: overall.summary(),
        per_node: per_node
            .iter()
            .enumerate()
            .map(|(node, a)| {
                let s = a.summary();
                NodeReport { node, mape: s.mape, participating: s.participating }
            })
            .collect(),
        cells: cells
            .into_iter()
            .map(|((horizon, changes), (samples, acc))| {
                let s = acc.summary();
                CellReport { horizon, changes, samples, mape: s.mape, participating: s.participating }
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::tests::toy_dataset;

    #[test]
    fn exclusion_is_reported() {
        let s = mape(&[1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 0.0, 2.0]);
        assert_eq!(s.mape, Some(50.0));
        assert_eq!((s.participating, s.excluded), (2, 2));
        assert_eq!(s.exclusion_rate, 0.5);
        assert_eq!(mape(&[1.0], &[0.0]).mape, None);
    }

    #[test]
    fn dummy_fixtures() {
        let a = vec![100.0f32; 6];
        let b = vec![300.0f32; 6];
        let dummy = DummyEstimator::fit([a.as_slice(), b.as_slice()]).unwrap();
        assert!(dummy.mean.iter().all(|v| *v == 200.0));
        assert_eq!(mape(&dummy.mean, &a).mape, Some(100.0));
        let same = DummyEstimator::fit([a.as_slice(), a.as_slice()]).unwrap();
        assert_eq!(mape(&same.mean, &a).mape, Some(0.0));
        assert!(matches!(DummyEstimator::fit(std::iter::empty()), Err(EvalError::EmptyTrain)));
    }

    #[test]
    fn dummy_routed_through_evaluate_model_matches() {
        let data = toy_dataset(30, 3, 2, 1, |f| 1.0 + 100.0 * f[0]);
        let dummy = DummyEstimator::fit_dataset(&data.subset(&(0..20).collect::<Vec<_>>())).unwrap();
        let eval = data.subset(&(20..30).collect::<Vec<_>>());
        let direct = evaluate_dummy(&dummy, &eval).unwrap();
        let routed = evaluate_model(&dummy, &eval).unwrap();
        assert_eq!(direct, routed.overall);
        assert_eq!(routed.cells.len(), 1);
        assert_eq!(routed.cells[0].samples, 10);
    }

    #[test]
    fn dummy_is_order_invariant() {
        let data = toy_dataset(12, 3, 1, 2, |f| 1.0 + 10.0 * f[1]);
        let fwd = DummyEstimator::fit_dataset(&data).unwrap();
        let rev = DummyEstimator::fit_dataset(&data.subset(&(0..12).rev().collect::<Vec<_>>())).unwrap();
        let (a, b) = (evaluate_dummy(&fwd, &data).unwrap(), evaluate_dummy(&rev, &data).unwrap());
        assert!((a.mape.unwrap() - b.mape.unwrap()).abs() < 1e-9);
    }

    struct Perfect(Dataset);

    impl Predictor for Perfect {
        fn predict(&self, features: &[f32]) -> Result<Vec<f32>, EvalError> {
            Ok(self.0.samples.iter().find(|s| s.features == features).unwrap().labels.clone())
        }
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let data = toy_dataset(8, 3, 1, 3, |f| f[0]);
        let report = evaluate_model(&Perfect(data.clone()), &data).unwrap();
        assert_eq!(report.overall.mape, Some(0.0));
        assert!(report.cells.iter().all(|c| c.mape == Some(0.0)));
    }
}
