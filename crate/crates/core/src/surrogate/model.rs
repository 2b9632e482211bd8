use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Activation, LayerKind, ModelSpec};
use super::SurrogateError;
use crate::autodiff::{glorot_uniform, Scalar, Tape, Tensor, Var};
use crate::epi::state::COMPARTMENTS;
use crate::metapop::{gcn_normalize, normalize_adjacency, BinaryAdjacency};
use crate::sparse::CsrMatrix;

/// Per-column standardization `(x - mean) * scale` of input rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

impl FeatureScaling {
    /// Column statistics of `rows`, each `width` wide; constant columns keep scale 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f32]>, width: usize) -> Self {
        let (mut sum, mut sq, mut n) = (vec![0.0f64; width], vec![0.0f64; width], 0usize);
        for row in rows {
            for (c, v) in row.iter().enumerate() {
                sum[c] += *v as f64;
                sq[c] += (*v as f64).powi(2);
            }
            n += 1;
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd > 1e-6 { (1.0 / sd) as f32 } else { 1.0 }
            })
            .collect();
        Self { mean: mean.into_iter().map(|m| m as f32).collect(), scale }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &mut [f32]) {
        for row in rows.chunks_exact_mut(self.width()) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
    }
}

/// A surrogate network with its graph and weights.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    spec: ModelSpec,
    params: Vec<Arc<Tensor<T>>>,
    scaling: Option<FeatureScaling>,
    graph: Option<BinaryAdjacency>,
    arma_adj: Option<Arc<CsrMatrix<T>>>,
    gcn_adj: Option<Arc<CsrMatrix<T>>>,
}

/// The `f32` network used for training and inference.
pub type Surrogate = Network<f32>;

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn init(spec: ModelSpec, graph: Option<BinaryAdjacency>, seed: u64) -> Result<Self, SurrogateError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .param_shapes()
            .iter()
            .map(|s| if s.len() == 2 { glorot_uniform(s[0], s[1], &mut rng) } else { Tensor::zeros(s) })
            .collect();
        Self::from_params(spec, graph, params)
    }

    pub fn zeros(spec: ModelSpec, graph: Option<BinaryAdjacency>) -> Result<Self, SurrogateError> {
        let params = spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
        Self::from_params(spec, graph, params)
    }

    pub fn from_params(
        spec: ModelSpec,
        graph: Option<BinaryAdjacency>,
        params: Vec<Tensor<T>>,
    ) -> Result<Self, SurrogateError> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(SurrogateError::InvalidSpec(format!("expected {} weights, got {}", shapes.len(), params.len())));
        }
        for (i, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if p.shape() != s.as_slice() {
                return Err(SurrogateError::InvalidSpec(format!("weight {i} has shape {:?}, expected {s:?}", p.shape())));
            }
        }
        if let Some(g) = &graph {
            if g.n() != spec.nodes {
                return Err(SurrogateError::GraphMismatch(format!("graph has {} nodes, model {}", g.n(), spec.nodes)));
            }
        } else if spec.uses_graph() {
            return Err(SurrogateError::GraphMismatch("graph layers need an adjacency".into()));
        }
        let uses = |k: LayerKind| spec.layers.iter().any(|l| l.kind == k);
        let arma_adj = match &graph {
            Some(g) if uses(LayerKind::ArmaConv) => Some(Arc::new(normalize_adjacency(g).cast())),
            _ => None,
        };
        let gcn_adj = match &graph {
            Some(g) if uses(LayerKind::GcnConv) => Some(Arc::new(gcn_normalize(g).cast())),
            _ => None,
        };
        Ok(Self { spec, params: params.into_iter().map(Arc::new).collect(), scaling: None, graph, arma_adj, gcn_adj })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn scaling(&self) -> Option<&FeatureScaling> {
        self.scaling.as_ref()
    }

    pub fn with_scaling(mut self, scaling: Option<FeatureScaling>) -> Result<Self, SurrogateError> {
        if let Some(s) = &scaling {
            if s.width() != self.spec.input_width || s.scale.len() != s.width() {
                return Err(SurrogateError::Encoding { expected: self.spec.input_width, found: s.width() });
            }
        }
        self.scaling = scaling;
        Ok(self)
    }

    /// Standardizes raw feature rows in place.
    pub fn scale_features(&self, rows: &mut [f32]) {
        if let Some(s) = &self.scaling {
            s.apply(rows);
        }
    }

    pub fn graph(&self) -> Option<&BinaryAdjacency> {
        self.graph.as_ref()
    }

    pub fn params(&self) -> &[Arc<Tensor<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Arc<Tensor<T>>] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Arc<Tensor<T>>>) {
        assert_eq!(params.len(), self.params.len());
        self.params = params;
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let params = self.params.iter().map(|p| p.cast()).collect();
        Network::from_params(self.spec.clone(), self.graph.clone(), params)
            .and_then(|n| n.with_scaling(self.scaling.clone()))
            .expect("validated network")
    }

    /// Records the forward pass of `x` (`batch * nodes` rows) with the given parameter handles.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, params: &[Var]) -> Result<Var, SurrogateError> {
        let mut h = x;
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter count checked by ModelSpec::validate");
        for layer in &self.spec.layers {
            h = match layer.kind {
                LayerKind::Dense => {
                    let (w, b) = (next(), next());
                    let z = tape.matmul(h, w)?;
                    let z = tape.add_bias(z, b)?;
                    activate(tape, z, layer.activation)
                }
                LayerKind::GcnConv => {
                    let (w, b) = (next(), next());
                    let adj = self.gcn_adj.clone().expect("gcn adjacency");
                    let z = tape.matmul(h, w)?;
                    let z = tape.sp_matmul(adj, z)?;
                    let z = tape.add_bias(z, b)?;
                    activate(tape, z, layer.activation)
                }
                LayerKind::ArmaConv => {
                    let adj = self.arma_adj.clone().expect("arma adjacency");
                    let mut pooled: Option<Var> = None;
                    for _ in 0..layer.stacks {
                        let (w_in, v, b) = (next(), next(), next());
                        let w_rec = (layer.iterations > 1).then(&mut next);
                        let skip = tape.matmul(h, v)?;
                        let mut state = h;
                        for t in 0..layer.iterations {
                            let w = if t == 0 { w_in } else { w_rec.expect("recurrent weight") };
                            let z = tape.matmul(state, w)?;
                            let z = tape.sp_matmul(adj.clone(), z)?;
                            let z = tape.add(z, skip)?;
                            let z = tape.add_bias(z, b)?;
                            state = activate(tape, z, layer.activation);
                        }
                        pooled = Some(match pooled {
                            Some(acc) => tape.add(acc, state)?,
                            None => state,
                        });
                    }
                    let pooled = pooled.expect("at least one stack");
                    if layer.stacks > 1 { tape.scale(pooled, T::of(1.0 / layer.stacks as f64)) } else { pooled }
                }
            };
        }
        Ok(h)
    }

    /// Forward pass on stacked, already standardized rows without gradients.
    pub fn forward_rows(&self, rows: Tensor<T>) -> Result<Tensor<T>, SurrogateError> {
        if rows.shape().len() != 2 || rows.cols() != self.spec.input_width || rows.rows() % self.spec.nodes != 0 {
            return Err(SurrogateError::Encoding {
                expected: self.spec.input_width,
                found: if rows.shape().len() == 2 { rows.cols() } else { rows.len() },
            });
        }
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.input(p.clone())).collect();
        let x = tape.constant(rows);
        let y = self.forward(&mut tape, x, &params)?;
        Ok(tape.take_value(y))
    }

    /// Original-scale predictions, laid out like dataset labels.
    pub fn predict(&self, features: &[f32]) -> Result<Vec<f32>, SurrogateError> {
        Ok(self.predict_batch(&[features])?.pop().expect("one sample"))
    }

    pub fn predict_batch(&self, features: &[&[f32]]) -> Result<Vec<Vec<f32>>, SurrogateError> {
        let len = self.spec.feature_len();
        let mut raw = Vec::with_capacity(features.len() * len);
        for f in features {
            if f.len() != len {
                return Err(SurrogateError::Encoding { expected: len, found: f.len() });
            }
            raw.extend_from_slice(f);
        }
        self.scale_features(&mut raw);
        let data = raw.into_iter().map(|v| T::of(v as f64)).collect();
        let rows = Tensor::new(&[features.len() * self.spec.nodes, self.spec.input_width], data)?;
        let out = self.forward_rows(rows)?;
        let per_sample = self.spec.label_len();
        Ok(out
            .data()
            .chunks_exact(per_sample)
            .map(|block| {
                let counts: Vec<f32> = block.iter().map(|v| (v.as_f64().exp_m1().max(0.0)) as f32).collect();
                rows_to_labels(&counts, self.spec.nodes, self.spec.horizon)
            })
            .collect())
    }
}

fn activate<T: Scalar>(tape: &mut Tape<T>, v: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(v),
        Activation::Elu => tape.elu(v),
        Activation::Linear => v,
    }
}

/// `[day][node][48]` to `[node][day][48]`.
pub fn labels_to_rows<V: Copy>(labels: &[V], nodes: usize, horizon: usize) -> Vec<V> {
    assert_eq!(labels.len(), nodes * horizon * COMPARTMENTS);
    let mut out = Vec::with_capacity(labels.len());
    for n in 0..nodes {
        for d in 0..horizon {
            let at = (d * nodes + n) * COMPARTMENTS;
            out.extend_from_slice(&labels[at..at + COMPARTMENTS]);
        }
    }
    out
}

/// `[node][day][48]` to `[day][node][48]`.
pub fn rows_to_labels<V: Copy>(rows: &[V], nodes: usize, horizon: usize) -> Vec<V> {
    assert_eq!(rows.len(), nodes * horizon * COMPARTMENTS);
    let mut out = Vec::with_capacity(rows.len());
    for d in 0..horizon {
        for n in 0..nodes {
            let at = (n * horizon + d) * COMPARTMENTS;
            out.extend_from_slice(&rows[at..at + COMPARTMENTS]);
        }
    }
    out
}
