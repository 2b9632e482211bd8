use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FeatureScaling, Surrogate};
use super::spec::ModelSpec;
use super::train::TrainingMeta;
use super::SurrogateError;
use crate::autodiff::Tensor;
use crate::metapop::BinaryAdjacency;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EGC1";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Adjacency the model was trained on, as a directed edge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphBinding {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl GraphBinding {
    pub fn from_adjacency(a: &BinaryAdjacency) -> Self {
        Self { n: a.n(), edges: a.edges() }
    }

    pub fn to_adjacency(&self) -> Result<BinaryAdjacency, SurrogateError> {
        if let Some(&(i, j)) = self.edges.iter().find(|(i, j)| *i >= self.n || *j >= self.n) {
            return Err(SurrogateError::Corrupt(format!("edge ({i}, {j}) outside a {}-node graph", self.n)));
        }
        Ok(BinaryAdjacency::from_edges(self.n, &self.edges))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    spec: ModelSpec,
    meta: TrainingMeta,
    #[serde(default)]
    scaling: Option<FeatureScaling>,
    graph: Option<GraphBinding>,
    shapes: Vec<Vec<usize>>,
}

/// A trained network with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub weights: Vec<Tensor<f32>>,
    pub scaling: Option<FeatureScaling>,
    pub graph: Option<BinaryAdjacency>,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn from_network(model: &Surrogate, meta: TrainingMeta) -> Self {
        Self {
            spec: model.spec().clone(),
            weights: model.params().iter().map(|p| (**p).clone()).collect(),
            scaling: model.scaling().cloned(),
            graph: model.graph().cloned(),
            meta,
        }
    }

    pub fn network(&self) -> Result<Surrogate, SurrogateError> {
        Surrogate::from_params(self.spec.clone(), self.graph.clone(), self.weights.clone())?
            .with_scaling(self.scaling.clone())
    }

    pub fn write(&self, mut out: impl Write) -> Result<(), SurrogateError> {
        let header = Header {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            spec: self.spec.clone(),
            meta: self.meta.clone(),
            scaling: self.scaling.clone(),
            graph: self.graph.as_ref().map(GraphBinding::from_adjacency),
            shapes: self.weights.iter().map(|w| w.shape().to_vec()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        for w in &self.weights {
            let mut buf = Vec::with_capacity(w.len() * 4);
            for v in w.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read(mut input: impl Read) -> Result<Self, SurrogateError> {
        let corrupt = |m: &str| SurrogateError::Corrupt(m.to_string());
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes")) as usize;
        let body = bytes.get(8..8 + len).ok_or_else(|| corrupt("truncated header"))?;
        let raw: serde_json::Value = serde_json::from_slice(body).map_err(|e| corrupt(&e.to_string()))?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("no schema version"))?;
        if version != CHECKPOINT_SCHEMA_VERSION as u64 {
            return Err(SurrogateError::VersionMismatch { expected: CHECKPOINT_SCHEMA_VERSION, found: version as u32 });
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| corrupt(&e.to_string()))?;
        let mut blob = &bytes[8 + len..];
        let mut weights = Vec::with_capacity(header.shapes.len());
        for shape in &header.shapes {
            let n: usize = shape.iter().product();
            if blob.len() < n * 4 {
                return Err(corrupt("truncated weights"));
            }
            let data = blob[..n * 4].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
            weights.push(Tensor::new(shape, data).map_err(|e| corrupt(&e.to_string()))?);
            blob = &blob[n * 4..];
        }
        if !blob.is_empty() {
            return Err(corrupt("trailing bytes after weights"));
        }
        let graph = header.graph.as_ref().map(GraphBinding::to_adjacency).transpose()?;
        let ckpt = Self { spec: header.spec, weights, scaling: header.scaling, graph, meta: header.meta };
        ckpt.network()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SurrogateError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SurrogateError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), SurrogateError> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, SurrogateError> {
    Checkpoint::load(path)
}
