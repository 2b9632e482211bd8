use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use epigraph::epi::io::ModelConfig;
use epigraph::metapop::MetapopGraph;
use epigraph::surrogate::{Checkpoint, Surrogate};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::ServiceError;

/// A checkpoint validated against the served graph.
pub struct LoadedModel {
    pub path: PathBuf,
    pub checkpoint: Checkpoint,
    pub network: Surrogate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub path: PathBuf,
    pub horizon: usize,
    pub nodes: usize,
    pub param_count: usize,
    pub spec: epigraph::surrogate::ModelSpec,
    pub meta: epigraph::surrogate::TrainingMeta,
}

impl LoadedModel {
    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            path: self.path.clone(),
            horizon: self.checkpoint.spec.horizon,
            nodes: self.checkpoint.spec.nodes,
            param_count: self.checkpoint.weights.iter().map(|w| w.len()).sum(),
            spec: self.checkpoint.spec.clone(),
            meta: self.checkpoint.meta.clone(),
        }
    }
}

pub struct AppState {
    pub graph: Arc<MetapopGraph>,
    pub graph_id: String,
    pub model_config: Arc<ModelConfig>,
    model: RwLock<Option<Arc<LoadedModel>>>,
    pub workers: Arc<Semaphore>,
}

/// Content hash of the node count and adjacency edges.
pub fn graph_id(graph: &MetapopGraph) -> String {
    let mut h = Sha256::new();
    h.update((graph.n() as u64).to_le_bytes());
    for (i, j) in graph.adjacency().edges() {
        h.update((i as u64).to_le_bytes());
        h.update((j as u64).to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl AppState {
    pub fn new(graph: MetapopGraph, model_config: ModelConfig, workers: usize) -> Self {
        Self {
            graph_id: graph_id(&graph),
            graph: Arc::new(graph),
            model_config: Arc::new(model_config),
            model: RwLock::new(None),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    /// Builds the graph and model configuration and loads the startup checkpoint.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let graph = match &config.graph {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?
            }
            None => config.synthetic_graph.build().map_err(|e| ServiceError::Config(e.to_string()))?,
        };
        let model_config = match &config.model {
            Some(path) => ModelConfig::load(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?,
            None => ModelConfig::default(),
        };
        let state = Self::new(graph, model_config, config.worker_count());
        if let Some(path) = &config.checkpoint {
            state.load_model(path).map_err(|e| ServiceError::Config(format!("{}: {}", path.display(), e.body.message)))?;
        }
        Ok(state)
    }

    pub fn model(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().expect("model lock").clone()
    }

    /// Reads a checkpoint and swaps it in if it was trained on the served graph.
    pub fn load_model(&self, path: &Path) -> Result<Arc<LoadedModel>, ApiError> {
        let checkpoint = Checkpoint::load(path).map_err(|e| ApiError::invalid(Some("path".into()), e.to_string()))?;
        if !checkpoint.spec.spatial {
            return Err(ApiError::conflict("model_mismatch", "checkpoint is a single-region model; the service needs a spatial one"));
        }
        if checkpoint.spec.nodes != self.graph.n() {
            return Err(ApiError::conflict(
                "graph_mismatch",
                format!("checkpoint has {} nodes, the served graph has {}", checkpoint.spec.nodes, self.graph.n()),
            ));
        }
        if checkpoint.graph.as_ref() != Some(self.graph.adjacency()) {
            return Err(ApiError::conflict("graph_mismatch", "checkpoint adjacency differs from the served graph"));
        }
        let network = checkpoint.network().map_err(|e| ApiError::invalid(Some("path".into()), e.to_string()))?;
        let loaded = Arc::new(LoadedModel { path: path.to_path_buf(), checkpoint, network });
        *self.model.write().expect("model lock") = Some(loaded.clone());
        tracing::info!(path = %path.display(), horizon = loaded.checkpoint.spec.horizon, "checkpoint loaded");
        Ok(loaded)
    }
}
