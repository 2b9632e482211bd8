use std::path::{Path, PathBuf};

use epigraph::scenario::GraphSpec;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Service settings read from TOML, then overridden by `EPIGRAPH_*` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Checkpoint loaded at startup.
    pub checkpoint: Option<PathBuf>,
    /// Graph JSON as written by `epigraph graph`; the synthetic graph is used when absent.
    pub graph: Option<PathBuf>,
    pub synthetic_graph: GraphSpec,
    /// Model configuration JSON; built-in parameters when absent.
    pub model: Option<PathBuf>,
    /// Concurrent mechanistic runs; 0 means one per logical core.
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint: None,
            graph: None,
            synthetic_graph: GraphSpec::default(),
            model: None,
            workers: 0,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `EPIGRAPH_HOST`, `EPIGRAPH_PORT`, `EPIGRAPH_CHECKPOINT`, `EPIGRAPH_GRAPH` and `EPIGRAPH_WORKERS`.
    pub fn with_env(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        if let Some(v) = var("EPIGRAPH_HOST") {
            self.host = v;
        }
        if let Some(v) = var("EPIGRAPH_PORT") {
            self.port = v.parse().map_err(|_| ServiceError::Config(format!("EPIGRAPH_PORT: invalid port {v:?}")))?;
        }
        if let Some(v) = var("EPIGRAPH_CHECKPOINT") {
            self.checkpoint = Some(v.into());
        }
        if let Some(v) = var("EPIGRAPH_GRAPH") {
            self.graph = Some(v.into());
        }
        if let Some(v) = var("EPIGRAPH_WORKERS") {
            self.workers = v.parse().map_err(|_| ServiceError::Config(format!("EPIGRAPH_WORKERS: invalid count {v:?}")))?;
        }
        Ok(self)
    }

    pub fn with_process_env(self) -> Result<Self, ServiceError> {
        self.with_env(|k| std::env::var(k).ok())
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}
