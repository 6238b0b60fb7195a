use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Record of one run: the resolved settings and the files it produced.
/// Contains nothing that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: RunConfig,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(config: RunConfig, outputs: Vec<PathBuf>, summary: serde_json::Value) -> Self {
        Manifest {
            tool: format!("pvae-policy {}", env!("CARGO_PKG_VERSION")),
            config,
            outputs,
            summary,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        pvae_policy::io::write_json_atomic(path, self)
            .with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        pvae_policy::io::read_json(path).with_context(|| format!("reading manifest {}", path.display()))
    }
}
