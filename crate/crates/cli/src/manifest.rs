use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gpiwp::{PriorConfig, SamplerConfig};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

/// One stored posterior draw archive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveEntry {
    /// Ordinal category `j`; absent for binary fits.
    pub category: Option<usize>,
    /// Archive stem relative to the run directory.
    pub stem: String,
    pub seed: u64,
    pub n_draws: usize,
    pub total_seconds: f64,
    /// Cumulative seconds per Gibbs step.
    pub step_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainEntry {
    pub chain: usize,
    pub seed: u64,
    pub archives: Vec<ArchiveEntry>,
}

/// Written by `fit` next to its archives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub data: String,
    pub ordinal: bool,
    pub categories: Option<u32>,
    pub seed: u64,
    pub threads: usize,
    pub sampler: SamplerConfig,
    pub priors: Vec<PriorConfig>,
    pub chains: Vec<ChainEntry>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn load(run: &Path) -> Result<Self> {
        let path = run.join(MANIFEST);
        gpiwp::io::read_json(&path).with_context(|| format!("reading {}", path.display()))
    }

    /// Archive stems of chain `chain` (1-based), in category order.
    pub fn stems(&self, run: &Path, chain: usize) -> Result<Vec<PathBuf>> {
        let Some(c) = self.chains.iter().find(|c| c.chain == chain) else {
            bail!("run has {} chain(s); chain {chain} does not exist", self.chains.len());
        };
        Ok(c.archives.iter().map(|a| run.join(&a.stem)).collect())
    }
}
