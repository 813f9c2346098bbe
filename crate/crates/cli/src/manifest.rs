//! Run manifest: what was run, with which settings, and what came out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volstack_core::pipeline::{RmseRow, TestRow};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "volstack-manifest";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub learner: String,
    pub method: String,
    pub hyper: String,
    pub oos_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub artifact: Option<String>,
    pub test_rmse: Option<f64>,
    pub chosen_method: Option<String>,
    pub hyper: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodManifest {
    pub tuning: Vec<ChoiceRow>,
    pub models: Vec<ModelRow>,
    pub rmse: Vec<RmseRow>,
    pub backtest: Vec<TestRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub toolkit_version: String,
    pub config_hash: String,
    pub data_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub periods: BTreeMap<String, PeriodManifest>,
    /// Wall-clock seconds of the last run of each command.
    pub timing: BTreeMap<String, f64>,
}

impl Manifest {
    fn fresh(cfg: &RunConfig, data_sha256: String) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: cfg.hash(),
            data_sha256,
            seed: cfg.seed,
            threads: cfg.threads,
            config: cfg.clone(),
            periods: BTreeMap::new(),
            timing: BTreeMap::new(),
        }
    }

    pub fn path(out: &Path) -> PathBuf {
        out.join(MANIFEST_FILE)
    }

    /// Existing manifest for this configuration, or a fresh one when the
    /// configuration or data changed.
    pub fn open(cfg: &RunConfig, data_sha256: &str) -> CliResult<Self> {
        let path = Self::path(&cfg.out);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
                if m.config_hash == cfg.hash() && m.data_sha256 == data_sha256 {
                    let mut m = m;
                    m.threads = cfg.threads;
                    m.config.out = cfg.out.clone();
                    return Ok(m);
                }
            }
        }
        Ok(Self::fresh(cfg, data_sha256.to_string()))
    }

    pub fn period(&mut self, name: &str) -> &mut PeriodManifest {
        self.periods.entry(name.to_string()).or_default()
    }

    pub fn save(&self, out: &Path) -> CliResult<()> {
        let path = Self::path(out);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}
