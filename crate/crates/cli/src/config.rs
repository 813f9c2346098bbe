//! TOML run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use volstack_core::market_data::N_LAGS;
use volstack_core::pipeline::{DateWindow, GridSpec, ModelTag, Profile, RiskOptions, TrainSettings};
use volstack_core::resampling::ResampleMethod;
use volstack_core::SplitSpec;

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    /// Output subdirectory; letters, digits, `-`, `_` and `.` only.
    pub name: String,
    pub training: DateWindow,
    pub comparison: DateWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub non_overlapping: bool,
    #[serde(default = "default_n_sim")]
    pub n_sim: usize,
}

fn default_alpha() -> f64 {
    0.99
}
fn default_horizon() -> usize {
    10
}
fn default_n_sim() -> usize {
    5000
}
fn default_threads() -> usize {
    1
}
fn default_profile() -> Profile {
    Profile::Full
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            horizon: default_horizon(),
            non_overlapping: false,
            n_sim: default_n_sim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Price CSV (`date,close`).
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub split: SplitSpec,
    pub periods: Vec<PeriodConfig>,
    /// Defaults to every model.
    #[serde(default)]
    pub models: Option<Vec<String>>,
    /// Defaults to all five schemes with the profile's replicate count.
    #[serde(default)]
    pub methods: Option<Vec<ResampleMethod>>,
    /// Defaults to the profile grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub heston_paths: Option<usize>,
    #[serde(default)]
    pub risk: RiskConfig,
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub profile: Option<Profile>,
    pub out: Option<PathBuf>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.data.is_relative() {
            cfg.data = base.join(&cfg.data);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        if let Some(p) = o.profile {
            self.profile = p;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(bad(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.threads < 1 {
            return Err(bad("threads must be >= 1"));
        }
        self.split.validate().map_err(|e| bad(e.to_string()))?;
        if self.periods.is_empty() {
            return Err(bad("at least one [[periods]] entry is required"));
        }
        let mut names = BTreeSet::new();
        for p in &self.periods {
            let ok = !p.name.is_empty()
                && p.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && p.name != "."
                && p.name != "..";
            if !ok {
                return Err(bad(format!("invalid period name `{}`", p.name)));
            }
            if !names.insert(&p.name) {
                return Err(bad(format!("duplicate period name `{}`", p.name)));
            }
            for (label, w) in [("training", &p.training), ("comparison", &p.comparison)] {
                if w.end < w.start {
                    return Err(bad(format!("period {}: {label} window {w} ends before it starts", p.name)));
                }
            }
            if p.training.overlaps(&p.comparison) {
                return Err(bad(format!(
                    "period {}: training window {} overlaps comparison window {}",
                    p.name, p.training, p.comparison
                )));
            }
            if p.comparison.start < p.training.end {
                return Err(bad(format!(
                    "period {}: comparison window {} must follow training window {}",
                    p.name, p.comparison, p.training
                )));
            }
        }
        self.model_tags()?;
        let methods = self.effective_methods();
        let mut seen = BTreeSet::new();
        for m in &methods {
            m.validate().map_err(|e| bad(e.to_string()))?;
            if !seen.insert(m.tag()) {
                return Err(bad(format!("method {} listed twice", m.tag())));
            }
        }
        if methods.is_empty() {
            return Err(bad("at least one tuning method is required"));
        }
        self.effective_grid().validate(N_LAGS).map_err(|e| bad(e.to_string()))?;
        if self.heston_paths.is_some_and(|n| n < 1000) {
            return Err(bad("heston_paths must be >= 1000"));
        }
        let r = &self.risk;
        if !(r.alpha > 0.5 && r.alpha < 1.0) {
            return Err(bad(format!("risk.alpha must be in (0.5, 1), got {}", r.alpha)));
        }
        if r.horizon < 1 || r.n_sim < 1 {
            return Err(bad("risk.horizon and risk.n_sim must be >= 1"));
        }
        Ok(())
    }

    /// Models in canonical order.
    pub fn model_tags(&self) -> CliResult<Vec<ModelTag>> {
        let Some(names) = &self.models else {
            return Ok(ModelTag::ALL.to_vec());
        };
        let mut tags = BTreeSet::new();
        for n in names {
            tags.insert(ModelTag::parse(n).map_err(|e| bad(e.to_string()))?);
        }
        if !tags.contains(&ModelTag::Stacked) {
            return Err(bad("the model set must include S-ANN"));
        }
        Ok(tags.into_iter().collect())
    }

    pub fn effective_methods(&self) -> Vec<ResampleMethod> {
        self.methods
            .clone()
            .unwrap_or_else(|| ResampleMethod::all(self.profile.settings().replicates))
    }

    pub fn effective_grid(&self) -> GridSpec {
        self.grid
            .clone()
            .unwrap_or_else(|| self.profile.grid().with_settings(&self.profile.settings()))
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            grid: self.effective_grid(),
            methods: self.effective_methods(),
            seed: self.seed,
            heston_paths: self.heston_paths.unwrap_or(self.profile.settings().heston_paths),
        }
    }

    pub fn risk_options(&self) -> RiskOptions {
        RiskOptions {
            alpha: self.risk.alpha,
            horizon: self.risk.horizon,
            non_overlapping: self.risk.non_overlapping,
            n_sim: self.risk.n_sim,
            seed: self.seed,
        }
    }

    /// SHA-256 over every field that affects results; `out` and `threads` excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = 0;
        c.data = PathBuf::from(self.data.file_name().unwrap_or_default());
        let canonical = serde_json::json!({
            "config": c,
            "grid": self.effective_grid(),
            "methods": self.effective_methods(),
            "train": self.train_settings(),
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
version = 1
data = "prices.csv"
out = "run"
seed = 7

[[periods]]
name = "p1"
training = { start = "2000-01-03", end = "2003-12-31" }
comparison = { start = "2004-01-01", end = "2004-12-31" }
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.profile, Profile::Full);
        assert_eq!(c.risk, RiskConfig::default());
        assert_eq!(c.model_tags().unwrap(), ModelTag::ALL.to_vec());
        assert_eq!(c.effective_methods().len(), 5);
        assert_eq!(c.threads, 1);
    }

    #[test]
    fn overlap_rejected_with_names() {
        let t = BASE.replace("2004-01-01", "2003-06-01");
        let e = RunConfig::parse(&t).unwrap_err().to_string();
        assert!(e.contains("overlaps") && e.contains("2003-06-01..2004-12-31"), "{e}");
    }

    #[test]
    fn unknown_fields_and_models_rejected() {
        assert!(RunConfig::parse(&format!("{BASE}\nbogus = 1")).is_err());
        let t = BASE.replace("seed = 7", "seed = 7\nmodels = [\"ANN\", \"GARCH\"]");
        assert!(RunConfig::parse(&t).is_err());
        let t = BASE.replace("seed = 7", "seed = 7\nmodels = [\"ANN\"]");
        assert!(RunConfig::parse(&t).unwrap_err().to_string().contains("S-ANN"));
    }

    #[test]
    fn methods_parse_from_toml() {
        let t = BASE.replace(
            "seed = 7",
            "seed = 7\nmethods = [{ method = \"cbb\", block_len = 5 }, { method = \"mmse\" }]",
        );
        let c = RunConfig::parse(&t).unwrap();
        assert_eq!(
            c.effective_methods(),
            vec![
                ResampleMethod::Cbb {
                    block_len: Some(5),
                    replicates: 50
                },
                ResampleMethod::Mmse
            ]
        );
        let dup = BASE.replace("seed = 7", "seed = 7\nmethods = [{ method = \"sb\" }, { method = \"sb\" }]");
        assert!(RunConfig::parse(&dup).is_err());
    }

    #[test]
    fn hash_ignores_out_and_threads() {
        let a = RunConfig::parse(BASE).unwrap();
        let mut b = a.clone();
        b.apply(&Overrides {
            threads: Some(4),
            out: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(a.hash(), b.hash());
        b.apply(&Overrides {
            seed: Some(8),
            ..Default::default()
        });
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
