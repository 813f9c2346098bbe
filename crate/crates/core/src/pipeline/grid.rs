use serde::{Deserialize, Serialize};

use crate::ann::DEFAULT_EPOCHS;
use crate::error::{Error, Result};
use crate::learners::boosting::DEFAULT_STAGE_DEPTH;
use crate::learners::forest::DEFAULT_TREES;
use crate::learners::svr::DEFAULT_C;
use crate::learners::{BoostParams, ForestParams, SvrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerTag {
    Rf,
    Gb,
    Svr,
    Ann,
}

impl LearnerTag {
    pub const FIRST_LEVEL: [LearnerTag; 3] = [LearnerTag::Rf, LearnerTag::Gb, LearnerTag::Svr];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerTag::Rf => "RF",
            LearnerTag::Gb => "GB",
            LearnerTag::Svr => "SVR",
            LearnerTag::Ann => "ANN",
        }
    }

    pub(crate) fn id(self) -> u64 {
        self as u64 + 1
    }
}

impl std::fmt::Display for LearnerTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum Hyper {
    Rf(ForestParams),
    Gb(BoostParams),
    Svr(SvrParams),
    Ann { learning_rate: f64, l2: f64, epochs: usize },
}

impl Hyper {
    pub fn learner(&self) -> LearnerTag {
        match self {
            Hyper::Rf(_) => LearnerTag::Rf,
            Hyper::Gb(_) => LearnerTag::Gb,
            Hyper::Svr(_) => LearnerTag::Svr,
            Hyper::Ann { .. } => LearnerTag::Ann,
        }
    }

    /// Compact `name=value` rendering for reports.
    pub fn describe(&self) -> String {
        match self {
            Hyper::Rf(p) => format!("N={} Obs={}", p.n_vars, p.min_leaf_obs),
            Hyper::Gb(p) => format!("B={} lambda={}", p.n_stages, p.learning_rate),
            Hyper::Svr(p) => format!("gamma={} epsilon={}", p.gamma, p.epsilon),
            Hyper::Ann { learning_rate, l2, .. } => format!("lambda={learning_rate} phi={l2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfGrid {
    pub n_vars: Vec<usize>,
    pub min_leaf_obs: Vec<usize>,
    pub n_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbGrid {
    pub n_stages: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub stage_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrGrid {
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    #[serde(default = "default_c")]
    pub c: Vec<f64>,
}

fn default_c() -> Vec<f64> {
    vec![DEFAULT_C]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnGrid {
    pub learning_rate: Vec<f64>,
    pub l2: Vec<f64>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rf: RfGrid,
    pub gb: GbGrid,
    pub svr: SvrGrid,
    pub ann: AnnGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smoke,
    Full,
}

/// Size knobs that differ between the smoke and full profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSettings {
    pub epochs: usize,
    pub heston_paths: usize,
    pub replicates: usize,
    pub n_trees: usize,
}

impl Profile {
    pub fn settings(self) -> ProfileSettings {
        match self {
            Profile::Smoke => ProfileSettings {
                epochs: 200,
                heston_paths: 2000,
                replicates: 10,
                n_trees: 50,
            },
            Profile::Full => ProfileSettings {
                epochs: DEFAULT_EPOCHS,
                heston_paths: crate::heston::DEFAULT_PATHS,
                replicates: crate::resampling::DEFAULT_REPLICATES,
                n_trees: DEFAULT_TREES,
            },
        }
    }

    pub fn grid(self) -> GridSpec {
        match self {
            Profile::Full => GridSpec::default(),
            Profile::Smoke => GridSpec {
                rf: RfGrid {
                    n_vars: vec![5, 10],
                    min_leaf_obs: vec![10, 25],
                    n_trees: 50,
                },
                gb: GbGrid {
                    n_stages: vec![100, 300],
                    learning_rate: vec![0.01],
                    stage_depth: DEFAULT_STAGE_DEPTH,
                },
                svr: SvrGrid {
                    gamma: vec![4e-4, 1e-3],
                    epsilon: vec![0.1, 0.2],
                    c: vec![DEFAULT_C],
                },
                ann: AnnGrid {
                    learning_rate: vec![0.01, 0.05],
                    l2: vec![0.0],
                    epochs: 200,
                },
            },
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rf: RfGrid {
                n_vars: vec![1, 5, 10, 20, 30],
                min_leaf_obs: vec![10, 25, 50, 100, 175],
                n_trees: DEFAULT_TREES,
            },
            gb: GbGrid {
                n_stages: vec![500, 1000, 2000, 4000],
                learning_rate: vec![0.001, 0.003, 0.01],
                stage_depth: DEFAULT_STAGE_DEPTH,
            },
            svr: SvrGrid {
                gamma: vec![1e-4, 4e-4, 1e-3],
                epsilon: vec![0.1, 0.2, 0.45, 0.55],
                c: vec![DEFAULT_C],
            },
            ann: AnnGrid {
                learning_rate: vec![0.003, 0.006, 0.01, 0.05, 0.1],
                l2: vec![0.0, 0.01, 0.02],
                epochs: DEFAULT_EPOCHS,
            },
        }
    }
}

impl GridSpec {
    /// Cells in canonical order (outer loop over the first listed parameter).
    pub fn cells(&self, learner: LearnerTag) -> Vec<Hyper> {
        let mut out = Vec::new();
        match learner {
            LearnerTag::Rf => {
                for &n_vars in &self.rf.n_vars {
                    for &min_leaf_obs in &self.rf.min_leaf_obs {
                        out.push(Hyper::Rf(ForestParams {
                            n_vars,
                            min_leaf_obs,
                            n_trees: self.rf.n_trees,
                            bootstrap: true,
                        }));
                    }
                }
            }
            LearnerTag::Gb => {
                for &n_stages in &self.gb.n_stages {
                    for &learning_rate in &self.gb.learning_rate {
                        out.push(Hyper::Gb(BoostParams {
                            n_stages,
                            learning_rate,
                            stage_depth: self.gb.stage_depth,
                        }));
                    }
                }
            }
            LearnerTag::Svr => {
                for &gamma in &self.svr.gamma {
                    for &epsilon in &self.svr.epsilon {
                        for &c in &self.svr.c {
                            out.push(Hyper::Svr(SvrParams::new(gamma, epsilon, c)));
                        }
                    }
                }
            }
            LearnerTag::Ann => {
                for &learning_rate in &self.ann.learning_rate {
                    for &l2 in &self.ann.l2 {
                        out.push(Hyper::Ann {
                            learning_rate,
                            l2,
                            epochs: self.ann.epochs,
                        });
                    }
                }
            }
        }
        out
    }

    /// Rejects empty grids and out-of-range values. `n_features` bounds the RF
    /// split-variable count.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let g = self;
        if [
            g.rf.n_vars.len(),
            g.rf.min_leaf_obs.len(),
            g.gb.n_stages.len(),
            g.gb.learning_rate.len(),
            g.svr.gamma.len(),
            g.svr.epsilon.len(),
            g.svr.c.len(),
            g.ann.learning_rate.len(),
            g.ann.l2.len(),
        ]
        .contains(&0)
        {
            return bad("every grid needs at least one value".into());
        }
        if g.rf.n_vars.iter().any(|&v| v < 1 || v > n_features) {
            return bad(format!("RF N must lie in [1, {n_features}]"));
        }
        if g.rf.min_leaf_obs.contains(&0) || g.rf.n_trees < 1 {
            return bad("RF Obs and tree count must be >= 1".into());
        }
        if g.gb.n_stages.contains(&0) || g.gb.stage_depth < 1 {
            return bad("GB needs B >= 1 and stage depth >= 1".into());
        }
        if g.gb.learning_rate.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return bad("GB learning rate must lie in (0, 1]".into());
        }
        if g.svr.gamma.iter().any(|v| !(*v > 0.0))
            || g.svr.epsilon.iter().any(|v| !(*v >= 0.0))
            || g.svr.c.iter().any(|v| !(*v > 0.0))
        {
            return bad("SVR needs gamma > 0, epsilon >= 0, C > 0".into());
        }
        if g.ann.learning_rate.iter().any(|v| !(*v > 0.0)) || g.ann.l2.iter().any(|v| !(*v >= 0.0)) || g.ann.epochs < 1
        {
            return bad("ANN needs learning rate > 0, L2 >= 0, epochs >= 1".into());
        }
        Ok(())
    }

    /// Copy with the profile's tree count and epoch count applied.
    pub fn with_settings(mut self, s: &ProfileSettings) -> Self {
        self.rf.n_trees = s.n_trees;
        self.ann.epochs = s.epochs;
        self
    }
}
