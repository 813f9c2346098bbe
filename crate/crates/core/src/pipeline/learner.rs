use serde::{Deserialize, Serialize};

use super::grid::{Hyper, LearnerTag};
use crate::ann::{self, FeedForwardNet, TrainConfig};
use crate::error::{Error, Result};
use crate::learners::{gb_fit, rf_fit, svr_fit, BoostedTrees, RegressionForest, SupportVectorRegressor};
use crate::matrix::Matrix;

/// Affine map of the target onto [0, 1] fitted on a training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl TargetScale {
    pub fn fit(y: &[f64]) -> Result<Self> {
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::DegenerateScale { column: "trv".into() });
        }
        Ok(Self { min, max })
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// A fitted forecaster of any learner family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum Fitted {
    Rf(RegressionForest),
    Gb(BoostedTrees),
    /// Fitted on the target mapped through `scale`; predictions are mapped back.
    Svr { model: SupportVectorRegressor, scale: TargetScale },
    /// Same target convention as `Svr`.
    Ann { net: FeedForwardNet, scale: TargetScale },
}

impl Fitted {
    pub fn learner(&self) -> LearnerTag {
        match self {
            Fitted::Rf(_) => LearnerTag::Rf,
            Fitted::Gb(_) => LearnerTag::Gb,
            Fitted::Svr { .. } => LearnerTag::Svr,
            Fitted::Ann { .. } => LearnerTag::Ann,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let expected = match self {
            Fitted::Rf(m) => m.trees.first().map(|t| t.n_features),
            Fitted::Gb(m) => m.stages.first().map(|t| t.n_features),
            Fitted::Svr { model, .. } => Some(model.support.cols()).filter(|c| *c > 0),
            Fitted::Ann { net, .. } => Some(net.input_dim()),
        };
        if let Some(e) = expected {
            if e != x.cols() {
                return Err(Error::Dimension {
                    expected: e,
                    got: x.cols(),
                });
            }
        }
        Ok(match self {
            Fitted::Rf(m) => m.predict(x),
            Fitted::Gb(m) => m.predict(x),
            Fitted::Svr { model, scale } => model.predict(x).into_iter().map(|v| scale.inverse(v)).collect(),
            Fitted::Ann { net, scale } => net.predict(x)?.into_iter().map(|v| scale.inverse(v)).collect(),
        })
    }
}

/// Fits one grid cell. SVR and networks are fitted on the target mapped
/// through `scale`; the tree ensembles use it unscaled.
pub fn fit_learner(hyper: &Hyper, x: &Matrix, y: &[f64], scale: &TargetScale, seed: u64) -> Result<Fitted> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::Dimension {
            expected: x.rows(),
            got: y.len(),
        });
    }
    Ok(match hyper {
        Hyper::Rf(p) => Fitted::Rf(rf_fit(x, y, p, seed)?),
        Hyper::Gb(p) => Fitted::Gb(gb_fit(x, y, p)?),
        Hyper::Svr(p) => {
            let ys: Vec<f64> = y.iter().map(|v| scale.forward(*v)).collect();
            Fitted::Svr {
                model: svr_fit(x, &ys, p)?,
                scale: *scale,
            }
        }
        Hyper::Ann {
            learning_rate,
            l2,
            epochs,
        } => {
            let cfg = TrainConfig::new(*learning_rate, *l2, *epochs, seed);
            let ys: Vec<f64> = y.iter().map(|v| scale.forward(*v)).collect();
            Fitted::Ann {
                net: ann::fit(x, &ys, &cfg)?.net,
                scale: *scale,
            }
        }
    })
}
