use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_STAGE_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub stage_depth: usize,
}

/// Least-squares gradient boosting with shallow regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub init_value: f64,
    pub learning_rate: f64,
    pub stages: Vec<RegressionTree>,
    /// Training MSE after each stage; entry 0 is the constant model.
    pub train_mse: Vec<f64>,
}

pub fn gb_fit(x: &Matrix, y: &[f64], params: &BoostParams) -> Result<BoostedTrees> {
    if params.n_stages < 1 {
        return Err(Error::InvalidParameter("boosting needs at least one stage".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be in (0, 1], got {}",
            params.learning_rate
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("cannot boost on empty data".into()));
    }
    let n = y.len() as f64;
    let init_value = y.iter().sum::<f64>() / n;
    let mut fitted = vec![init_value; y.len()];
    let mut residual: Vec<f64> = y.iter().map(|v| v - init_value).collect();
    let tree_params = TreeParams {
        min_leaf_obs: 1,
        max_depth: Some(params.stage_depth),
        n_vars: None,
    };
    let mse = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>() / n;
    let mut train_mse = vec![mse(&residual)];
    let mut stages = Vec::with_capacity(params.n_stages);
    for stage in 0..params.n_stages {
        if residual.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numerical(format!("non-finite residual at boosting stage {stage}")));
        }
        let tree = fit_tree(x, &residual, &tree_params, None)?;
        for i in 0..y.len() {
            fitted[i] += params.learning_rate * tree.predict_row(x.row(i));
            residual[i] = y[i] - fitted[i];
        }
        train_mse.push(mse(&residual));
        stages.push(tree);
    }
    Ok(BoostedTrees {
        init_value,
        learning_rate: params.learning_rate,
        stages,
        train_mse,
    })
}

impl BoostedTrees {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.stages
                    .iter()
                    .fold(self.init_value, |acc, t| acc + self.learning_rate * t.predict_row(row))
            })
            .collect()
    }

    /// Predictions using only the first `k` stages, for each requested `k`.
    pub fn predict_staged(&self, x: &Matrix, checkpoints: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(x.rows()); checkpoints.len()];
        for i in 0..x.rows() {
            let row = x.row(i);
            let mut acc = self.init_value;
            let mut done = 0;
            let mut order: Vec<usize> = (0..checkpoints.len()).collect();
            order.sort_by_key(|&c| checkpoints[c]);
            for c in order {
                let k = checkpoints[c].min(self.stages.len());
                for t in &self.stages[done..k.max(done)] {
                    acc += self.learning_rate * t.predict_row(row);
                }
                done = done.max(k);
                out[c].push(acc);
            }
        }
        out
    }
}

pub fn gb_predict(model: &BoostedTrees, x: &Matrix) -> Vec<f64> {
    model.predict(x)
}
