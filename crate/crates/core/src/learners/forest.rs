use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_rows, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_TREES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// Predictors sampled at each split.
    pub n_vars: usize,
    /// Minimum training rows per leaf.
    pub min_leaf_obs: usize,
    pub n_trees: usize,
    /// Draw an i.i.d. bootstrap of rows for each tree.
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    pub seed: u64,
}

pub fn rf_fit(x: &Matrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<RegressionForest> {
    if params.n_vars < 1 || params.n_vars > x.cols() {
        return Err(Error::InvalidParameter(format!(
            "forest n_vars must be in [1, {}], got {}",
            x.cols(),
            params.n_vars
        )));
    }
    if params.min_leaf_obs < 1 || params.n_trees < 1 {
        return Err(Error::InvalidParameter("forest needs min_leaf_obs >= 1 and n_trees >= 1".into()));
    }
    let n = x.rows();
    let tree_params = TreeParams {
        min_leaf_obs: params.min_leaf_obs,
        max_depth: None,
        n_vars: Some(params.n_vars),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::derive(seed, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_rows(x, y, &rows, &tree_params, Some(&mut r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressionForest {
        trees,
        params: *params,
        seed,
    })
}

impl RegressionForest {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
            })
            .collect()
    }
}

pub fn rf_predict(model: &RegressionForest, x: &Matrix) -> Vec<f64> {
    model.predict(x)
}
