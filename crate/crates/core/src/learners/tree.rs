use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        /// Training rows (with multiplicity) that reached this leaf.
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_leaf_obs: usize,
    /// `None` grows until the leaf-size constraint stops it.
    pub max_depth: Option<usize>,
    /// Candidate predictors drawn afresh at each split; `None` uses all.
    pub n_vars: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_leaf_obs: 1,
            max_depth: None,
            n_vars: None,
        }
    }
}

/// CART regression tree grown by greedy variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub params: TreeParams,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, n } => Some((*value, *n)),
            _ => None,
        })
    }
}

pub fn fit_tree(x: &Matrix, y: &[f64], params: &TreeParams, rng: Option<&mut Rng>) -> Result<RegressionTree> {
    let rows: Vec<usize> = (0..x.rows()).collect();
    fit_tree_rows(x, y, &rows, params, rng)
}

/// Fits on the given rows of `x` (repeats allowed, as in a bootstrap sample).
pub fn fit_tree_rows(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    mut rng: Option<&mut Rng>,
) -> Result<RegressionTree> {
    if rows.is_empty() || x.cols() == 0 {
        return Err(Error::InsufficientData("cannot fit a tree on empty data".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if params.min_leaf_obs < 1 {
        return Err(Error::InvalidParameter("min_leaf_obs must be >= 1".into()));
    }
    if let Some(m) = params.n_vars {
        if m < 1 || m > x.cols() {
            return Err(Error::InvalidParameter(format!(
                "n_vars must be in [1, {}], got {m}",
                x.cols()
            )));
        }
        if m < x.cols() && rng.is_none() {
            return Err(Error::InvalidParameter("feature subsampling needs a generator".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite target in tree fit".into()));
    }

    let mut nodes = Vec::new();
    // (node slot, rows, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
    nodes.push(Node::Leaf { value: 0.0, n: 0 });
    let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(rows.len());

    while let Some((slot, idx, depth)) = stack.pop() {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| y[i]).sum();
        let mean = sum / n as f64;
        let sse: f64 = idx.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum();

        let can_split = n >= 2 * params.min_leaf_obs
            && params.max_depth.is_none_or(|d| depth < d)
            && sse > 0.0;
        let split = if can_split {
            let features: Vec<usize> = match (params.n_vars, rng.as_deref_mut()) {
                (Some(m), Some(r)) if m < x.cols() => {
                    let mut f = index::sample(r, x.cols(), m).into_vec();
                    f.sort_unstable();
                    f
                }
                _ => (0..x.cols()).collect(),
            };
            best_split(x, y, &idx, &features, params.min_leaf_obs, sum, &mut scratch)
                .filter(|s| s.gain > 1e-12 * sse)
        } else {
            None
        };

        match split {
            None => nodes[slot] = Node::Leaf { value: mean, n },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| x.get(i, s.feature) <= s.threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, n: 0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, n: 0 });
                nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }

    Ok(RegressionTree {
        nodes,
        n_features: x.cols(),
        params: *params,
    })
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best variance-reduction split; ties keep the lowest feature, then the lowest threshold.
fn best_split(
    x: &Matrix,
    y: &[f64],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
    total: f64,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<Split> {
    let n = idx.len();
    let base = total * total / n as f64;
    let mut best: Option<Split> = None;
    for &f in features {
        scratch.clear();
        scratch.extend(idx.iter().map(|&i| (x.get(i, f), y[i])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += scratch[k].1;
            let n_left = k + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            let (lo, hi) = (scratch[k].0, scratch[k + 1].0);
            if lo >= hi {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / (n - n_left) as f64
                - base;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}
