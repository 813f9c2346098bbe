use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SvrParams {
    pub fn new(gamma: f64, epsilon: f64, c: f64) -> Self {
        Self {
            gamma,
            epsilon,
            c,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// ε-insensitive support vector regression with an RBF kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportVectorRegressor {
    pub support: Matrix,
    /// `alpha - alpha*` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub params: SvrParams,
    /// Minimised dual objective `½aᵀQa + pᵀa` over the 2n stacked variables.
    pub objective: f64,
    pub iterations: usize,
}

pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    let d: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d).exp()
}

pub fn svr_fit(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<SupportVectorRegressor> {
    svr_fit_weighted(x, y, &vec![1.0; y.len()], params)
}

/// As [`svr_fit`], with the box of row `i` scaled to `c * weight[i]`.
pub fn svr_fit_weighted(
    x: &Matrix,
    y: &[f64],
    weight: &[f64],
    params: &SvrParams,
) -> Result<SupportVectorRegressor> {
    let SvrParams {
        gamma,
        epsilon,
        c,
        tol,
        max_iter,
    } = *params;
    if !(gamma > 0.0 && epsilon >= 0.0 && c > 0.0 && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SVR needs gamma > 0, epsilon >= 0, C > 0; got gamma={gamma}, epsilon={epsilon}, C={c}"
        )));
    }
    let l = y.len();
    if l == 0 {
        return Err(Error::InsufficientData("cannot fit SVR on empty data".into()));
    }
    if x.rows() != l || weight.len() != l {
        return Err(Error::Dimension {
            expected: l,
            got: x.rows().min(weight.len()),
        });
    }
    if y.iter().chain(x.as_slice()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite SVR input".into()));
    }

    let mut k = vec![0.0; l * l];
    for i in 0..l {
        k[i * l + i] = 1.0;
        for j in 0..i {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[i * l + j] = v;
            k[j * l + i] = v;
        }
    }

    // Stacked variables: t < l carries alpha (sign +1), t >= l carries alpha* (sign -1).
    let n = 2 * l;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let upper: Vec<f64> = (0..n).map(|t| c * weight[t % l]).collect();
    let p: Vec<f64> = (0..n)
        .map(|t| if t < l { epsilon - y[t] } else { epsilon + y[t - l] })
        .collect();
    let q = |i: usize, j: usize| sign(i) * sign(j) * k[(i % l) * l + j % l];
    let mut a = vec![0.0; n];
    let mut g = p.clone();

    let mut iter = 0;
    let gap = loop {
        // WSS2 working-set selection.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let s = sign(t);
            let up = if s > 0.0 { a[t] < upper[t] } else { a[t] > 0.0 };
            if up && -s * g[t] >= gmax {
                gmax = -s * g[t];
                i_sel = Some(t);
            }
        }
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            let si = sign(i);
            for t in 0..n {
                let s = sign(t);
                let low = if s > 0.0 { a[t] > 0.0 } else { a[t] < upper[t] };
                if !low {
                    continue;
                }
                let sg = s * g[t];
                gmax2 = gmax2.max(sg);
                let diff = gmax + sg;
                if diff > 0.0 {
                    let quad = (2.0 - 2.0 * si * q(i, t) * s).max(1e-12);
                    let v = -diff * diff / quad;
                    if v <= obj_min {
                        obj_min = v;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < tol || j_sel.is_none() {
            break gap;
        }
        if iter >= max_iter {
            return Err(Error::Convergence {
                iterations: iter,
                residual: gap,
            });
        }
        iter += 1;
        let (i, j) = (i_sel.unwrap(), j_sel.unwrap());
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (a[i], a[j]);
        let qij = q(i, j);
        if sign(i) != sign(j) {
            let quad = (2.0 + 2.0 * qij).max(1e-12);
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > ci - cj {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = ci - diff;
                }
            } else if a[j] > cj {
                a[j] = cj;
                a[i] = cj + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qij).max(1e-12);
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > ci {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = sum - ci;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > cj {
                if a[j] > cj {
                    a[j] = cj;
                    a[i] = sum - cj;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for t in 0..n {
            g[t] += q(t, i) * di + q(t, j) * dj;
        }
    };
    let _ = gap;

    // Offset from free variables, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let s = sign(t);
        let yg = s * g[t];
        if a[t] >= upper[t] {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };
    let objective = 0.5 * (0..n).map(|t| a[t] * (g[t] + p[t])).sum::<f64>();

    let mut rows = Vec::new();
    let mut coef = Vec::new();
    for i in 0..l {
        let b = a[i] - a[i + l];
        if b != 0.0 {
            rows.push(x.row(i).to_vec());
            coef.push(b);
        }
    }
    let support = if rows.is_empty() {
        Matrix::zeros(0, x.cols())
    } else {
        Matrix::from_rows(&rows)?
    };
    Ok(SupportVectorRegressor {
        support,
        coef,
        bias: -rho,
        params: *params,
        objective,
        iterations: iter,
    })
}

impl SupportVectorRegressor {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .coef
                .iter()
                .enumerate()
                .map(|(k, b)| b * rbf(self.support.row(k), row, self.params.gamma))
                .sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

pub fn svr_predict(model: &SupportVectorRegressor, x: &Matrix) -> Vec<f64> {
    model.predict(x)
}
