//! Heston stochastic-volatility benchmark: regression calibration against a
//! variance proxy and full-truncation Euler Monte Carlo.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::stats;

pub const DEFAULT_PATHS: usize = 20_000;
pub const MIN_CALIBRATION_LEN: usize = 250;
/// Paths per generator stream; fixes the mapping from seed to paths.
const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Daily drift.
    pub mu: f64,
    /// Daily mean-reversion rate.
    pub theta: f64,
    /// Long-run variance.
    pub upsilon: f64,
    /// Volatility of variance.
    pub delta: f64,
    pub rho: f64,
    pub v0: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.theta > 0.0
            && self.upsilon > 0.0
            && self.delta >= 0.0
            && self.v0 >= 0.0
            && self.rho.abs() <= 1.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("infeasible Heston parameters {self:?}")));
        }
        Ok(())
    }

    /// Mean of the discrete recursion t steps ahead when truncation never binds.
    pub fn discrete_mean(&self, t: usize) -> f64 {
        self.upsilon + (self.v0 - self.upsilon) * (1.0 - self.theta).powi(t as i32)
    }

    pub fn with_v0(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    /// n_paths x (horizon + 1), truncated at zero; column 0 is v0.
    pub variances: Matrix,
    /// n_paths x horizon daily returns.
    pub returns: Matrix,
    pub horizon: usize,
    pub n_paths: usize,
}

/// Least-squares calibration of the discretised variance dynamics against `proxy`
/// (a daily variance series aligned with `returns`).
pub fn heston_calibrate(returns: &[f64], proxy: &[f64]) -> Result<HestonParams> {
    let n = returns.len();
    if proxy.len() != n {
        return Err(Error::Alignment(format!("{n} returns but {} proxy values", proxy.len())));
    }
    if n < MIN_CALIBRATION_LEN {
        return Err(Error::InsufficientData(format!(
            "Heston calibration needs at least {MIN_CALIBRATION_LEN} observations, got {n}"
        )));
    }
    if proxy.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Calibration("variance proxy must be finite and non-negative".into()));
    }
    let v = &proxy[..n - 1];
    let dv: Vec<f64> = proxy.windows(2).map(|w| w[1] - w[0]).collect();
    let v_mean = stats::mean(v);
    let var_v = stats::var_pop(v);
    if !(var_v > 1e-14 * v_mean * v_mean) || var_v == 0.0 {
        return Err(Error::Calibration("variance proxy is constant: no mean-reversion signal".into()));
    }
    let dv_mean = stats::mean(&dv);
    let cov: f64 = v.iter().zip(&dv).map(|(a, b)| (a - v_mean) * (b - dv_mean)).sum::<f64>() / v.len() as f64;
    let slope = cov / var_v;
    let intercept = dv_mean - slope * v_mean;
    let theta = -slope;
    if !(theta > 0.0) {
        return Err(Error::Calibration(format!(
            "regression implies theta = {theta:.3e} <= 0: proxy not mean-reverting"
        )));
    }
    let upsilon = intercept / theta;
    if !(upsilon > 0.0) {
        return Err(Error::Calibration(format!("regression implies long-run variance {upsilon:.3e} <= 0")));
    }

    let resid: Vec<f64> = dv.iter().zip(v).map(|(d, vt)| d - intercept - slope * vt).collect();
    let mut ratios = Vec::with_capacity(resid.len());
    for (e, vt) in resid.iter().zip(v) {
        if *vt > 0.0 {
            ratios.push(e * e / vt);
        }
    }
    let delta = stats::mean(&ratios).sqrt();
    let mu = stats::mean(returns);

    let (mut z, mut eta) = (Vec::new(), Vec::new());
    for t in 0..n - 1 {
        if v[t] > 0.0 {
            let s = v[t].sqrt();
            z.push((returns[t] - mu) / s);
            eta.push(resid[t] / s);
        }
    }
    let rho = stats::correlation(&z, &eta).clamp(-1.0, 1.0);
    let params = HestonParams {
        mu,
        theta,
        upsilon,
        delta,
        rho,
        v0: proxy[n - 1],
    };
    params.validate().map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(params)
}

/// Full-truncation Euler with Δt = 1 day. Paths are generated in fixed chunks,
/// each from its own derived stream, so output does not depend on thread count.
pub fn heston_simulate(params: &HestonParams, horizon: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
    params.validate()?;
    if horizon < 1 || n_paths < 1 {
        return Err(Error::InvalidParameter("horizon and path count must be >= 1".into()));
    }
    let n_chunks = n_paths.div_ceil(CHUNK);
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let paths = CHUNK.min(n_paths - c * CHUNK);
            let mut r = rng::derive(seed, c as u64);
            let mut vs = Vec::with_capacity(paths * (horizon + 1));
            let mut rs = Vec::with_capacity(paths * horizon);
            let cross = (1.0 - params.rho * params.rho).max(0.0).sqrt();
            for _ in 0..paths {
                let mut v = params.v0;
                vs.push(v.max(0.0));
                for _ in 0..horizon {
                    let z1: f64 = StandardNormal.sample(&mut r);
                    let z2: f64 = StandardNormal.sample(&mut r);
                    let eta = params.rho * z1 + cross * z2;
                    let vp = v.max(0.0);
                    let s = vp.sqrt();
                    rs.push(params.mu + s * z1);
                    v += params.theta * (params.upsilon - vp) + params.delta * s * eta;
                    vs.push(v.max(0.0));
                }
            }
            (vs, rs)
        })
        .collect();
    let mut vs = Vec::with_capacity(n_paths * (horizon + 1));
    let mut rs = Vec::with_capacity(n_paths * horizon);
    for (v, r) in chunks {
        vs.extend(v);
        rs.extend(r);
    }
    Ok(PathSet {
        variances: Matrix::new(n_paths, horizon + 1, vs)?,
        returns: Matrix::new(n_paths, horizon, rs)?,
        horizon,
        n_paths,
    })
}

/// One-day-ahead volatility: mean over paths of √v⁺₁.
pub fn heston_forecast(params: &HestonParams, n_paths: usize, seed: u64) -> Result<f64> {
    let p = heston_simulate(params, 1, n_paths, seed)?;
    let vols: Vec<f64> = (0..n_paths).map(|i| p.variances.get(i, 1).sqrt()).collect();
    // shifted mean: exact when every path agrees
    let first = vols[0];
    Ok(first + vols.iter().map(|v| v - first).sum::<f64>() / n_paths as f64)
}

impl PathSet {
    /// Cumulative return of each path over the full horizon.
    pub fn cumulative_returns(&self) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.returns.row(i).iter().sum()).collect()
    }
}
