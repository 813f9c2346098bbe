//! Student-t GARCH(p,q) and EGARCH(p,q) estimation, filtering and the per-date
//! variance components used as extra network inputs.

use chrono::NaiveDate;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::rng::{self, Rng};
use crate::stats::{self, StdTLogPdf};

pub const MIN_FIT_LEN: usize = 250;
pub const NU_FLOOR: f64 = 2.1;
const RESTARTS: usize = 5;
const JITTER_SEED: u64 = 0x6a09_e667;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    /// ARCH coefficients on r²_{t-i}, i = 1..q.
    pub alpha: Vec<f64>,
    /// GARCH coefficients on σ²_{t-i}, i = 1..p.
    pub beta: Vec<f64>,
    pub nu: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let persistence: f64 = self.alpha.iter().chain(&self.beta).sum();
        if !(self.omega > 0.0)
            || self.alpha.iter().chain(&self.beta).any(|c| !(*c >= 0.0))
            || !(persistence < 1.0)
            || !(self.nu > 2.0)
        {
            return Err(Error::InvalidParameter(format!("infeasible GARCH parameters {self:?}")));
        }
        Ok(())
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha.iter().chain(&self.beta).sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgarchParams {
    pub omega: f64,
    /// Persistence on log σ²_{t-i}, i = 1..p.
    pub alpha: Vec<f64>,
    /// Sign (leverage) coefficients on ε_{t-i}, i = 1..q.
    pub beta: Vec<f64>,
    /// Magnitude coefficients on |ε_{t-i}| − E|ε|, i = 1..q.
    pub gamma: Vec<f64>,
    pub nu: f64,
}

impl EgarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega.is_finite()
            && self.alpha.iter().map(|a| a.abs()).sum::<f64>() < 1.0
            && self.beta.len() == self.gamma.len()
            && self.beta.iter().chain(&self.gamma).all(|c| c.is_finite())
            && self.nu > 2.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("infeasible EGARCH parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    /// Variance used to start the recursion (training-window sample variance).
    pub sigma2_0: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgarchFit {
    pub params: EgarchParams,
    pub sigma2_0: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VolModel {
    Garch(GarchFit),
    Egarch(EgarchFit),
}

/// Per-date decomposition of the variance recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchComponents {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// One row per date, one column per component.
    pub values: Matrix,
    pub omega: f64,
    /// σ²_t (GARCH) or log σ²_t (EGARCH) on the same dates.
    pub level: Vec<f64>,
}

// ---------------------------------------------------------------- filters

/// σ²_0 ..= σ²_n: entry t is the variance of `returns[t]` given the past, the last
/// entry is the one-step-ahead forecast. Presample lags are filled with `sigma2_0`.
pub fn garch_filter(params: &GarchParams, returns: &[f64], sigma2_0: f64) -> Vec<f64> {
    let n = returns.len();
    let mut s2 = Vec::with_capacity(n + 1);
    s2.push(sigma2_0);
    for t in 1..=n {
        let (arch, garch) = garch_terms(params, returns, &s2, t, sigma2_0);
        s2.push(params.omega + arch + garch);
    }
    s2
}

fn garch_terms(p: &GarchParams, r: &[f64], s2: &[f64], t: usize, s2_0: f64) -> (f64, f64) {
    let arch = p
        .alpha
        .iter()
        .enumerate()
        .map(|(i, a)| a * if t > i { r[t - 1 - i] * r[t - 1 - i] } else { s2_0 })
        .sum();
    let garch = p
        .beta
        .iter()
        .enumerate()
        .map(|(i, b)| b * if t > i { s2[t - 1 - i] } else { s2_0 })
        .sum();
    (arch, garch)
}

/// log σ²_0 ..= log σ²_n with presample ε = 0 and |ε| = E|ε|.
pub fn egarch_filter(params: &EgarchParams, returns: &[f64], sigma2_0: f64) -> Vec<f64> {
    let e_abs = stats::std_t_abs_mean(params.nu);
    let n = returns.len();
    let mut ls = Vec::with_capacity(n + 1);
    ls.push(sigma2_0.ln());
    let mut eps = Vec::with_capacity(n);
    for t in 1..=n {
        eps.push(returns[t - 1] / (0.5 * ls[t - 1]).exp());
        let (a, b, g) = egarch_terms(params, &ls, &eps, t, e_abs);
        ls.push(params.omega + a + b + g);
    }
    ls
}

fn egarch_terms(p: &EgarchParams, ls: &[f64], eps: &[f64], t: usize, e_abs: f64) -> (f64, f64, f64) {
    let a = p
        .alpha
        .iter()
        .enumerate()
        .map(|(i, a)| a * ls[t.saturating_sub(1 + i)])
        .sum();
    let (mut b, mut g) = (0.0, 0.0);
    for i in 0..p.beta.len() {
        if t > i {
            let e = eps[t - 1 - i];
            b += p.beta[i] * e;
            g += p.gamma[i] * (e.abs() - e_abs);
        }
    }
    (a, b, g)
}

fn t_loglik(returns: &[f64], variances: &[f64], nu: f64) -> f64 {
    let pdf = StdTLogPdf::new(nu);
    returns.iter().zip(variances).map(|(r, v)| pdf.eval(*r, *v)).sum()
}

// ---------------------------------------------------------------- fitting

fn softmax_simplex(u: &[f64]) -> Vec<f64> {
    // components of a simplex with an implicit slack weight of exp(0)
    let m = u.iter().copied().fold(0.0, f64::max);
    let w: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
    let total = (-m).exp() + w.iter().sum::<f64>();
    w.iter().map(|v| v / total).collect()
}

fn garch_from_raw(u: &[f64], p: usize, q: usize) -> GarchParams {
    let s = softmax_simplex(&u[1..1 + p + q]);
    GarchParams {
        omega: u[0].exp(),
        alpha: s[..q].to_vec(),
        beta: s[q..].to_vec(),
        nu: NU_FLOOR + u[1 + p + q].exp(),
    }
}

fn garch_to_raw(g: &GarchParams) -> Vec<f64> {
    let slack = 1.0 - g.alpha.iter().chain(&g.beta).sum::<f64>();
    let mut u = vec![g.omega.ln()];
    u.extend(g.alpha.iter().chain(&g.beta).map(|c| (c / slack).ln()));
    u.push((g.nu - NU_FLOOR).ln());
    u
}

fn egarch_from_raw(u: &[f64], p: usize, q: usize) -> EgarchParams {
    EgarchParams {
        omega: u[0],
        alpha: u[1..1 + p].iter().map(|v| v.tanh() / p as f64).collect(),
        beta: u[1 + p..1 + p + q].to_vec(),
        gamma: u[1 + p + q..1 + p + 2 * q].to_vec(),
        nu: NU_FLOOR + u[1 + p + 2 * q].exp(),
    }
}

fn egarch_to_raw(e: &EgarchParams) -> Vec<f64> {
    let p = e.alpha.len() as f64;
    let mut u = vec![e.omega];
    u.extend(e.alpha.iter().map(|a| (a * p).clamp(-0.999_999, 0.999_999).atanh()));
    u.extend(&e.beta);
    u.extend(&e.gamma);
    u.push((e.nu - NU_FLOOR).ln());
    u
}

fn check_fit_input(returns: &[f64]) -> Result<f64> {
    if returns.len() < MIN_FIT_LEN {
        return Err(Error::InsufficientData(format!(
            "variance model needs at least {MIN_FIT_LEN} returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numerical("non-finite return".into()));
    }
    let v = stats::var_pop(returns);
    if !(v > 0.0) {
        return Err(Error::Numerical("returns have zero variance".into()));
    }
    Ok(v)
}

/// Best of several jittered Nelder–Mead runs, then one polishing run from the winner.
fn multistart<F>(nll: F, x0: &[f64]) -> Result<(Vec<f64>, f64, usize)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let cfg = NelderMeadConfig {
        max_iter: 3000,
        ftol: 1e-9,
        step: 0.3,
    };
    let runs: Vec<_> = (0..RESTARTS)
        .into_par_iter()
        .map(|k| {
            let mut start = x0.to_vec();
            if k > 0 {
                let mut r = rng::derive(JITTER_SEED, k as u64);
                for v in start.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut r);
                    *v += 0.5 * z;
                }
            }
            nelder_mead(&nll, &start, &cfg)
        })
        .collect();
    let mut best = 0;
    for (k, m) in runs.iter().enumerate() {
        if m.value < runs[best].value {
            best = k;
        }
    }
    let polished = nelder_mead(&nll, &runs[best].x, &cfg);
    let iterations = runs.iter().map(|m| m.iterations).sum::<usize>() + polished.iterations;
    if !polished.value.is_finite() || !polished.converged {
        return Err(Error::Convergence {
            iterations,
            residual: polished.spread,
        });
    }
    Ok((polished.x, -polished.value, iterations))
}

pub fn garch_fit(returns: &[f64], p: usize, q: usize) -> Result<GarchFit> {
    if p < 1 || q < 1 {
        return Err(Error::InvalidParameter("GARCH orders must be >= 1".into()));
    }
    let s2_0 = check_fit_input(returns)?;
    let start = GarchParams {
        omega: 0.05 * s2_0,
        alpha: vec![0.05 / q as f64; q],
        beta: vec![0.9 / p as f64; p],
        nu: 8.0,
    };
    let nll = |u: &[f64]| {
        let g = garch_from_raw(u, p, q);
        let s2 = garch_filter(&g, returns, s2_0);
        -t_loglik(returns, &s2[..returns.len()], g.nu)
    };
    let (u, ll, iterations) = multistart(nll, &garch_to_raw(&start))?;
    Ok(GarchFit {
        params: garch_from_raw(&u, p, q),
        sigma2_0: s2_0,
        log_likelihood: ll,
        iterations,
    })
}

pub fn egarch_fit(returns: &[f64], p: usize, q: usize) -> Result<EgarchFit> {
    if p < 1 || q < 1 {
        return Err(Error::InvalidParameter("EGARCH orders must be >= 1".into()));
    }
    let s2_0 = check_fit_input(returns)?;
    let a0 = 0.9;
    let start = EgarchParams {
        omega: (1.0 - a0) * s2_0.ln(),
        alpha: vec![a0 / p as f64; p],
        beta: vec![0.0; q],
        gamma: vec![0.1; q],
        nu: 8.0,
    };
    let nll = |u: &[f64]| -egarch_loglik(&egarch_from_raw(u, p, q), returns, s2_0);
    let (u, ll, iterations) = multistart(nll, &egarch_to_raw(&start))?;
    Ok(EgarchFit {
        params: egarch_from_raw(&u, p, q),
        sigma2_0: s2_0,
        log_likelihood: ll,
        iterations,
    })
}

/// Log-likelihood of `returns` under fixed GARCH parameters.
pub fn garch_loglik(params: &GarchParams, returns: &[f64], sigma2_0: f64) -> f64 {
    let s2 = garch_filter(params, returns, sigma2_0);
    t_loglik(returns, &s2[..returns.len()], params.nu)
}

/// Fused recursion and likelihood: one `exp` and one `ln` per observation.
pub fn egarch_loglik(params: &EgarchParams, returns: &[f64], sigma2_0: f64) -> f64 {
    let nu = params.nu;
    let e_abs = stats::std_t_abs_mean(nu);
    let constant = StdTLogPdf::new(nu).constant();
    let n = returns.len();
    let mut ls = Vec::with_capacity(n + 1);
    ls.push(sigma2_0.ln());
    let mut eps = Vec::with_capacity(n);
    let mut ll = 0.0;
    for t in 1..=n {
        let e = returns[t - 1] * (-0.5 * ls[t - 1]).exp();
        ll += constant - 0.5 * ls[t - 1] - 0.5 * (nu + 1.0) * (1.0 + e * e / (nu - 2.0)).ln();
        eps.push(e);
        let (a, b, g) = egarch_terms(params, &ls, &eps, t, e_abs);
        ls.push(params.omega + a + b + g);
    }
    ll
}

// ---------------------------------------------------------------- components

impl VolModel {
    pub fn n_components(&self) -> usize {
        match self {
            VolModel::Garch(_) => 2,
            VolModel::Egarch(_) => 3,
        }
    }

    pub fn nu(&self) -> f64 {
        match self {
            VolModel::Garch(g) => g.params.nu,
            VolModel::Egarch(e) => e.params.nu,
        }
    }

    /// Conditional variances σ²_0 ..= σ²_n over `returns`.
    pub fn variances(&self, returns: &[f64]) -> Vec<f64> {
        match self {
            VolModel::Garch(g) => garch_filter(&g.params, returns, g.sigma2_0),
            VolModel::Egarch(e) => egarch_filter(&e.params, returns, e.sigma2_0)
                .into_iter()
                .map(f64::exp)
                .collect(),
        }
    }
}

/// Components dated by the return they condition (index t uses information up to t−1).
pub fn extract_components(model: &VolModel, dates: &[NaiveDate], returns: &[f64]) -> Result<GarchComponents> {
    if dates.len() != returns.len() {
        return Err(Error::Alignment(format!(
            "{} dates for {} returns",
            dates.len(),
            returns.len()
        )));
    }
    let n = returns.len();
    let mut rows = Vec::with_capacity(n.saturating_sub(1));
    let mut level = Vec::with_capacity(n.saturating_sub(1));
    let (names, omega): (Vec<&str>, f64) = match model {
        VolModel::Garch(g) => {
            let s2 = garch_filter(&g.params, returns, g.sigma2_0);
            for t in 1..n {
                let (a, b) = garch_terms(&g.params, returns, &s2, t, g.sigma2_0);
                rows.push(vec![a, b]);
                level.push(s2[t]);
            }
            (vec!["garch_arch", "garch_garch"], g.params.omega)
        }
        VolModel::Egarch(e) => {
            let ls = egarch_filter(&e.params, returns, e.sigma2_0);
            let eps: Vec<f64> = (0..n).map(|t| returns[t] / (0.5 * ls[t]).exp()).collect();
            let e_abs = stats::std_t_abs_mean(e.params.nu);
            for t in 1..n {
                let (a, b, g) = egarch_terms(&e.params, &ls, &eps, t, e_abs);
                rows.push(vec![a, b, g]);
                level.push(ls[t]);
            }
            (vec!["egarch_persistence", "egarch_sign", "egarch_magnitude"], e.params.omega)
        }
    };
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite variance component".into()));
    }
    let values = if rows.is_empty() {
        Matrix::zeros(0, names.len())
    } else {
        Matrix::from_rows(&rows)?
    };
    Ok(GarchComponents {
        dates: dates[1.min(n)..].to_vec(),
        names: names.into_iter().map(String::from).collect(),
        values,
        omega,
        level,
    })
}

impl GarchComponents {
    /// Rows for the requested dates, in that order.
    pub fn align(&self, dates: &[NaiveDate]) -> Result<Matrix> {
        let index: std::collections::HashMap<_, _> =
            self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let idx = dates
            .iter()
            .map(|d| {
                index
                    .get(d)
                    .copied()
                    .ok_or_else(|| Error::Alignment(format!("no variance component for {d}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select_rows(&idx))
    }
}

// ---------------------------------------------------------------- simulation

/// Unit-variance Student-t draw.
pub fn std_t_draw(rng: &mut Rng, nu: f64) -> f64 {
    let t = StudentT::new(nu).expect("nu > 0");
    t.sample(rng) * ((nu - 2.0) / nu).sqrt()
}

/// Zero-mean GARCH returns started from the unconditional variance, after a burn-in.
pub fn simulate_garch(params: &GarchParams, n: usize, burn: usize, rng: &mut Rng) -> Vec<f64> {
    let total = n + burn;
    let s2_0 = params.unconditional_variance();
    let mut r = Vec::with_capacity(total);
    let mut s2 = vec![s2_0];
    for t in 0..total {
        let ret = s2[t].sqrt() * std_t_draw(rng, params.nu);
        r.push(ret);
        let (a, b) = garch_terms(params, &r, &s2, t + 1, s2_0);
        s2.push(params.omega + a + b);
    }
    r.split_off(burn)
}

pub fn simulate_egarch(params: &EgarchParams, n: usize, burn: usize, rng: &mut Rng) -> Vec<f64> {
    let total = n + burn;
    let e_abs = stats::std_t_abs_mean(params.nu);
    let persistence: f64 = params.alpha.iter().sum();
    let mut ls = vec![params.omega / (1.0 - persistence)];
    let mut eps = Vec::with_capacity(total);
    let mut r = Vec::with_capacity(total);
    for t in 0..total {
        let e = std_t_draw(rng, params.nu);
        eps.push(e);
        r.push((0.5 * ls[t]).exp() * e);
        let (a, b, g) = egarch_terms(params, &ls, &eps, t + 1, e_abs);
        ls.push(params.omega + a + b + g);
    }
    r.split_off(burn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g11(omega: f64, a: f64, b: f64) -> GarchParams {
        GarchParams {
            omega,
            alpha: vec![a],
            beta: vec![b],
            nu: 8.0,
        }
    }

    #[test]
    fn hand_recursion() {
        let p = g11(0.1, 0.2, 0.3);
        let r = [0.5, -1.0, 2.0];
        let s = garch_filter(&p, &r, 1.0);
        let s1 = 0.1 + 0.2 * 0.25 + 0.3 * 1.0;
        let s2 = 0.1 + 0.2 * 1.0 + 0.3 * s1;
        let s3 = 0.1 + 0.2 * 4.0 + 0.3 * s2;
        assert_eq!(s.len(), 4);
        assert!((s[1] - s1).abs() < 1e-15 && (s[2] - s2).abs() < 1e-15 && (s[3] - s3).abs() < 1e-15);
    }

    #[test]
    fn degenerate_recursions_are_constant() {
        let r = [0.3, -0.2, 0.9, 0.0, -1.4];
        let s = garch_filter(&g11(0.7, 0.0, 0.0), &r, 2.0);
        assert!(s[1..].iter().all(|v| *v == 0.7));
        let e = EgarchParams {
            omega: -1.5,
            alpha: vec![0.0],
            beta: vec![0.0],
            gamma: vec![0.0],
            nu: 6.0,
        };
        assert!(egarch_filter(&e, &r, 2.0)[1..].iter().all(|v| *v == -1.5));
    }

    #[test]
    fn abs_moment_matches_quadrature() {
        let nu: f64 = 8.0;
        let scale = ((nu - 2.0) / nu).sqrt();
        // E|e| = 2 * integral_0^inf x f(x) dx, substitute x = u / (1 - u)
        let f = |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let x = u / (1.0 - u);
            let dens = stats::t_pdf(x / scale, nu) / scale;
            2.0 * x * dens / ((1.0 - u) * (1.0 - u))
        };
        let m = 200_000;
        let h = 1.0 / m as f64;
        let mut s = f(0.0) + f(1.0);
        for k in 1..m {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = s * h / 3.0;
        assert!((stats::std_t_abs_mean(nu) - quad).abs() < 1e-8, "{quad}");
    }

    #[test]
    fn fused_egarch_likelihood_matches_filter() {
        let e = EgarchParams {
            omega: -0.4,
            alpha: vec![0.95],
            beta: vec![-0.1],
            gamma: vec![0.2],
            nu: 6.5,
        };
        let mut r = rng::seeded(12);
        let ret = simulate_egarch(&e, 300, 50, &mut r);
        let ls = egarch_filter(&e, &ret, 1e-4);
        let v: Vec<f64> = ls[..300].iter().map(|l| l.exp()).collect();
        let direct = t_loglik(&ret, &v, e.nu);
        assert!((egarch_loglik(&e, &ret, 1e-4) - direct).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn raw_roundtrip() {
        let g = GarchParams {
            omega: 2e-6,
            alpha: vec![0.1],
            beta: vec![0.85],
            nu: 7.0,
        };
        let back = garch_from_raw(&garch_to_raw(&g), 1, 1);
        assert!((back.alpha[0] - 0.1).abs() < 1e-12 && (back.beta[0] - 0.85).abs() < 1e-12);
        assert!((back.nu - 7.0).abs() < 1e-12 && (back.omega - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn short_input_rejected() {
        assert!(matches!(garch_fit(&[0.01; 100], 1, 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn component_identities() {
        let mut r = rng::seeded(3);
        let p = g11(5e-6, 0.1, 0.85);
        let ret = simulate_garch(&p, 400, 100, &mut r);
        let dates: Vec<NaiveDate> = (0..400)
            .map(|i| NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(i))
            .collect();
        let m = VolModel::Garch(GarchFit {
            params: p.clone(),
            sigma2_0: stats::var_pop(&ret),
            log_likelihood: 0.0,
            iterations: 0,
        });
        let c = extract_components(&m, &dates, &ret).unwrap();
        assert_eq!(c.dates[0], dates[1]);
        for t in 0..c.dates.len() {
            let v = c.omega + c.values.get(t, 0) + c.values.get(t, 1);
            assert!((v - c.level[t]).abs() < 1e-10);
            assert!(c.values.get(t, 0) >= 0.0 && c.values.get(t, 1) >= 0.0);
        }
        let e = VolModel::Egarch(EgarchFit {
            params: EgarchParams {
                omega: -0.5,
                alpha: vec![0.95],
                beta: vec![-0.08],
                gamma: vec![0.15],
                nu: 7.0,
            },
            sigma2_0: stats::var_pop(&ret),
            log_likelihood: 0.0,
            iterations: 0,
        });
        let c = extract_components(&e, &dates, &ret).unwrap();
        assert_eq!(c.values.cols(), 3);
        for t in 0..c.dates.len() {
            let v = c.omega + c.values.get(t, 0) + c.values.get(t, 1) + c.values.get(t, 2);
            assert!((v - c.level[t]).abs() < 1e-10);
        }
        let m = c.align(&dates[5..8]).unwrap();
        assert_eq!(m.row(0), c.values.row(4));
        assert!(c.align(&dates[..1]).is_err());
    }
}
