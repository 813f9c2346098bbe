//! VaR/CVaR from volatility forecasts and the Kupiec, Christoffersen and
//! Acerbi–Székely backtests.

use std::fmt;

use chrono::NaiveDate;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::rng;
use crate::stats::{self, StdTLogPdf};

pub const DEFAULT_ALPHA: f64 = 0.99;
pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_N_SIM: usize = 5000;
pub const MIN_RISK_PATHS: usize = 1000;
pub const MIN_TAIL_POINTS: usize = 20;
pub const TEST_LEVEL: f64 = 0.05;

/// Zero-mean predictive distribution of one period's horizon return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictive {
    /// `scale * T_nu`.
    StudentT { scale: f64, nu: f64 },
    /// Ascending simulated horizon returns.
    Empirical { sorted: Vec<f64> },
}

impl Predictive {
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Predictive::StudentT { scale, nu } => scale * stats::t_quantile(u, *nu),
            Predictive::Empirical { sorted } => stats::quantile_sorted(sorted, u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub var: f64,
    pub cvar: f64,
    pub tail_points: usize,
    /// Fewer than [`MIN_TAIL_POINTS`] observations behind the CVaR.
    pub thin_tail: bool,
}

/// Horizon VaR and CVaR (positive loss magnitudes) for a zero-mean scaled Student-t
/// whose standard deviation is `sigma_daily * sqrt(horizon)`.
pub fn student_t_var_cvar(sigma_daily: f64, nu: f64, alpha: f64, horizon: usize) -> Result<(f64, f64)> {
    if !(nu > 2.0) {
        return Err(Error::InvalidParameter(format!("Student-t needs nu > 2 for a finite variance, got {nu}")));
    }
    if !(sigma_daily > 0.0) || !(alpha > 0.5 && alpha < 1.0) || horizon < 1 {
        return Err(Error::InvalidParameter(format!(
            "need sigma > 0, alpha in (0.5, 1), horizon >= 1; got {sigma_daily}, {alpha}, {horizon}"
        )));
    }
    let s = student_scale(sigma_daily, nu, horizon);
    let q = stats::t_quantile(1.0 - alpha, nu);
    let var = -s * q;
    let cvar = s * stats::t_pdf(q, nu) / (1.0 - alpha) * (nu + q * q) / (nu - 1.0);
    Ok((var, cvar))
}

pub fn student_scale(sigma_daily: f64, nu: f64, horizon: usize) -> f64 {
    sigma_daily * (horizon as f64).sqrt() * ((nu - 2.0) / nu).sqrt()
}

/// Empirical VaR and CVaR of simulated horizon returns.
pub fn empirical_var_cvar(horizon_returns: &[f64], alpha: f64) -> Result<RiskEstimate> {
    if horizon_returns.len() < MIN_RISK_PATHS {
        return Err(Error::InsufficientData(format!(
            "empirical VaR needs at least {MIN_RISK_PATHS} paths, got {}",
            horizon_returns.len()
        )));
    }
    let mut sorted = horizon_returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_var_cvar(&sorted, alpha))
}

fn sorted_var_cvar(sorted: &[f64], alpha: f64) -> RiskEstimate {
    let q = stats::quantile_sorted(sorted, 1.0 - alpha);
    let tail: Vec<f64> = sorted.iter().copied().take_while(|r| *r <= q).collect();
    RiskEstimate {
        var: -q,
        cvar: -stats::mean(&tail),
        tail_points: tail.len(),
        thin_tail: tail.len() < MIN_TAIL_POINTS,
    }
}

/// Builds the empirical predictive plus its risk estimate from Heston path returns.
pub fn heston_var_cvar(horizon_returns: &[f64], alpha: f64) -> Result<(RiskEstimate, Predictive)> {
    let est = empirical_var_cvar(horizon_returns, alpha)?;
    let mut sorted = horizon_returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((est, Predictive::Empirical { sorted }))
}

/// MLE of the Student-t degrees of freedom for a standardised sample, which is
/// first renormalised to unit variance.
pub fn fit_student_nu(z: &[f64]) -> Result<f64> {
    if z.len() < 30 {
        return Err(Error::InsufficientData("need at least 30 observations to fit nu".into()));
    }
    let m = stats::mean(z);
    let sd = stats::std_pop(z);
    if !(sd > 0.0) {
        return Err(Error::Numerical("standardised sample has zero spread".into()));
    }
    let zs: Vec<f64> = z.iter().map(|v| (v - m) / sd).collect();
    let nll = |u: &[f64]| {
        let nu = 2.1 + u[0].exp();
        let pdf = StdTLogPdf::new(nu);
        -zs.iter().map(|v| pdf.eval(*v, 1.0)).sum::<f64>()
    };
    let cfg = NelderMeadConfig {
        max_iter: 500,
        ftol: 1e-12,
        step: 0.5,
    };
    let best = nelder_mead(nll, &[(6.0f64 - 2.1).ln()], &cfg);
    Ok((2.1 + best.x[0].exp()).min(1000.0))
}

// ---------------------------------------------------------------- series

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSeries {
    pub dates: Vec<NaiveDate>,
    pub var: Vec<f64>,
    pub cvar: Vec<f64>,
    /// Realised horizon return starting at each date.
    pub realized: Vec<f64>,
    pub alpha: f64,
    pub horizon: usize,
    pub predictive: Vec<Predictive>,
    /// Periods whose empirical CVaR rests on fewer than [`MIN_TAIL_POINTS`] points.
    pub thin_tail_periods: usize,
}

impl RiskSeries {
    pub fn hits(&self) -> Vec<bool> {
        hit_sequence(&self.realized, &self.var)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// I_t = 1 when `r_t + VaR_t < 0`.
pub fn hit_sequence(returns: &[f64], var: &[f64]) -> Vec<bool> {
    returns.iter().zip(var).map(|(r, v)| r + v < 0.0).collect()
}

/// Forward horizon sums of daily returns starting at every `step`-th index.
/// Returns (start index, horizon return) pairs for windows that fit.
pub fn horizon_returns(daily: &[f64], horizon: usize, step: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t + horizon <= daily.len() {
        out.push((t, daily[t..t + horizon].iter().sum()));
        t += step.max(1);
    }
    out
}

// ---------------------------------------------------------------- tests

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TestTag {
    Kupiec,
    Christoffersen,
    As1,
    As2,
}

impl TestTag {
    pub const ALL: [TestTag; 4] = [TestTag::Kupiec, TestTag::Christoffersen, TestTag::As1, TestTag::As2];

    pub fn as_str(self) -> &'static str {
        match self {
            TestTag::Kupiec => "KUPIEC",
            TestTag::Christoffersen => "CHRISTOFFERSEN",
            TestTag::As1 => "AS1",
            TestTag::As2 => "AS2",
        }
    }
}

impl fmt::Display for TestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestTag,
    /// `None` when the test is undefined on this input.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub note: Option<String>,
}

impl TestResult {
    fn new(test: TestTag, statistic: f64, p_value: f64, note: Option<String>) -> Self {
        let p = p_value.clamp(0.0, 1.0);
        Self {
            test,
            statistic: Some(statistic),
            p_value: Some(p),
            reject: p < TEST_LEVEL,
            note,
        }
    }

    fn undefined(test: TestTag, note: &str) -> Self {
        Self {
            test,
            statistic: None,
            p_value: None,
            reject: false,
            note: Some(note.into()),
        }
    }

    pub fn decision(&self) -> &'static str {
        match (self.p_value, self.reject) {
            (None, _) => "undefined",
            (Some(_), true) => "reject",
            (Some(_), false) => "accept",
        }
    }
}

/// x ln y with the 0 ln 0 = 0 convention.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub fn kupiec_lr(n: usize, x: usize, p: f64) -> f64 {
    let (nf, xf) = (n as f64, x as f64);
    let phat = xf / nf;
    let null = xlny(nf - xf, 1.0 - p) + xlny(xf, p);
    let alt = xlny(nf - xf, 1.0 - phat) + xlny(xf, phat);
    (-2.0 * (null - alt)).max(0.0)
}

pub fn kupiec_test(hits: &[bool], p: f64) -> Result<TestResult> {
    if hits.is_empty() {
        return Err(Error::InsufficientData("Kupiec test needs at least one period".into()));
    }
    let x = hits.iter().filter(|h| **h).count();
    let lr = kupiec_lr(hits.len(), x, p);
    Ok(TestResult::new(TestTag::Kupiec, lr, stats::chi2_sf(lr, 1.0), None))
}

/// Transition counts (n00, n01, n10, n11).
pub fn transition_counts(hits: &[bool]) -> [usize; 4] {
    let mut c = [0; 4];
    for w in hits.windows(2) {
        c[(w[0] as usize) * 2 + w[1] as usize] += 1;
    }
    c
}

pub fn christoffersen_test(hits: &[bool], p: f64) -> Result<TestResult> {
    if hits.len() < 2 {
        return Err(Error::InsufficientData("Christoffersen test needs at least two periods".into()));
    }
    let c = transition_counts(hits);
    let mut n: [f64; 4] = c.map(|v| v as f64);
    let mut note = None;
    for row in 0..2 {
        if c[2 * row] + c[2 * row + 1] == 0 {
            n[2 * row] += 0.5;
            n[2 * row + 1] += 0.5;
            note = Some("empty transition row smoothed by adding one half".to_string());
        }
    }
    let [n00, n01, n10, n11] = n;
    let pi01 = n01 / (n00 + n01);
    let pi11 = n11 / (n10 + n11);
    let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
    let l0 = xlny(n00 + n10, 1.0 - pi) + xlny(n01 + n11, pi);
    let l1 = xlny(n00, 1.0 - pi01) + xlny(n01, pi01) + xlny(n10, 1.0 - pi11) + xlny(n11, pi11);
    let lr_ind = (-2.0 * (l0 - l1)).max(0.0);
    let x = hits.iter().filter(|h| **h).count();
    let lr = kupiec_lr(hits.len(), x, p) + lr_ind;
    Ok(TestResult::new(TestTag::Christoffersen, lr, stats::chi2_sf(lr, 2.0), note))
}

/// Z1 over exceedances; `None` without exceedances.
pub fn as1_statistic(returns: &[f64], var: &[f64], cvar: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut k = 0usize;
    for t in 0..returns.len() {
        if returns[t] + var[t] < 0.0 {
            sum += returns[t] / cvar[t];
            k += 1;
        }
    }
    (k > 0).then(|| sum / k as f64 + 1.0)
}

pub fn as2_statistic(returns: &[f64], var: &[f64], cvar: &[f64], alpha: f64) -> f64 {
    let n = returns.len() as f64;
    let mut sum = 0.0;
    for t in 0..returns.len() {
        if returns[t] + var[t] < 0.0 {
            sum += returns[t] / cvar[t];
        }
    }
    sum / (n * (1.0 - alpha)) + 1.0
}

/// Draws one return path from the predictive distributions, evaluating a quantile
/// only where the draw lands beyond the VaR.
fn simulate_tail(
    predictive: &[Predictive],
    var: &[f64],
    alpha: f64,
    r: &mut rng::Rng,
    out: &mut Vec<f64>,
) {
    out.clear();
    for (pred, v) in predictive.iter().zip(var) {
        let u: f64 = r.random();
        // beyond a small safety margin the draw cannot exceed the VaR
        let ret = if u < (1.0 - alpha) * 1.5 + 1e-9 {
            pred.quantile(u.max(f64::MIN_POSITIVE))
        } else {
            -v
        };
        out.push(ret);
    }
}

fn simulate_null<F>(series: &RiskSeries, n_sim: usize, seed: u64, stat: F) -> Vec<Option<f64>>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    (0..n_sim)
        .into_par_iter()
        .map_init(Vec::new, |buf, k| {
            let mut r = rng::derive(seed, k as u64);
            simulate_tail(&series.predictive, &series.var, series.alpha, &mut r, buf);
            stat(buf)
        })
        .collect()
}

fn check_series(series: &RiskSeries) -> Result<()> {
    let n = series.len();
    if series.var.len() != n || series.cvar.len() != n || series.realized.len() != n || series.predictive.len() != n
    {
        return Err(Error::Dimension {
            expected: n,
            got: series.var.len().min(series.cvar.len()).min(series.realized.len()),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData("empty risk series".into()));
    }
    Ok(())
}

fn mc_p_value(observed: f64, sims: &[Option<f64>]) -> (f64, usize) {
    let valid: Vec<f64> = sims.iter().flatten().copied().collect();
    let below = valid.iter().filter(|z| **z <= observed).count();
    (below as f64 / valid.len().max(1) as f64, valid.len())
}

pub fn as1_test(series: &RiskSeries, n_sim: usize, seed: u64) -> Result<TestResult> {
    check_series(series)?;
    let Some(z) = as1_statistic(&series.realized, &series.var, &series.cvar) else {
        return Ok(TestResult::undefined(TestTag::As1, "no exceedances: test undefined"));
    };
    let sims = simulate_null(series, n_sim, seed, |r| as1_statistic(r, &series.var, &series.cvar));
    let (p, used) = mc_p_value(z, &sims);
    if used == 0 {
        return Ok(TestResult::undefined(TestTag::As1, "no simulated exceedances"));
    }
    let note = (used < n_sim).then(|| format!("{} of {n_sim} null draws had no exceedance", n_sim - used));
    Ok(TestResult::new(TestTag::As1, z, p, note))
}

pub fn as2_test(series: &RiskSeries, n_sim: usize, seed: u64) -> Result<TestResult> {
    check_series(series)?;
    let a = series.alpha;
    let z = as2_statistic(&series.realized, &series.var, &series.cvar, a);
    let sims = simulate_null(series, n_sim, seed, |r| Some(as2_statistic(r, &series.var, &series.cvar, a)));
    let (p, _) = mc_p_value(z, &sims);
    Ok(TestResult::new(TestTag::As2, z, p, None))
}

/// All four tests on one series, AS nulls seeded from `seed`.
pub fn run_backtests(series: &RiskSeries, n_sim: usize, seed: u64) -> Result<Vec<TestResult>> {
    let hits = series.hits();
    let p = 1.0 - series.alpha;
    Ok(vec![
        kupiec_test(&hits, p)?,
        christoffersen_test(&hits, p)?,
        as1_test(series, n_sim, rng::stream_id(&[seed, 1]))?,
        as2_test(series, n_sim, rng::stream_id(&[seed, 2]))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_series(r: Vec<f64>, var: Vec<f64>, cvar: Vec<f64>, alpha: f64) -> RiskSeries {
        let n = r.len();
        RiskSeries {
            dates: (0..n)
                .map(|i| NaiveDate::from_ymd_opt(2008, 1, 1).unwrap() + chrono::Days::new(i as u64))
                .collect(),
            predictive: var
                .iter()
                .map(|v| Predictive::StudentT {
                    scale: v / 2.0,
                    nu: 5.0,
                })
                .collect(),
            var,
            cvar,
            realized: r,
            alpha,
            horizon: 1,
            thin_tail_periods: 0,
        }
    }

    #[test]
    fn gaussian_limit_of_var() {
        let (v, c) = student_t_var_cvar(0.01, 1e6, 0.99, 10).unwrap();
        let sh = 0.01 * 10f64.sqrt();
        assert!((v / (sh * 2.326_347_874) - 1.0).abs() < 1e-3);
        assert!(c > v);
    }

    #[test]
    fn cvar_matches_tail_quadrature() {
        let (nu, alpha) = (8.0, 0.99);
        let (v, c) = student_t_var_cvar(0.02, nu, alpha, 1).unwrap();
        let s = student_scale(0.02, nu, 1);
        // E[-X | X < -VaR], X = s T: integrate x f(x) over (-inf, q] with x = q - w/(1-w)
        let q = -v / s;
        let g = |w: f64| {
            if w >= 1.0 {
                return 0.0;
            }
            let x = q - w / (1.0 - w);
            x * stats::t_pdf(x, nu) / ((1.0 - w) * (1.0 - w))
        };
        let m = 400_000;
        let h = 1.0 / m as f64;
        let mut acc = g(0.0) + g(1.0);
        for k in 1..m {
            acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let tail = -s * acc * h / 3.0 / (1.0 - alpha);
        assert!((c / tail - 1.0).abs() < 1e-6, "{c} vs {tail}");
    }

    #[test]
    fn scale_equivariance_and_bad_nu() {
        let (v1, c1) = student_t_var_cvar(0.013, 5.0, 0.99, 10).unwrap();
        let (v2, c2) = student_t_var_cvar(0.026, 5.0, 0.99, 10).unwrap();
        assert_eq!(v2, 2.0 * v1);
        assert_eq!(c2, 2.0 * c1);
        assert!(student_t_var_cvar(0.01, 2.0, 0.99, 10).is_err());
    }

    #[test]
    fn degenerate_empirical() {
        let e = empirical_var_cvar(&[-0.03; 1000], 0.99).unwrap();
        assert!((e.var - 0.03).abs() < 1e-15 && (e.cvar - 0.03).abs() < 1e-15);
        assert!(!e.thin_tail);
        assert!(empirical_var_cvar(&[0.0; 999], 0.99).is_err());
    }

    #[test]
    fn kupiec_null_attained() {
        let mut hits = vec![false; 100];
        hits[3] = true;
        let t = kupiec_test(&hits, 0.01).unwrap();
        assert_eq!(t.statistic, Some(0.0));
        assert_eq!(t.p_value, Some(1.0));
    }

    #[test]
    fn kupiec_reference_value() {
        // closed form evaluated independently at 50-digit precision
        let lr = kupiec_lr(250, 2, 0.01);
        assert!((lr - 0.108_435_216_236_803_32).abs() < 1e-12);
        let mut hits = vec![false; 250];
        hits[10] = true;
        hits[200] = true;
        let t = kupiec_test(&hits, 0.01).unwrap();
        assert!((t.p_value.unwrap() - 0.741_932_700_952_623_4).abs() < 1e-9);
    }

    #[test]
    fn kupiec_edges() {
        let none = kupiec_test(&vec![false; 1000], 0.01).unwrap();
        assert!(none.statistic.unwrap() > 20.0 && none.reject);
        let all = kupiec_test(&[true; 10], 0.01).unwrap();
        assert!(all.statistic.unwrap().is_finite() && all.reject);
    }

    #[test]
    fn christoffersen_alternating() {
        let hits: Vec<bool> = (0..200).map(|i| i % 2 == 1).collect();
        let t = christoffersen_test(&hits, 0.01).unwrap();
        assert!(t.p_value.unwrap() < 0.01);
        assert_eq!(transition_counts(&hits), [0, 100, 99, 0]);
    }

    #[test]
    fn clustering_penalised() {
        let mut clustered = vec![false; 250];
        let mut spread = vec![false; 250];
        for k in 0..5 {
            clustered[100 + k] = true;
            spread[25 + 50 * k] = true;
        }
        let pc = christoffersen_test(&clustered, 0.01).unwrap().p_value.unwrap();
        let ps = christoffersen_test(&spread, 0.01).unwrap().p_value.unwrap();
        assert!(pc < ps, "{pc} vs {ps}");
    }

    #[test]
    fn christoffersen_smoothing_flagged() {
        let t = christoffersen_test(&vec![false; 50], 0.01).unwrap();
        assert!(t.note.is_some());
    }

    #[test]
    fn as_statistics_by_hand() {
        // exceedances at t = 1 (r=-3, cvar=3) and t = 3 (r=-5, cvar=4)
        let r = vec![0.5, -3.0, -0.2, -5.0, 1.0];
        let var = vec![1.0, 2.0, 1.0, 3.0, 1.0];
        let cvar = vec![1.5, 3.0, 1.5, 4.0, 1.5];
        let z1 = as1_statistic(&r, &var, &cvar).unwrap();
        assert_eq!(z1, (-1.0 + -1.25) / 2.0 + 1.0);
        let z2 = as2_statistic(&r, &var, &cvar, 0.9);
        assert_eq!(z2, (-1.0 + -1.25) / (5.0 * (1.0 - 0.9)) + 1.0);

        let balanced = vec![0.0, -3.0, 0.0, -4.0, 0.0];
        assert_eq!(as1_statistic(&balanced, &var, &cvar), Some(0.0));
        assert_eq!(as2_statistic(&[0.0; 5], &var, &cvar, 0.9), 1.0);
    }

    #[test]
    fn as1_undefined_without_exceedances() {
        let s = toy_series(vec![0.0; 5], vec![1.0; 5], vec![1.2; 5], 0.99);
        let t = as1_test(&s, 100, 1).unwrap();
        assert!(t.p_value.is_none() && t.note.is_some());
        assert_eq!(t.decision(), "undefined");
        let t2 = as2_test(&s, 200, 1).unwrap();
        assert_eq!(t2.statistic, Some(1.0));
        assert!(t2.p_value.unwrap() > 0.5);
    }

    #[test]
    fn horizon_windows() {
        let d: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let o = horizon_returns(&d, 10, 1);
        assert_eq!(o.len(), 16);
        assert_eq!(o[0], (0, 45.0));
        let n = horizon_returns(&d, 10, 10);
        assert_eq!(n, vec![(0, 45.0), (10, 145.0)]);
    }

    #[test]
    fn nu_mle_recovers_tails() {
        let mut r = rng::seeded(4);
        let z: Vec<f64> = (0..20_000).map(|_| crate::garch::std_t_draw(&mut r, 5.0)).collect();
        let nu = fit_student_nu(&z).unwrap();
        assert!((nu - 5.0).abs() < 0.6, "{nu}");
    }
}
