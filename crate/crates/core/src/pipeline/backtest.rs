//! Risk series on the comparison year and the backtest / accuracy report.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::data::{persistence_forecast, rmse, DateWindow};
use super::models::{day_key, BenchmarkModel, ModelTag, StackedModel};
use crate::error::{Error, Result};
use crate::heston::heston_simulate;
use crate::market_data::{FeatureFrame, ReturnSeries};
use crate::risk::{
    heston_var_cvar, run_backtests, student_scale, student_t_var_cvar, Predictive, RiskSeries, TestTag,
    TestResult,
};
use crate::rng;

/// Forecasts below this are floored before building Student-t risk measures.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskOptions {
    pub alpha: f64,
    pub horizon: usize,
    /// Step `horizon` days between periods instead of one.
    pub non_overlapping: bool,
    pub n_sim: usize,
    pub seed: u64,
}

/// Anything that forecasts daily volatility from unscaled lag rows.
#[derive(Debug, Clone, Copy)]
pub enum ForecastModel<'a> {
    Stacked(&'a StackedModel),
    Benchmark(&'a BenchmarkModel),
}

impl ForecastModel<'_> {
    pub fn tag(&self) -> ModelTag {
        match self {
            ForecastModel::Stacked(_) => ModelTag::Stacked,
            ForecastModel::Benchmark(b) => b.tag(),
        }
    }

    pub fn forecast(&self, raw: &FeatureFrame, returns: &ReturnSeries) -> Result<Vec<f64>> {
        match self {
            ForecastModel::Stacked(m) => m.forecast(raw),
            ForecastModel::Benchmark(b) => b.forecast(raw, returns),
        }
    }
}

/// Per-date forecasts as a volatility series.
pub fn forecast(model: ForecastModel<'_>, raw: &FeatureFrame, returns: &ReturnSeries) -> Result<crate::VolSeries> {
    Ok(crate::VolSeries {
        dates: raw.dates.clone(),
        values: model.forecast(raw, returns)?,
    })
}

/// VaR/CVaR per comparison date against the realised forward horizon return.
/// Periods whose horizon runs past the window end are dropped.
pub fn risk_series(
    model: ForecastModel<'_>,
    raw: &FeatureFrame,
    returns: &ReturnSeries,
    window: &DateWindow,
    opts: &RiskOptions,
) -> Result<RiskSeries> {
    let h = opts.horizon;
    if h < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let sigma = model.forecast(raw, returns)?;
    let last = returns
        .dates
        .iter()
        .rposition(|d| window.contains(*d))
        .ok_or_else(|| Error::InsufficientData(format!("no returns inside {window}")))?;
    let step = if opts.non_overlapping { h } else { 1 };

    let mut out = RiskSeries {
        dates: Vec::new(),
        var: Vec::new(),
        cvar: Vec::new(),
        realized: Vec::new(),
        alpha: opts.alpha,
        horizon: h,
        predictive: Vec::new(),
        thin_tail_periods: 0,
    };
    let mut next_allowed = 0usize;
    for (i, d) in raw.dates.iter().enumerate() {
        let t = returns
            .dates
            .binary_search(d)
            .map_err(|_| Error::Alignment(format!("no return dated {d}")))?;
        if t + h - 1 > last || t < next_allowed {
            continue;
        }
        next_allowed = t + step;
        let realized: f64 = returns.returns[t..t + h].iter().sum();
        match model {
            ForecastModel::Benchmark(BenchmarkModel::Heston(hb)) => {
                let v = raw.x.get(i, 0);
                let seed = rng::stream_id(&[hb.seed, 0xB7, day_key(*d)]);
                let paths = heston_simulate(&hb.params.with_v0(v * v), h, hb.n_paths, seed)?;
                let (est, pred) = heston_var_cvar(&paths.cumulative_returns(), opts.alpha)?;
                out.var.push(est.var);
                out.cvar.push(est.cvar);
                out.predictive.push(pred);
                out.thin_tail_periods += est.thin_tail as usize;
            }
            _ => {
                let nu = match model {
                    ForecastModel::Stacked(m) => m.nu,
                    ForecastModel::Benchmark(b) => b.nu().expect("network benchmarks carry nu"),
                };
                let s = sigma[i].max(SIGMA_FLOOR);
                let (var, cvar) = student_t_var_cvar(s, nu, opts.alpha, h)?;
                out.var.push(var);
                out.cvar.push(cvar);
                out.predictive.push(Predictive::StudentT {
                    scale: student_scale(s, nu, h),
                    nu,
                });
            }
        }
        out.dates.push(*d);
        out.realized.push(realized);
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {h}-day horizon fits inside comparison window {window}"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub model: String,
    pub test: TestTag,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub decision: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub model: String,
    /// `test` (last 25% of the training period) or `comparison`.
    pub window: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub alpha: f64,
    pub horizon: usize,
    pub tests: Vec<TestRow>,
    pub rmse: Vec<RmseRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BacktestReport {
    pub fn new(alpha: f64, horizon: usize) -> Self {
        Self {
            alpha,
            horizon,
            tests: Vec::new(),
            rmse: Vec::new(),
        }
    }

    pub fn push_tests(&mut self, model: &str, results: &[TestResult]) {
        for r in results {
            self.tests.push(TestRow {
                model: model.to_string(),
                test: r.test,
                statistic: r.statistic,
                p_value: r.p_value,
                decision: r.decision().to_string(),
                note: r.note.clone(),
            });
        }
    }

    pub fn write_tests_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["model", "test", "statistic", "p_value", "decision"])?;
        for t in &self.tests {
            wtr.write_record([
                t.model.clone(),
                t.test.as_str().to_string(),
                opt(t.statistic),
                opt(t.p_value),
                t.decision.clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_rmse_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["model", "window", "rmse"])?;
        for r in &self.rmse {
            wtr.write_record([r.model.clone(), r.window.clone(), r.rmse.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Plain-text tables: RMSE per model and window, then p-values per model and test.
    pub fn text(&self) -> String {
        let mut s = String::new();
        s.push_str("Accuracy (RMSE)\n");
        let mut windows: Vec<&str> = Vec::new();
        for r in &self.rmse {
            if !windows.contains(&r.window.as_str()) {
                windows.push(&r.window);
            }
        }
        let mut models: Vec<&str> = Vec::new();
        for r in &self.rmse {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        s.push_str(&format!("{:<12}", "model"));
        for w in &windows {
            s.push_str(&format!("{w:>14}"));
        }
        s.push('\n');
        for m in &models {
            s.push_str(&format!("{m:<12}"));
            for w in &windows {
                let v = self.rmse.iter().find(|r| r.model == *m && r.window == *w);
                s.push_str(&format!("{:>14}", v.map_or("-".to_string(), |r| format!("{:.5}", r.rmse))));
            }
            s.push('\n');
        }

        s.push_str(&format!(
            "\nBacktest p-values (alpha = {}, horizon = {} days)\n",
            self.alpha, self.horizon
        ));
        let tests = [TestTag::Kupiec, TestTag::Christoffersen, TestTag::As1, TestTag::As2];
        s.push_str(&format!("{:<12}", "model"));
        for t in tests {
            s.push_str(&format!("{:>16}", t.as_str()));
        }
        s.push('\n');
        let mut tmodels: Vec<&str> = Vec::new();
        for r in &self.tests {
            if !tmodels.contains(&r.model.as_str()) {
                tmodels.push(&r.model);
            }
        }
        for m in tmodels {
            s.push_str(&format!("{m:<12}"));
            for t in tests {
                let cell = self
                    .tests
                    .iter()
                    .find(|r| r.model == m && r.test == t)
                    .map_or("-".to_string(), |r| match r.p_value {
                        Some(p) => format!("{p:.3}"),
                        None => "undefined".to_string(),
                    });
                s.push_str(&format!("{cell:>16}"));
            }
            s.push('\n');
        }
        s
    }
}

/// RMSE of a model on a set of unscaled lag rows.
pub fn model_rmse(model: ForecastModel<'_>, raw: &FeatureFrame, returns: &ReturnSeries) -> Result<f64> {
    rmse(&model.forecast(raw, returns)?, &raw.y)
}

pub fn persistence_rmse(raw: &FeatureFrame) -> Result<f64> {
    rmse(&persistence_forecast(raw)?, &raw.y)
}

/// All four tests for one model on the comparison year.
pub fn backtest(
    model: ForecastModel<'_>,
    raw: &FeatureFrame,
    returns: &ReturnSeries,
    window: &DateWindow,
    opts: &RiskOptions,
) -> Result<(RiskSeries, Vec<TestResult>)> {
    let series = risk_series(model, raw, returns, window, opts)?;
    let seed = rng::stream_id(&[opts.seed, model.tag() as u64]);
    let tests = run_backtests(&series, opts.n_sim, seed)?;
    Ok((series, tests))
}
