//! Stacked network and benchmark models built on a prepared period.

use serde::{Deserialize, Serialize};

use super::data::PeriodData;
use super::grid::{GridSpec, LearnerTag};
use super::learner::{fit_learner, Fitted, TargetScale};
use super::tuning::{full_fit_seed, tune_learner, TuningOutcome, TuningWindow};
use crate::ann::FeedForwardNet;
use crate::error::{Error, Result};
use crate::garch::{egarch_fit, extract_components, garch_fit, VolModel};
use crate::heston::{heston_calibrate, heston_forecast, HestonParams};
use crate::market_data::{lag_column_names, FeatureFrame, ReturnSeries, Scaler, SplitBounds, N_LAGS};
use crate::matrix::Matrix;
use crate::resampling::ResampleMethod;
use crate::risk::fit_student_nu;
use crate::rng;

pub const STACKER_DIM: usize = N_LAGS + 3;
pub const ANN_DIM: usize = N_LAGS;
pub const ANN_GARCH_DIM: usize = N_LAGS + 2;
pub const ANN_EGARCH_DIM: usize = N_LAGS + 3;

const STACK_STREAM: u64 = 0x5A;
const HESTON_STREAM: u64 = 0x4E;

/// Grid, schemes and seed shared by every tuning step of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub grid: GridSpec,
    pub methods: Vec<ResampleMethod>,
    pub seed: u64,
    pub heston_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    #[serde(rename = "S-ANN")]
    Stacked,
    #[serde(rename = "ANN")]
    Ann,
    #[serde(rename = "ANN-GARCH")]
    AnnGarch,
    #[serde(rename = "ANN-EGARCH")]
    AnnEgarch,
    #[serde(rename = "HESTON")]
    Heston,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [
        ModelTag::Stacked,
        ModelTag::Ann,
        ModelTag::AnnGarch,
        ModelTag::AnnEgarch,
        ModelTag::Heston,
    ];
    pub const BENCHMARKS: [ModelTag; 4] = [ModelTag::Ann, ModelTag::AnnGarch, ModelTag::AnnEgarch, ModelTag::Heston];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Stacked => "S-ANN",
            ModelTag::Ann => "ANN",
            ModelTag::AnnGarch => "ANN-GARCH",
            ModelTag::AnnEgarch => "ANN-EGARCH",
            ModelTag::Heston => "HESTON",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown model `{s}`")))
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_dim(x: &Matrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.cols(),
        });
    }
    Ok(())
}

fn check_lag_layout(raw: &FeatureFrame) -> Result<()> {
    if raw.scaler.is_some() {
        return Err(Error::Validation("model input must be the unscaled lag frame".into()));
    }
    if raw.columns != lag_column_names(N_LAGS) {
        return Err(Error::Validation(format!(
            "model input must have exactly the {N_LAGS} lag columns, got {:?}",
            raw.columns
        )));
    }
    Ok(())
}

fn student_nu(data: &PeriodData) -> Result<f64> {
    fit_student_nu(&data.standardized_returns()?)
}

// ---------------------------------------------------------------- stacked

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    /// RF, GB, SVR in that order, fitted on the first-level rows.
    pub first_level: Vec<Fitted>,
    pub stacker: FeedForwardNet,
    pub scaler: Scaler,
    /// First-level target range: maps first-level forecasts onto the predictor
    /// scale and the stacker output back to volatility units.
    pub forecast_scale: TargetScale,
    pub bounds: SplitBounds,
    pub nu: f64,
    pub first_level_outcomes: Vec<TuningOutcome>,
    pub stacker_outcome: TuningOutcome,
}

/// Appends the scaled first-level forecasts to scaled lags.
fn stack_features(first_level: &[Fitted], scaled_lags: &Matrix, scale: &TargetScale) -> Result<Matrix> {
    let mut cols = Vec::with_capacity(first_level.len());
    for m in first_level {
        cols.push(m.predict(scaled_lags)?.into_iter().map(|v| scale.forward(v)).collect::<Vec<_>>());
    }
    let x = scaled_lags.hstack(&Matrix::from_columns(&cols)?)?;
    check_dim(&x, STACKER_DIM)?;
    Ok(x)
}

fn stacked_columns() -> Vec<String> {
    let mut c = lag_column_names(N_LAGS);
    c.extend(["rf_forecast", "gb_forecast", "svr_forecast"].map(String::from));
    c
}

impl StackedModel {
    /// The 33-column stacker input for unscaled lag rows.
    pub fn features(&self, raw: &FeatureFrame) -> Result<Matrix> {
        check_lag_layout(raw)?;
        let lags = self.scaler.transform(&raw.x)?;
        stack_features(&self.first_level, &lags, &self.forecast_scale)
    }

    pub fn forecast(&self, raw: &FeatureFrame) -> Result<Vec<f64>> {
        let x = self.features(raw)?;
        check_dim(&x, self.stacker.input_dim())?;
        let s = self.forecast_scale;
        Ok(self.stacker.predict(&x)?.into_iter().map(|v| s.inverse(v)).collect())
    }
}

/// Tunes RF, GB and SVR on the first-level rows with the second-level rows as
/// the out-of-sample window.
pub fn tune_first_level(data: &PeriodData, settings: &TrainSettings) -> Result<Vec<TuningOutcome>> {
    settings.grid.validate(N_LAGS)?;
    let (first, second) = (data.first(), data.second());
    let window = TuningWindow {
        train: &first,
        oos: &second,
        scale: data.target_scale,
    };
    LearnerTag::FIRST_LEVEL
        .iter()
        .map(|&l| Ok(tune_learner(l, &settings.grid, window, &settings.methods, settings.seed)?.outcome))
        .collect()
}

/// First-level refits from tuned hyperparameters, then stacker tuning on the
/// second-level rows with the test rows as its out-of-sample window.
pub fn train_stacked(data: &PeriodData, outcomes: &[TuningOutcome], settings: &TrainSettings) -> Result<StackedModel> {
    let b = data.bounds;
    if !(b.first_end <= b.second().start && b.second_end <= b.test().start) {
        return Err(Error::Validation("split boundaries overlap".into()));
    }
    let first = data.first();
    let mut first_level = Vec::with_capacity(3);
    let mut ordered = Vec::with_capacity(3);
    for tag in LearnerTag::FIRST_LEVEL {
        let o = outcomes
            .iter()
            .find(|o| o.learner == tag)
            .ok_or_else(|| Error::Validation(format!("no tuning outcome for {tag}")))?;
        let seed = full_fit_seed(settings.seed, tag);
        first_level.push(fit_learner(&o.hyper, &first.x, &first.y, &data.target_scale, seed)?);
        ordered.push(o.clone());
    }

    let x = stack_features(&first_level, &data.scaled.x, &data.target_scale)?;
    let stacked = FeatureFrame {
        dates: data.scaled.dates.clone(),
        columns: stacked_columns(),
        x,
        y: data.scaled.y.clone(),
        scaler: None,
    };
    let (second, test) = (stacked.slice(b.second()), stacked.slice(b.test()));
    let tuned = tune_learner(
        LearnerTag::Ann,
        &settings.grid,
        TuningWindow {
            train: &second,
            oos: &test,
            scale: data.target_scale,
        },
        &settings.methods,
        rng::stream_id(&[settings.seed, STACK_STREAM]),
    )?;
    let Fitted::Ann { net: stacker, .. } = tuned.model else {
        unreachable!("network tuning returns a network")
    };
    if stacker.input_dim() != STACKER_DIM {
        return Err(Error::Dimension {
            expected: STACKER_DIM,
            got: stacker.input_dim(),
        });
    }
    Ok(StackedModel {
        first_level,
        stacker,
        scaler: data.scaler.clone(),
        forecast_scale: data.target_scale,
        bounds: b,
        nu: student_nu(data)?,
        first_level_outcomes: ordered,
        stacker_outcome: tuned.outcome,
    })
}

// ---------------------------------------------------------------- benchmarks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnBenchmark {
    pub net: FeedForwardNet,
    /// Maps network output back to volatility units.
    pub target_scale: TargetScale,
    pub scaler: Scaler,
    pub nu: f64,
    pub outcome: TuningOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnVolBenchmark {
    pub net: FeedForwardNet,
    /// Maps network output back to volatility units.
    pub target_scale: TargetScale,
    pub scaler: Scaler,
    pub vol: VolModel,
    /// Min–max scaler of the variance components, fitted on the first-level rows.
    pub component_scaler: Scaler,
    /// First return the variance filter runs over.
    pub filter_start: chrono::NaiveDate,
    pub outcome: TuningOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HestonBenchmark {
    pub params: HestonParams,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "benchmark")]
pub enum BenchmarkModel {
    #[serde(rename = "ANN")]
    Ann(AnnBenchmark),
    #[serde(rename = "ANN-GARCH")]
    AnnGarch(AnnVolBenchmark),
    #[serde(rename = "ANN-EGARCH")]
    AnnEgarch(AnnVolBenchmark),
    #[serde(rename = "HESTON")]
    Heston(HestonBenchmark),
}

impl AnnVolBenchmark {
    fn components(&self, raw: &FeatureFrame, returns: &ReturnSeries) -> Result<Matrix> {
        let s = returns
            .dates
            .binary_search(&self.filter_start)
            .map_err(|_| Error::Alignment(format!("no return dated {}", self.filter_start)))?;
        let comps = extract_components(&self.vol, &returns.dates[s..], &returns.returns[s..])?;
        self.component_scaler.transform(&comps.align(&raw.dates)?)
    }

    pub fn features(&self, raw: &FeatureFrame, returns: &ReturnSeries) -> Result<Matrix> {
        check_lag_layout(raw)?;
        let lags = self.scaler.transform(&raw.x)?;
        lags.hstack(&self.components(raw, returns)?)
    }
}

impl BenchmarkModel {
    pub fn tag(&self) -> ModelTag {
        match self {
            BenchmarkModel::Ann(_) => ModelTag::Ann,
            BenchmarkModel::AnnGarch(_) => ModelTag::AnnGarch,
            BenchmarkModel::AnnEgarch(_) => ModelTag::AnnEgarch,
            BenchmarkModel::Heston(_) => ModelTag::Heston,
        }
    }

    /// Network input width (none for Heston).
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            BenchmarkModel::Ann(a) => Some(a.net.input_dim()),
            BenchmarkModel::AnnGarch(a) | BenchmarkModel::AnnEgarch(a) => Some(a.net.input_dim()),
            BenchmarkModel::Heston(_) => None,
        }
    }

    pub fn forecast(&self, raw: &FeatureFrame, returns: &ReturnSeries) -> Result<Vec<f64>> {
        check_lag_layout(raw)?;
        match self {
            BenchmarkModel::Ann(a) => unscale(&a.target_scale, a.net.predict(&a.scaler.transform(&raw.x)?)?),
            BenchmarkModel::AnnGarch(a) | BenchmarkModel::AnnEgarch(a) => {
                unscale(&a.target_scale, a.net.predict(&a.features(raw, returns)?)?)
            }
            BenchmarkModel::Heston(h) => (0..raw.len())
                .map(|i| {
                    let v = raw.x.get(i, 0);
                    let seed = rng::stream_id(&[h.seed, day_key(raw.dates[i])]);
                    heston_forecast(&h.params.with_v0(v * v), h.n_paths, seed)
                })
                .collect(),
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match self {
            BenchmarkModel::Ann(a) => Some(a.nu),
            BenchmarkModel::AnnGarch(a) | BenchmarkModel::AnnEgarch(a) => Some(a.vol.nu()),
            BenchmarkModel::Heston(_) => None,
        }
    }
}

fn unscale(s: &TargetScale, v: Vec<f64>) -> Result<Vec<f64>> {
    Ok(v.into_iter().map(|x| s.inverse(x)).collect())
}

/// Stable per-date key for seeding.
pub(crate) fn day_key(d: chrono::NaiveDate) -> u64 {
    use chrono::Datelike;
    d.num_days_from_ce() as u64
}

fn expected_dim(tag: ModelTag) -> usize {
    match tag {
        ModelTag::Stacked => STACKER_DIM,
        ModelTag::Ann => ANN_DIM,
        ModelTag::AnnGarch => ANN_GARCH_DIM,
        ModelTag::AnnEgarch => ANN_EGARCH_DIM,
        ModelTag::Heston => 0,
    }
}

/// Tunes a benchmark network on the second-level rows (test rows out of sample).
fn tune_benchmark_net(
    tag: ModelTag,
    data: &PeriodData,
    frame: &FeatureFrame,
    settings: &TrainSettings,
) -> Result<(FeedForwardNet, TuningOutcome)> {
    check_dim(&frame.x, expected_dim(tag))?;
    let b = data.bounds;
    let (second, test) = (frame.slice(b.second()), frame.slice(b.test()));
    let tuned = tune_learner(
        LearnerTag::Ann,
        &settings.grid,
        TuningWindow {
            train: &second,
            oos: &test,
            scale: data.target_scale,
        },
        &settings.methods,
        rng::stream_id(&[settings.seed, tag as u64 + 0x10]),
    )?;
    let Fitted::Ann { net, .. } = tuned.model else {
        unreachable!("network tuning returns a network")
    };
    Ok((net, tuned.outcome))
}

pub fn train_benchmark(tag: ModelTag, data: &PeriodData, settings: &TrainSettings) -> Result<BenchmarkModel> {
    let fit_range = data.first_level_returns()?;
    let fit_returns = &data.returns.returns[fit_range.clone()];
    match tag {
        ModelTag::Stacked => Err(Error::InvalidParameter("the stacked model is not a benchmark".into())),
        ModelTag::Ann => {
            let (net, outcome) = tune_benchmark_net(tag, data, &data.scaled, settings)?;
            Ok(BenchmarkModel::Ann(AnnBenchmark {
                net,
                target_scale: data.target_scale,
                scaler: data.scaler.clone(),
                nu: student_nu(data)?,
                outcome,
            }))
        }
        ModelTag::AnnGarch | ModelTag::AnnEgarch => {
            let vol = if tag == ModelTag::AnnGarch {
                VolModel::Garch(garch_fit(fit_returns, 1, 1)?)
            } else {
                VolModel::Egarch(egarch_fit(fit_returns, 1, 1)?)
            };
            let s = *fit_range.start();
            let comps = extract_components(&vol, &data.returns.dates[s..], &data.returns.returns[s..])?;
            let raw_comps = comps.align(&data.raw.dates)?;
            let component_scaler = Scaler::fit(&raw_comps, data.bounds.first(), &comps.names)?;
            let frame = data
                .scaled
                .with_columns(&comps.names, &component_scaler.transform(&raw_comps)?)?;
            let (net, outcome) = tune_benchmark_net(tag, data, &frame, settings)?;
            let m = AnnVolBenchmark {
                net,
                target_scale: data.target_scale,
                scaler: data.scaler.clone(),
                vol,
                component_scaler,
                filter_start: data.returns.dates[s],
                outcome,
            };
            Ok(if tag == ModelTag::AnnGarch {
                BenchmarkModel::AnnGarch(m)
            } else {
                BenchmarkModel::AnnEgarch(m)
            })
        }
        ModelTag::Heston => {
            // proxy: squared trailing volatility over the same returns the GARCH fits use
            let w = crate::market_data::VOL_WINDOW;
            let (mut r, mut proxy) = (Vec::new(), Vec::new());
            for t in fit_range.filter(|&t| t >= w) {
                let v = crate::stats::std_pop(&data.returns.returns[t - w..t]);
                r.push(data.returns.returns[t]);
                proxy.push(v * v);
            }
            Ok(BenchmarkModel::Heston(HestonBenchmark {
                params: heston_calibrate(&r, &proxy)?,
                n_paths: settings.heston_paths,
                seed: rng::stream_id(&[settings.seed, HESTON_STREAM]),
            }))
        }
    }
}
