use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::learner::TargetScale;
use crate::error::{Error, Result};
use crate::market_data::{
    apply_scale, frame_from_prices, FeatureFrame, PriceSeries, ReturnSeries, Scaler, SplitBounds, SplitSpec,
    N_LAGS, VOL_WINDOW,
};

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Validation(format!("window ends ({end}) before it starts ({start})")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }

    pub fn overlaps(&self, other: &DateWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl std::fmt::Display for DateWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Everything one training period and its comparison year need.
#[derive(Debug, Clone)]
pub struct PeriodData {
    pub returns: ReturnSeries,
    pub training: DateWindow,
    pub comparison: DateWindow,
    /// Unscaled rows of the training period whose target lies inside it.
    pub raw: FeatureFrame,
    /// `raw` with predictors scaled on the first-level rows.
    pub scaled: FeatureFrame,
    pub bounds: SplitBounds,
    pub scaler: Scaler,
    /// First-level target range; used for SVR targets and stacked forecast columns.
    pub target_scale: TargetScale,
    /// Unscaled comparison-year rows.
    pub comparison_raw: FeatureFrame,
}

/// Returns feeding the first row's lags: 30 trailing windows of 5 returns.
pub const LOOKBACK: usize = N_LAGS + VOL_WINDOW - 1;

impl PeriodData {
    pub fn prepare(
        prices: &PriceSeries,
        training: DateWindow,
        comparison: DateWindow,
        split: &SplitSpec,
    ) -> Result<Self> {
        if training.overlaps(&comparison) {
            return Err(Error::Validation(format!(
                "training window {training} overlaps comparison window {comparison}"
            )));
        }
        if comparison.start < training.end {
            return Err(Error::Validation(format!(
                "comparison window {comparison} must follow training window {training}"
            )));
        }
        let (returns, _, frame) = frame_from_prices(prices)?;
        let index = returns.index_of();
        // a row's target uses returns t..t+4; keep rows whose target ends inside the window
        let keep_in = |w: &DateWindow| -> Vec<usize> {
            (0..frame.len())
                .filter(|&i| {
                    let d = frame.dates[i];
                    let t = index[&d];
                    w.contains(d)
                        && returns
                            .dates
                            .get(t + VOL_WINDOW - 1)
                            .is_some_and(|e| w.contains(*e))
                })
                .collect()
        };
        let raw = frame.select(&keep_in(&training));
        let comparison_raw = frame.select(&keep_in(&comparison));
        if comparison_raw.is_empty() {
            return Err(Error::InsufficientData(format!("no feature rows inside comparison window {comparison}")));
        }
        let bounds = split.bounds(raw.len())?;
        let scaler = Scaler::fit(&raw.x, bounds.first(), &raw.columns)?;
        let scaled = apply_scale(&raw, &scaler)?;
        let target_scale = TargetScale::fit(&raw.y[bounds.first()])?;
        Ok(Self {
            returns,
            training,
            comparison,
            raw,
            scaled,
            bounds,
            scaler,
            target_scale,
            comparison_raw,
        })
    }

    pub fn first(&self) -> FeatureFrame {
        self.scaled.slice(self.bounds.first())
    }

    pub fn second(&self) -> FeatureFrame {
        self.scaled.slice(self.bounds.second())
    }

    pub fn test(&self) -> FeatureFrame {
        self.scaled.slice(self.bounds.test())
    }

    pub fn return_index(&self, d: NaiveDate) -> Result<usize> {
        self.returns
            .dates
            .binary_search(&d)
            .map_err(|_| Error::Alignment(format!("no return dated {d}")))
    }

    /// Return-index range [start, end] behind the first-level rows, lags included.
    pub fn first_level_returns(&self) -> Result<std::ops::RangeInclusive<usize>> {
        let first = self.bounds.first();
        let i0 = self.return_index(self.raw.dates[first.start])?;
        let i1 = self.return_index(self.raw.dates[first.end - 1])?;
        Ok(i0.saturating_sub(LOOKBACK)..=i1)
    }

    /// Standardised returns r_t / V_t over the first- and second-level rows.
    pub fn standardized_returns(&self) -> Result<Vec<f64>> {
        let mut z = Vec::new();
        for i in 0..self.bounds.second_end {
            let v = self.raw.x.get(i, 0);
            if v > 0.0 {
                z.push(self.returns.returns[self.return_index(self.raw.dates[i])?] / v);
            }
        }
        Ok(z)
    }
}

/// Forecasts TRV_t by V_t.
pub fn persistence_forecast(raw: &FeatureFrame) -> Result<Vec<f64>> {
    if raw.scaler.is_some() {
        return Err(Error::Validation("persistence forecast needs unscaled lags".into()));
    }
    Ok(raw.x.column(0))
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Dimension {
            expected: actual.len(),
            got: pred.len(),
        });
    }
    Ok(crate::stats::rmse(pred, actual))
}
