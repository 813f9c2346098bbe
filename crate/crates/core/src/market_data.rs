//! Price ingestion, return and volatility construction, lagged feature frames,
//! min–max scaling, chronological splits and the stationarity / distribution
//! diagnostics run before fitting.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats;

pub const DATE_FORMAT: &str = "%Y-%m-%d";
/// Window of the trailing volatility and of the realized-volatility target.
pub const VOL_WINDOW: usize = 5;
/// Number of lagged volatilities per feature row.
pub const N_LAGS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::Dimension {
                expected: dates.len(),
                got: closes.len(),
            });
        }
        if let Some(w) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "dates must be strictly increasing ({} then {})",
                dates[w],
                dates[w + 1]
            )));
        }
        if let Some(i) = closes.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Validation(format!(
                "close on {} must be positive, got {}",
                dates[i], closes[i]
            )));
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn index_of(&self) -> HashMap<NaiveDate, usize> {
        self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl VolSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads a `date,adj_close` CSV. Rows are sorted by date; a repeated date keeps
/// its last occurrence in file order.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let f = std::fs::File::open(path.as_ref())?;
    parse_prices(f)
}

pub fn parse_prices<R: Read>(reader: R) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (di, ci) = match (col("date"), col("adj_close")) {
        (Some(d), Some(c)) => (d, c),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `date,adj_close`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            })
        }
    };

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| {
            rec.get(i).ok_or_else(|| Error::Parse {
                line,
                msg: "missing field".into(),
            })
        };
        let date = NaiveDate::parse_from_str(field(di)?, DATE_FORMAT).map_err(|e| Error::Parse {
            line,
            msg: format!("bad date `{}`: {e}", field(di).unwrap_or("")),
        })?;
        let raw = field(ci)?;
        let close: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad price `{raw}`"),
        })?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::Validation(format!(
                "line {line} ({date}): adj_close must be positive, got {close}"
            )));
        }
        rows.push((date, close, line));
    }

    rows.sort_by_key(|r| r.0);
    let mut dates: Vec<NaiveDate> = Vec::with_capacity(rows.len());
    let mut closes: Vec<f64> = Vec::with_capacity(rows.len());
    for (d, c, _) in rows {
        if dates.last() == Some(&d) {
            *closes.last_mut().expect("parallel vectors") = c;
        } else {
            dates.push(d);
            closes.push(c);
        }
    }
    PriceSeries::new(dates, closes)
}

pub fn write_prices<W: Write>(w: W, prices: &PriceSeries) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "adj_close"])?;
    for (d, c) in prices.dates.iter().zip(&prices.closes) {
        wtr.write_record([d.format(DATE_FORMAT).to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Daily log-returns, dated by the later close.
pub fn log_returns(p: &PriceSeries) -> Result<ReturnSeries> {
    if p.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 prices for returns, got {}",
            p.len()
        )));
    }
    let returns = p.closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(ReturnSeries {
        dates: p.dates[1..].to_vec(),
        returns,
    })
}

fn check_window(len: usize, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("volatility window must be >= 2, got {n}")));
    }
    if len < n {
        return Err(Error::InsufficientData(format!(
            "need at least {n} returns, got {len}"
        )));
    }
    Ok(())
}

/// Trailing volatility: the value dated t is the population standard deviation
/// of the `n` returns strictly before t, so it is observable at t.
pub fn trailing_vol(r: &ReturnSeries, n: usize) -> Result<VolSeries> {
    check_window(r.len(), n)?;
    let values = (n..r.len()).map(|t| stats::std_pop(&r.returns[t - n..t])).collect();
    Ok(VolSeries {
        dates: r.dates[n..].to_vec(),
        values,
    })
}

/// True realized volatility: population standard deviation of the `n` returns
/// starting at t (inclusive), i.e. the forward window [t, t + n - 1].
pub fn true_realized_vol(r: &ReturnSeries, n: usize) -> Result<VolSeries> {
    check_window(r.len(), n)?;
    let values = (0..=r.len() - n)
        .map(|t| stats::std_pop(&r.returns[t..t + n]))
        .collect();
    Ok(VolSeries {
        dates: r.dates[..=r.len() - n].to_vec(),
        values,
    })
}

/// Per-column min–max scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaler {
    /// Fits (min, max) per column on the given rows of `x`.
    pub fn fit(x: &Matrix, rows: std::ops::Range<usize>, names: &[String]) -> Result<Self> {
        if rows.is_empty() || rows.end > x.rows() {
            return Err(Error::InsufficientData("scaler needs a non-empty row range".into()));
        }
        let mut mins = vec![f64::INFINITY; x.cols()];
        let mut maxs = vec![f64::NEG_INFINITY; x.cols()];
        for i in rows {
            for (j, &v) in x.row(i).iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        for j in 0..x.cols() {
            if maxs[j] <= mins[j] {
                let column = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(Error::DegenerateScale { column });
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..x.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mins[j]) / (self.maxs[j] - self.mins[j]);
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..x.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * (self.maxs[j] - self.mins[j]) + self.mins[j];
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mins.len() {
            return Err(Error::Dimension {
                expected: self.mins.len(),
                got: x.cols(),
            });
        }
        Ok(())
    }
}

/// Per-date predictor rows plus the realized-volatility target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Set once the predictors have been scaled.
    pub scaler: Option<Scaler>,
}

pub fn lag_column_names(lags: usize) -> Vec<String> {
    (0..lags).map(|k| format!("V_lag{k:02}")).collect()
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureFrame {
        FeatureFrame {
            dates: self.dates[range.clone()].to_vec(),
            columns: self.columns.clone(),
            x: self.x.slice_rows(range.clone()),
            y: self.y[range].to_vec(),
            scaler: self.scaler.clone(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> FeatureFrame {
        FeatureFrame {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            columns: self.columns.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            scaler: self.scaler.clone(),
        }
    }

    /// Rows whose date falls in `[start, end]`.
    pub fn between(&self, start: NaiveDate, end: NaiveDate) -> FeatureFrame {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.dates[i] >= start && self.dates[i] <= end)
            .collect();
        self.select(&idx)
    }

    /// Appends named predictor columns.
    pub fn with_columns(&self, names: &[String], extra: &Matrix) -> Result<FeatureFrame> {
        if names.len() != extra.cols() {
            return Err(Error::Dimension {
                expected: extra.cols(),
                got: names.len(),
            });
        }
        let mut columns = self.columns.clone();
        columns.extend(names.iter().cloned());
        Ok(FeatureFrame {
            dates: self.dates.clone(),
            columns,
            x: self.x.hstack(extra)?,
            y: self.y.clone(),
            scaler: None,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("trv".into());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.dates[i].format(DATE_FORMAT).to_string()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureFrame> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "date" || &headers[headers.len() - 1] != "trv" {
            return Err(Error::Parse {
                line: 1,
                msg: "feature header must be `date,<predictors...>,trv`".into(),
            });
        }
        let columns: Vec<String> = headers.iter().skip(1).take(headers.len() - 2).map(String::from).collect();
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |msg: String| Error::Parse { line, msg };
            dates.push(NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|e| bad(e.to_string()))?);
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse::<f64>).collect();
            let mut vals = vals.map_err(|e| bad(e.to_string()))?;
            y.push(vals.pop().ok_or_else(|| bad("empty row".into()))?);
            rows.push(vals);
        }
        Ok(FeatureFrame {
            dates,
            columns,
            x: Matrix::from_rows(&rows)?,
            y,
            scaler: None,
        })
    }
}

/// Rows at date t carry (V_t, V_{t-1}, ..., V_{t-lags+1}) and the target TRV_t.
/// Dates lacking a full lag history or a target are dropped.
pub fn build_features(v: &VolSeries, trv: &VolSeries, lags: usize) -> Result<FeatureFrame> {
    if lags == 0 {
        return Err(Error::InvalidParameter("lags must be >= 1".into()));
    }
    if v.dates.windows(2).any(|w| w[0] >= w[1]) || trv.dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Alignment("volatility dates must be strictly increasing".into()));
    }
    let target: HashMap<NaiveDate, usize> = trv.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    if !v.dates.iter().any(|d| target.contains_key(d)) {
        return Err(Error::Alignment(
            "trailing volatility and realized-volatility target share no dates".into(),
        ));
    }

    let mut dates = Vec::new();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for i in lags.saturating_sub(1)..v.len() {
        let Some(&j) = target.get(&v.dates[i]) else {
            continue;
        };
        dates.push(v.dates[i]);
        data.extend((0..lags).map(|k| v.values[i - k]));
        y.push(trv.values[j]);
    }
    if dates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no date has both {lags} lagged volatilities and a realized-volatility target"
        )));
    }
    Ok(FeatureFrame {
        x: Matrix::new(dates.len(), lags, data)?,
        dates,
        columns: lag_column_names(lags),
        y,
        scaler: None,
    })
}

/// Prices to the unscaled 30-lag frame, in one step.
pub fn frame_from_prices(p: &PriceSeries) -> Result<(ReturnSeries, VolSeries, FeatureFrame)> {
    let r = log_returns(p)?;
    let v = trailing_vol(&r, VOL_WINDOW)?;
    let trv = true_realized_vol(&r, VOL_WINDOW)?;
    let frame = build_features(&v, &trv, N_LAGS)?;
    Ok((r, v, frame))
}

/// Fits the scaler on `fit_rows` and applies it to every row. Values outside
/// the fitted range are left unclipped.
pub fn fit_scale(frame: &FeatureFrame, fit_rows: std::ops::Range<usize>) -> Result<FeatureFrame> {
    let scaler = Scaler::fit(&frame.x, fit_rows, &frame.columns)?;
    apply_scale(frame, &scaler)
}

pub fn apply_scale(frame: &FeatureFrame, scaler: &Scaler) -> Result<FeatureFrame> {
    Ok(FeatureFrame {
        dates: frame.dates.clone(),
        columns: frame.columns.clone(),
        x: scaler.transform(&frame.x)?,
        y: frame.y.clone(),
        scaler: Some(scaler.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub first: f64,
    pub second: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            first: 0.25,
            second: 0.50,
            test: 0.25,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.first, self.second, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Boundaries floor(f1 n) and floor((f1 + f2) n).
    pub fn bounds(&self, n: usize) -> Result<SplitBounds> {
        self.validate()?;
        if n < 12 {
            return Err(Error::InsufficientData(format!("need at least 12 rows to split, got {n}")));
        }
        let a = (self.first * n as f64 + 1e-9).floor() as usize;
        let b = ((self.first + self.second) * n as f64 + 1e-9).floor() as usize;
        if a == 0 || b <= a || b >= n {
            return Err(Error::InsufficientData(format!("split of {n} rows leaves an empty part")));
        }
        Ok(SplitBounds { first_end: a, second_end: b, len: n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub first_end: usize,
    pub second_end: usize,
    pub len: usize,
}

impl SplitBounds {
    pub fn first(&self) -> std::ops::Range<usize> {
        0..self.first_end
    }
    pub fn second(&self) -> std::ops::Range<usize> {
        self.first_end..self.second_end
    }
    pub fn test(&self) -> std::ops::Range<usize> {
        self.second_end..self.len
    }
}

/// Contiguous chronological partition into (first-level, second-level, test).
pub fn chronological_split(
    frame: &FeatureFrame,
    spec: &SplitSpec,
) -> Result<(FeatureFrame, FeatureFrame, FeatureFrame)> {
    let b = spec.bounds(frame.len())?;
    Ok((frame.slice(b.first()), frame.slice(b.second()), frame.slice(b.test())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags: usize,
    pub nobs: usize,
}

/// Schwert's rule floor(12 (n/100)^(1/4)).
pub fn schwert_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Augmented Dickey–Fuller t-statistic (constant, no trend).
pub fn adf_test(series: &[f64]) -> Result<AdfResult> {
    let n = series.len();
    if n < 25 {
        return Err(Error::InsufficientData(format!("ADF needs >= 25 points, got {n}")));
    }
    adf_with_lags(series, schwert_lags(n))
}

pub fn adf_with_lags(series: &[f64], p: usize) -> Result<AdfResult> {
    let n = series.len();
    let dx: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    // dx[t-1] = x_t - x_{t-1}; regress dx for t in p+1..n
    let k = p + 2;
    if n < p + 2 || n - 1 - p <= k {
        return Err(Error::InsufficientData(format!("ADF with {p} lags needs more than {n} points")));
    }
    let nobs = n - 1 - p;
    let mut design = DMatrix::<f64>::zeros(nobs, k);
    let mut resp = DVector::<f64>::zeros(nobs);
    for (row, t) in (p + 1..n).enumerate() {
        resp[row] = dx[t - 1];
        design[(row, 0)] = 1.0;
        design[(row, 1)] = series[t - 1];
        for i in 1..=p {
            design[(row, 1 + i)] = dx[t - 1 - i];
        }
    }
    let xtx = design.transpose() * &design;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular ADF regression".into()))?;
    let beta = chol.solve(&(design.transpose() * &resp));
    let resid = &resp - &design * &beta;
    let s2 = resid.norm_squared() / (nobs - k) as f64;
    let inv = chol.inverse();
    let se = (s2 * inv[(1, 1)]).sqrt();
    if !(se.is_finite() && se > 0.0) {
        return Err(Error::Numerical("degenerate ADF standard error".into()));
    }
    Ok(AdfResult {
        statistic: beta[1] / se,
        lags: p,
        nobs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test needs two non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// Kolmogorov survival function Q(λ) = 2 Σ (-1)^{j-1} exp(-2 j² λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() <= 1e-12 * sum.abs() || term.abs() <= 1e-300 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    // series failed to converge (tiny λ); the distribution is essentially at 1
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

pub fn describe(xs: &[f64]) -> Moments {
    Moments {
        mean: stats::mean(xs),
        std: stats::std_pop(xs),
        skewness: stats::skewness(xs),
        kurtosis: stats::kurtosis(xs),
    }
}
