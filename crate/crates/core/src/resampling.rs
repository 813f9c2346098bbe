//! Tuning schemes for dependent data: plain in-sample MSE, circular and
//! stationary block bootstraps, the maximum-entropy bootstrap and h-block
//! cross-validation, plus automatic block-length selection.

use rand::Rng as _;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::FeatureFrame;
use crate::rng::Rng;
use crate::stats;

/// Upper bound on the h-block gap.
pub const MAX_HCV_GAP: usize = 100;
pub const DEFAULT_REPLICATES: usize = 50;
pub const DEFAULT_FOLDS: usize = 5;

/// Method tags in canonical order; ties between methods resolve to the earlier one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Mmse,
    Cbb,
    Sb,
    Meb,
    Hcv,
}

impl MethodTag {
    pub const ALL: [MethodTag; 5] = [
        MethodTag::Mmse,
        MethodTag::Cbb,
        MethodTag::Sb,
        MethodTag::Meb,
        MethodTag::Hcv,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::Mmse => "MMSE",
            MethodTag::Cbb => "CBB",
            MethodTag::Sb => "SB",
            MethodTag::Meb => "MEB",
            MethodTag::Hcv => "HCV",
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A tuning scheme with its parameters. Block lengths and the HCV gap are
/// selected automatically from the training window when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ResampleMethod {
    Mmse,
    Cbb {
        #[serde(default)]
        block_len: Option<usize>,
        #[serde(default = "default_replicates")]
        replicates: usize,
    },
    Sb {
        #[serde(default)]
        mean_block_len: Option<f64>,
        #[serde(default = "default_replicates")]
        replicates: usize,
    },
    Meb {
        #[serde(default = "default_replicates")]
        replicates: usize,
    },
    Hcv {
        #[serde(default)]
        h: Option<usize>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

impl ResampleMethod {
    pub fn tag(&self) -> MethodTag {
        match self {
            ResampleMethod::Mmse => MethodTag::Mmse,
            ResampleMethod::Cbb { .. } => MethodTag::Cbb,
            ResampleMethod::Sb { .. } => MethodTag::Sb,
            ResampleMethod::Meb { .. } => MethodTag::Meb,
            ResampleMethod::Hcv { .. } => MethodTag::Hcv,
        }
    }

    /// The five schemes with automatic parameters and `replicates` bootstrap draws.
    pub fn all(replicates: usize) -> Vec<ResampleMethod> {
        vec![
            ResampleMethod::Mmse,
            ResampleMethod::Cbb {
                block_len: None,
                replicates,
            },
            ResampleMethod::Sb {
                mean_block_len: None,
                replicates,
            },
            ResampleMethod::Meb { replicates },
            ResampleMethod::Hcv {
                h: None,
                folds: DEFAULT_FOLDS,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            ResampleMethod::Mmse => Ok(()),
            ResampleMethod::Cbb { block_len, replicates } => {
                if block_len.is_some_and(|b| b < 1) {
                    return bad("CBB block length must be >= 1");
                }
                if *replicates < 1 {
                    return bad("bootstrap replicates must be >= 1");
                }
                Ok(())
            }
            ResampleMethod::Sb {
                mean_block_len,
                replicates,
            } => {
                if mean_block_len.is_some_and(|b| !(b >= 1.0)) {
                    return bad("SB mean block length must be >= 1");
                }
                if *replicates < 1 {
                    return bad("bootstrap replicates must be >= 1");
                }
                Ok(())
            }
            ResampleMethod::Meb { replicates } => {
                if *replicates < 1 {
                    return bad("bootstrap replicates must be >= 1");
                }
                Ok(())
            }
            ResampleMethod::Hcv { h, folds } => {
                if h.is_some_and(|h| h > MAX_HCV_GAP) {
                    return bad("HCV gap h must be <= 100");
                }
                if *folds < 2 {
                    return bad("HCV needs at least 2 folds");
                }
                Ok(())
            }
        }
    }
}

/// Row indices of one bootstrap replicate together with the block lengths drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSample {
    pub indices: Vec<usize>,
    /// Lengths of the blocks as drawn, before truncation to n rows.
    pub block_lens: Vec<usize>,
}

impl BootstrapSample {
    /// Rows of 0..n never drawn into the sample.
    pub fn out_of_bag(&self, n: usize) -> Vec<usize> {
        let mut seen = vec![false; n];
        for &i in &self.indices {
            seen[i] = true;
        }
        (0..n).filter(|&i| !seen[i]).collect()
    }
}

/// One h-block cross-validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockLengths {
    pub cbb: usize,
    pub sb: f64,
}

/// Politis–White automatic block length with the Patton–Politis–White
/// correction, using the flat-top lag window.
pub fn auto_block_length(series: &[f64]) -> Result<BlockLengths> {
    let n = series.len();
    if n < 50 {
        return Err(Error::InsufficientData(format!(
            "block-length selection needs >= 50 points, got {n}"
        )));
    }
    let nf = n as f64;
    let m0 = stats::mean(series);
    let eps: Vec<f64> = series.iter().map(|x| x - m0).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let b_max = (3.0 * nf.sqrt()).min(nf / 3.0).ceil();
    let kn = 5usize.max(nf.log10() as usize);
    let m_max = (nf.sqrt().ceil() as usize + kn).min(n - 2);
    let crit = 2.0 * (nf.log10() / nf).sqrt();

    let mut acv = vec![0.0; m_max + 1];
    let mut abs_acorr = vec![0.0; m_max + 1];
    let mut opt_m: Option<usize> = None;
    for i in 0..=m_max {
        let v1 = dot(&eps[i + 1..], &eps[i + 1..]);
        let v2 = dot(&eps[..n - i - 1], &eps[..n - i - 1]);
        acv[i] = dot(&eps[i..], &eps[..n - i]) / nf;
        let denom = (v1 * v2).sqrt();
        abs_acorr[i] = if denom > 0.0 {
            dot(&eps[i + 1..], &eps[..n - i - 1]).abs() / denom
        } else {
            0.0
        };
        if i >= kn && opt_m.is_none() && abs_acorr[i - kn..i].iter().all(|&a| a < crit) {
            opt_m = Some(i - kn);
        }
    }
    let m = opt_m.map_or(m_max, |o| 2 * o.max(1)).min(m_max);

    let mut g = 0.0;
    let mut lr_acv = acv[0];
    for k in 1..=m {
        let t = k as f64 / m as f64;
        let lam = if t <= 0.5 { 1.0 } else { 2.0 * (1.0 - t) };
        g += 2.0 * lam * k as f64 * acv[k];
        lr_acv += 2.0 * lam * acv[k];
    }
    if !(lr_acv > 0.0) {
        return Err(Error::Numerical("non-positive long-run variance in block-length selection".into()));
    }
    let d_sb = 2.0 * lr_acv * lr_acv;
    let d_cbb = 4.0 / 3.0 * lr_acv * lr_acv;
    let b_sb = ((2.0 * g * g) / d_sb).cbrt() * nf.cbrt();
    let b_cbb = ((2.0 * g * g) / d_cbb).cbrt() * nf.cbrt();
    Ok(BlockLengths {
        cbb: (b_cbb.min(b_max).round() as usize).max(1),
        sb: b_sb.min(b_max).max(1.0),
    })
}

/// Circular block bootstrap: ceil(n / b) blocks of `block_len` consecutive
/// indices (mod n) from uniform starts, truncated to n rows.
pub fn cbb_sample(n_rows: usize, block_len: usize, rng: &mut Rng) -> Result<BootstrapSample> {
    if block_len < 1 || block_len > n_rows {
        return Err(Error::InvalidParameter(format!(
            "CBB block length must be in [1, {n_rows}], got {block_len}"
        )));
    }
    let blocks = n_rows.div_ceil(block_len);
    let mut indices = Vec::with_capacity(blocks * block_len);
    for _ in 0..blocks {
        let start = rng.random_range(0..n_rows);
        indices.extend((0..block_len).map(|j| (start + j) % n_rows));
    }
    indices.truncate(n_rows);
    Ok(BootstrapSample {
        indices,
        block_lens: vec![block_len; blocks],
    })
}

/// Stationary bootstrap: blocks with geometric lengths of mean `mean_len`
/// (capped at n), circular wraparound.
pub fn sb_sample(n_rows: usize, mean_len: f64, rng: &mut Rng) -> Result<BootstrapSample> {
    if !(mean_len >= 1.0) || n_rows == 0 {
        return Err(Error::InvalidParameter(format!(
            "SB mean block length must be >= 1, got {mean_len}"
        )));
    }
    let geo = Geometric::new(1.0 / mean_len).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut indices = Vec::with_capacity(n_rows);
    let mut block_lens = Vec::new();
    while indices.len() < n_rows {
        let start = rng.random_range(0..n_rows);
        // Geometric counts failures before the first success.
        let len = (geo.sample(rng).saturating_add(1)).min(n_rows as u64) as usize;
        block_lens.push(len);
        indices.extend((0..len).map(|j| (start + j) % n_rows));
    }
    indices.truncate(n_rows);
    Ok(BootstrapSample { indices, block_lens })
}

/// Maximum-entropy bootstrap replicate of `series`.
///
/// The maximum-entropy density puts mass 1/n on each of the n intervals cut
/// by the midpoints of consecutive order statistics: uniform on interior
/// intervals and exponential on the two unbounded tails, with the tail scales
/// chosen so every interval's mean matches the mean-preserving constraint.
/// Sorted uniform draws are mapped through its quantile function and placed
/// back in the rank order of the original series.
pub fn meb_sample(series: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("MEB needs >= 4 points, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| series[i]).collect();
    if sorted[n - 1] <= sorted[0] {
        return Err(Error::Numerical("MEB density is degenerate for a constant series".into()));
    }

    let mut uniforms: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    uniforms.sort_by(f64::total_cmp);
    let mut draws: Vec<f64> = uniforms.iter().map(|&u| me_quantile(&sorted, u)).collect();
    // guard against rounding at interval joins
    draws.sort_by(f64::total_cmp);

    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = draws[rank];
    }
    Ok(out)
}

/// Quantile function of the maximum-entropy density built on `sorted`.
fn me_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let z = |k: usize| 0.5 * (sorted[k - 1] + sorted[k]); // z_k, k = 1..n-1
    let left_scale = 0.25 * (sorted[1] - sorted[0]);
    let right_scale = 0.25 * (sorted[n - 1] - sorted[n - 2]);
    let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    let np = p * nf;
    if np <= 1.0 {
        z(1) + left_scale * np.ln()
    } else if np > nf - 1.0 {
        z(n - 1) - right_scale * (nf * (1.0 - p)).ln()
    } else {
        let k = (np.floor() as usize).clamp(1, n - 2);
        let frac = np - k as f64;
        z(k) + frac * (z(k + 1) - z(k))
    }
}

/// Gap h in [1, 100] at which the target is least correlated with the
/// predictors shifted h rows in either direction. Correlations inside the
/// Bonferroni-adjusted 5% band around zero count as zero, and ties resolve to
/// the smaller h.
pub fn hcv_select_h(frame: &FeatureFrame) -> Result<usize> {
    let n = frame.len();
    if n < 150 {
        return Err(Error::InsufficientData(format!(
            "HCV gap selection needs >= 150 rows, got {n}"
        )));
    }
    let cols: Vec<Vec<f64>> = (0..frame.x.cols()).map(|j| frame.x.column(j)).collect();
    let y = &frame.y;
    let comparisons = 2.0 * cols.len() as f64;
    let z = stats::normal_quantile(1.0 - 0.05 / (2.0 * comparisons));
    let h_max = MAX_HCV_GAP.min(n - 50);

    let mut best = (f64::INFINITY, 1usize);
    for h in 1..=h_max {
        let m = n - h;
        let band = z / (m as f64).sqrt();
        let worst = cols
            .iter()
            .flat_map(|c| {
                [
                    stats::correlation(&y[h..], &c[..m]).abs(),
                    stats::correlation(&y[..m], &c[h..]).abs(),
                ]
            })
            .fold(0.0f64, f64::max);
        let score = (worst - band).max(0.0);
        if score < best.0 {
            best = (score, h);
        }
    }
    Ok(best.1)
}

/// `k` contiguous validation folds; each training set drops its fold and the
/// `h` rows on either side.
pub fn hcv_folds(n_rows: usize, h: usize, k: usize) -> Result<Vec<Fold>> {
    if k < 2 || n_rows <= k * (2 * h + 1) {
        return Err(Error::InvalidParameter(format!(
            "h-block CV infeasible: n = {n_rows}, k = {k}, h = {h}"
        )));
    }
    Ok((0..k)
        .map(|f| {
            let start = f * n_rows / k;
            let end = (f + 1) * n_rows / k;
            let train = (0..n_rows)
                .filter(|&j| j + h < start || j >= end + h)
                .collect();
            Fold {
                train,
                validation: (start..end).collect(),
            }
        })
        .collect())
}
