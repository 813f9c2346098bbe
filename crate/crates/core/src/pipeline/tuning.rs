//! Grid search under each tuning scheme and out-of-sample selection among the
//! schemes' winners.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, Hyper, LearnerTag};
use super::learner::{fit_learner, Fitted, TargetScale};
use crate::error::{Error, Result};
use crate::market_data::FeatureFrame;
use crate::matrix::Matrix;
use crate::resampling::{
    auto_block_length, cbb_sample, hcv_folds, hcv_select_h, meb_sample, sb_sample, BlockLengths, MethodTag,
    ResampleMethod,
};
use crate::rng;
use crate::stats;

const FULL_FIT: u64 = 0xF0;

/// Training window, the window used to compare the schemes' winners, and the
/// target scale shared by every fit.
#[derive(Debug, Clone, Copy)]
pub struct TuningWindow<'a> {
    pub train: &'a FeatureFrame,
    pub oos: &'a FeatureFrame,
    pub scale: TargetScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: MethodTag,
    /// Winning cell under this scheme's inner criterion.
    pub hyper: Option<Hyper>,
    /// Inner criterion (MSE) of the winning cell.
    pub criterion: Option<f64>,
    pub oos_rmse: Option<f64>,
    pub failed_cells: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub learner: LearnerTag,
    pub chosen_method: MethodTag,
    pub hyper: Hyper,
    pub oos_rmse: f64,
    pub methods: Vec<MethodOutcome>,
    pub block_lengths: Option<BlockLengths>,
    pub hcv_h: Option<usize>,
}

/// An outcome together with the chosen cell fitted on the whole training window.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub outcome: TuningOutcome,
    pub model: Fitted,
}

/// Seed of the full-window fit of any cell; refitting a chosen cell with it
/// reproduces the tuned model exactly.
pub fn full_fit_seed(seed: u64, learner: LearnerTag) -> u64 {
    rng::stream_id(&[seed, learner.id(), FULL_FIT])
}

/// Validation units of one scheme: each trains on some rows (or on a
/// replicate frame) and is scored on rows of the original window.
enum Plan {
    Mmse,
    Rows(Vec<(Vec<usize>, Vec<usize>)>),
    Frames(Vec<(Matrix, Vec<f64>)>),
}

fn method_id(m: MethodTag) -> u64 {
    m as u64 + 1
}

fn build_plan(
    method: &ResampleMethod,
    train: &FeatureFrame,
    seed: u64,
    blocks: &mut Option<BlockLengths>,
    hcv_h: &mut Option<usize>,
) -> Result<Plan> {
    method.validate()?;
    let n = train.len();
    let tag = method.tag();
    let mut auto_blocks = || -> Result<BlockLengths> {
        if blocks.is_none() {
            *blocks = Some(auto_block_length(&train.y)?);
        }
        Ok(blocks.unwrap())
    };
    let bootstrap = |draw: &dyn Fn(&mut rng::Rng) -> Result<Vec<usize>>, reps: usize| -> Result<Plan> {
        let mut units = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut g = rng::derive(rng::stream_id(&[seed, method_id(tag)]), r as u64);
            let idx = draw(&mut g)?;
            let mut seen = vec![false; n];
            for &i in &idx {
                seen[i] = true;
            }
            let oob: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
            units.push((idx, oob));
        }
        Ok(Plan::Rows(units))
    };
    match method {
        ResampleMethod::Mmse => Ok(Plan::Mmse),
        ResampleMethod::Cbb { block_len, replicates } => {
            let b = match block_len {
                Some(b) => *b,
                None => auto_blocks()?.cbb,
            };
            bootstrap(&|g| Ok(cbb_sample(n, b, g)?.indices), *replicates)
        }
        ResampleMethod::Sb {
            mean_block_len,
            replicates,
        } => {
            let b = match mean_block_len {
                Some(b) => *b,
                None => auto_blocks()?.sb,
            };
            bootstrap(&|g| Ok(sb_sample(n, b, g)?.indices), *replicates)
        }
        ResampleMethod::Meb { replicates } => {
            let cols: Vec<Vec<f64>> = (0..train.x.cols()).map(|j| train.x.column(j)).collect();
            let mut units = Vec::with_capacity(*replicates);
            for r in 0..*replicates {
                let mut g = rng::derive(rng::stream_id(&[seed, method_id(tag)]), r as u64);
                let mut rep_cols = Vec::with_capacity(cols.len());
                for c in &cols {
                    rep_cols.push(meb_sample(c, &mut g)?);
                }
                let y = meb_sample(&train.y, &mut g)?;
                units.push((Matrix::from_columns(&rep_cols)?, y));
            }
            Ok(Plan::Frames(units))
        }
        ResampleMethod::Hcv { h, folds } => {
            let h = match h {
                Some(h) => *h,
                None => hcv_select_h(train)?,
            };
            *hcv_h = Some(h);
            // keep the selected gap; drop folds until they fit
            let k = (2..=*folds).rev().find(|&k| n > k * (2 * h + 1)).unwrap_or(*folds);
            let units = hcv_folds(n, h, k)?
                .into_iter()
                .map(|f| (f.train, f.validation))
                .collect();
            Ok(Plan::Rows(units))
        }
    }
}

fn unit_count(plan: &Plan) -> usize {
    match plan {
        Plan::Mmse => 0,
        Plan::Rows(u) => u.len(),
        Plan::Frames(u) => u.len(),
    }
}

/// Validation MSE of one (cell, unit) pair; `None` when the unit has no
/// validation rows.
fn unit_mse(
    plan: &Plan,
    unit: usize,
    hyper: &Hyper,
    train: &FeatureFrame,
    scale: &TargetScale,
    seed: u64,
) -> Result<Option<f64>> {
    match plan {
        Plan::Mmse => unreachable!("MMSE uses the full-window fit"),
        Plan::Rows(units) => {
            let (fit_rows, val_rows) = &units[unit];
            if val_rows.is_empty() {
                return Ok(None);
            }
            let x = train.x.select_rows(fit_rows);
            let y: Vec<f64> = fit_rows.iter().map(|&i| train.y[i]).collect();
            let model = fit_learner(hyper, &x, &y, scale, seed)?;
            let pred = model.predict(&train.x.select_rows(val_rows))?;
            let actual: Vec<f64> = val_rows.iter().map(|&i| train.y[i]).collect();
            Ok(Some(stats::mse(&pred, &actual)))
        }
        Plan::Frames(units) => {
            let (x, y) = &units[unit];
            let model = fit_learner(hyper, x, y, scale, seed)?;
            Ok(Some(stats::mse(&model.predict(&train.x)?, &train.y)))
        }
    }
}

/// Grid search for `learner` under each scheme in `methods`, then selection of
/// the scheme whose winner has the lowest RMSE on `window.oos`. Exact ties go
/// to the earlier scheme in canonical order.
pub fn tune_learner(
    learner: LearnerTag,
    grid: &GridSpec,
    window: TuningWindow<'_>,
    methods: &[ResampleMethod],
    seed: u64,
) -> Result<Tuned> {
    let cells = grid.cells(learner);
    if cells.is_empty() {
        return Err(Error::InvalidParameter(format!("empty grid for {learner}")));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no tuning methods given".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort_by_key(|m| m.tag());
    if methods.windows(2).any(|w| w[0].tag() == w[1].tag()) {
        return Err(Error::InvalidParameter("each tuning method may appear once".into()));
    }
    let train = window.train;
    let scale = window.scale;
    if train.x.cols() != window.oos.x.cols() {
        return Err(Error::Dimension {
            expected: train.x.cols(),
            got: window.oos.x.cols(),
        });
    }

    let mut blocks = None;
    let mut hcv_h = None;
    let plans: Vec<Result<Plan>> = methods
        .iter()
        .map(|m| build_plan(m, train, seed, &mut blocks, &mut hcv_h))
        .collect();

    let full_seed = full_fit_seed(seed, learner);
    let fit_full = |c: usize| fit_learner(&cells[c], &train.x, &train.y, &scale, full_seed);
    let mut full: Vec<Option<Result<Fitted>>> = (0..cells.len()).map(|_| None).collect();
    let has_mmse = methods.iter().any(|m| m.tag() == MethodTag::Mmse);
    if has_mmse {
        let fits: Vec<Result<Fitted>> = (0..cells.len()).into_par_iter().map(fit_full).collect();
        for (slot, f) in full.iter_mut().zip(fits) {
            *slot = Some(f);
        }
    }

    // (method index, cell, unit) tasks, evaluated in parallel and merged in order
    let mut tasks = Vec::new();
    for (mi, plan) in plans.iter().enumerate() {
        if let Ok(p) = plan {
            for c in 0..cells.len() {
                for u in 0..unit_count(p) {
                    tasks.push((mi, c, u));
                }
            }
        }
    }
    let results: Vec<Result<Option<f64>>> = tasks
        .par_iter()
        .map(|&(mi, c, u)| {
            let plan = plans[mi].as_ref().expect("planned");
            let s = rng::stream_id(&[seed, learner.id(), method_id(methods[mi].tag()), c as u64, u as u64]);
            unit_mse(plan, u, &cells[c], train, &scale, s)
        })
        .collect();

    // inner scores per (method, cell)
    let mut scores: Vec<Vec<Option<f64>>> = vec![vec![None; cells.len()]; methods.len()];
    let mut acc: Vec<Vec<(f64, usize, bool)>> = vec![vec![(0.0, 0, false); cells.len()]; methods.len()];
    for (&(mi, c, _), r) in tasks.iter().zip(&results) {
        let a = &mut acc[mi][c];
        match r {
            Ok(Some(v)) if v.is_finite() => {
                a.0 += v;
                a.1 += 1;
            }
            Ok(_) => {}
            Err(_) => a.2 = true,
        }
    }
    for (mi, plan) in plans.iter().enumerate() {
        match plan {
            Ok(Plan::Mmse) => {
                for c in 0..cells.len() {
                    if let Some(Ok(model)) = &full[c] {
                        if let Ok(pred) = model.predict(&train.x) {
                            let v = stats::mse(&pred, &train.y);
                            if v.is_finite() {
                                scores[mi][c] = Some(v);
                            }
                        }
                    }
                }
            }
            Ok(_) => {
                for c in 0..cells.len() {
                    let (sum, k, failed) = acc[mi][c];
                    if !failed && k > 0 {
                        scores[mi][c] = Some(sum / k as f64);
                    }
                }
            }
            Err(_) => {}
        }
    }

    // winners per method and their out-of-sample RMSE
    let winners: Vec<Option<usize>> = scores
        .iter()
        .map(|s| {
            let mut best: Option<(f64, usize)> = None;
            for (c, v) in s.iter().enumerate() {
                if let Some(v) = v {
                    if best.is_none_or(|b| *v < b.0) {
                        best = Some((*v, c));
                    }
                }
            }
            best.map(|b| b.1)
        })
        .collect();
    let missing: Vec<usize> = {
        let mut m: Vec<usize> = winners.iter().flatten().copied().filter(|&c| full[c].is_none()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let extra: Vec<(usize, Result<Fitted>)> = missing.par_iter().map(|&c| (c, fit_full(c))).collect();
    for (c, f) in extra {
        full[c] = Some(f);
    }

    let mut outcomes = Vec::with_capacity(methods.len());
    let mut best: Option<(f64, usize, usize)> = None;
    for (mi, m) in methods.iter().enumerate() {
        let failed_cells = scores[mi].iter().filter(|s| s.is_none()).count();
        let mut out = MethodOutcome {
            method: m.tag(),
            hyper: None,
            criterion: None,
            oos_rmse: None,
            failed_cells,
            error: None,
        };
        match (&plans[mi], winners[mi]) {
            (Err(e), _) => out.error = Some(e.to_string()),
            (Ok(_), None) => out.error = Some("every grid cell failed".into()),
            (Ok(_), Some(c)) => {
                out.hyper = Some(cells[c]);
                out.criterion = scores[mi][c];
                match full[c].as_ref().expect("fitted") {
                    Err(e) => out.error = Some(format!("refit failed: {e}")),
                    Ok(model) => match model.predict(&window.oos.x) {
                        Err(e) => out.error = Some(e.to_string()),
                        Ok(pred) => {
                            let r = stats::rmse(&pred, &window.oos.y);
                            if r.is_finite() {
                                out.oos_rmse = Some(r);
                                if best.is_none_or(|b| r < b.0) {
                                    best = Some((r, mi, c));
                                }
                            } else {
                                out.error = Some("non-finite out-of-sample RMSE".into());
                            }
                        }
                    },
                }
            }
        }
        outcomes.push(out);
    }

    let Some((rmse, mi, c)) = best else {
        let why: Vec<String> = outcomes
            .iter()
            .map(|o| format!("{}: {}", o.method, o.error.as_deref().unwrap_or("failed")))
            .collect();
        return Err(Error::Numerical(format!("tuning {learner} failed under every method ({})", why.join("; "))));
    };
    let model = full[c].take().expect("fitted").expect("winner fit succeeded");
    Ok(Tuned {
        outcome: TuningOutcome {
            learner,
            chosen_method: methods[mi].tag(),
            hyper: cells[c],
            oos_rmse: rmse,
            methods: outcomes,
            block_lengths: blocks,
            hcv_h,
        },
        model,
    })
}
