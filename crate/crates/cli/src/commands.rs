use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use volstack_core::garch::VolModel;
use volstack_core::market_data::{adf_test, describe, ks_two_sample, parse_prices, write_prices};
use volstack_core::pipeline::{
    backtest, model_rmse, persistence_forecast, persistence_rmse, save_model, load_model, train_benchmark,
    train_stacked, tune_first_level, BacktestReport, BenchmarkModel, ForecastModel, ModelTag, PeriodData,
    RmseRow, StackedModel, TrainedModel, TuningOutcome,
};
use volstack_core::{synthetic, FeatureFrame, PriceSeries};

use crate::config::{PeriodConfig, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::manifest::{ChoiceRow, Manifest, ModelRow};

pub const TUNING_FILE: &str = "tuning.json";
pub const TRAIN_FILE: &str = "train.json";
pub const BACKTEST_FILE: &str = "backtest.csv";
pub const RMSE_FILE: &str = "rmse.csv";
pub const RISK_FILE: &str = "risk.csv";
pub const FORECAST_FILE: &str = "forecasts.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Loaded configuration, prices and manifest shared by the pipeline commands.
pub struct Ctx {
    pub cfg: RunConfig,
    pub prices: PriceSeries,
    pub manifest: Manifest,
}

impl Ctx {
    pub fn open(cfg: RunConfig) -> CliResult<Self> {
        let bytes = std::fs::read(&cfg.data).map_err(|e| CliError::io(&cfg.data, e))?;
        let sha: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        let prices = parse_prices(bytes.as_slice()).context(|| cfg.data.display().to_string())?;
        std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        let manifest = Manifest::open(&cfg, &sha)?;
        Ok(Self { cfg, prices, manifest })
    }

    fn period_dir(&self, p: &PeriodConfig) -> CliResult<PathBuf> {
        let d = self.cfg.out.join(&p.name);
        std::fs::create_dir_all(d.join("models")).map_err(|e| CliError::io(&d, e))?;
        Ok(d)
    }

    fn prepare(&self, p: &PeriodConfig) -> CliResult<PeriodData> {
        PeriodData::prepare(&self.prices, p.training, p.comparison, &self.cfg.split)
            .context(|| format!("period {}", p.name))
    }

    /// Runs `f`, records its wall-clock time and saves the manifest.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let t0 = Instant::now();
        let out = f(self)?;
        self.manifest.timing.insert(name.to_string(), t0.elapsed().as_secs_f64());
        self.manifest.save(&self.cfg.out)?;
        Ok(out)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> volstack_core::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    f(&mut buf).context(|| path.display().to_string())?;
    write_bytes(path, &buf)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    write_bytes(path, (text + "\n").as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str, command: &'static str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|_| CliError::Missing {
        what: what.into(),
        path: path.to_path_buf(),
        command,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Core {
        context: path.display().to_string(),
        source: e.into(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub period: String,
    pub window: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub adf_statistic: Option<f64>,
    pub adf_lags: Option<usize>,
    /// KS against the previous window of the same period.
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
}

pub fn ingest(ctx: &mut Ctx) -> CliResult<Vec<DiagnosticRow>> {
    let mut rows = Vec::new();
    for p in ctx.cfg.periods.clone() {
        let data = ctx.prepare(&p)?;
        let dir = ctx.period_dir(&p)?;
        write_with(&dir.join("features.csv"), |w| data.raw.write_csv(w))?;
        write_with(&dir.join("comparison_features.csv"), |w| data.comparison_raw.write_csv(w))?;

        let b = data.bounds;
        let windows: [(&str, FeatureFrame); 4] = [
            ("first-level", data.raw.slice(b.first())),
            ("second-level", data.raw.slice(b.second())),
            ("test", data.raw.slice(b.test())),
            ("comparison", data.comparison_raw.clone()),
        ];
        let mut prev: Option<&[f64]> = None;
        for (name, f) in &windows {
            let m = describe(&f.y);
            let adf = adf_test(&f.y).ok();
            let ks = prev.and_then(|a| ks_two_sample(a, &f.y).ok());
            rows.push(DiagnosticRow {
                period: p.name.clone(),
                window: name.to_string(),
                start: f.dates[0],
                end: *f.dates.last().expect("non-empty window"),
                n: f.len(),
                mean: m.mean,
                std: m.std,
                skewness: m.skewness,
                kurtosis: m.kurtosis,
                adf_statistic: adf.map(|a| a.statistic),
                adf_lags: adf.map(|a| a.lags),
                ks_statistic: ks.map(|k| k.statistic),
                ks_p_value: ks.map(|k| k.p_value),
            });
            prev = Some(&f.y);
        }
    }
    let path = ctx.cfg.out.join(DIAGNOSTICS_FILE);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        wtr.serialize(r).map_err(|e| CliError::Core {
            context: path.display().to_string(),
            source: e.into(),
        })?;
    }
    write_bytes(&path, &wtr.into_inner().expect("in-memory writer"))?;
    write_bytes(&ctx.cfg.out.join("diagnostics.txt"), diagnostics_text(&rows).as_bytes())?;
    Ok(rows)
}

fn diagnostics_text(rows: &[DiagnosticRow]) -> String {
    let mut s = String::from("TRV diagnostics (ADF: constant, no trend; KS against the previous window)\n");
    let _ = writeln!(
        s,
        "{:<12}{:<14}{:>24}{:>6}{:>11}{:>11}{:>9}{:>9}{:>9}",
        "period", "window", "dates", "n", "mean", "std", "ADF", "KS", "KS p"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12}{:<14}{:>24}{:>6}{:>11.5}{:>11.5}{:>9}{:>9}{:>9}",
            r.period,
            r.window,
            format!("{}..{}", r.start, r.end),
            r.n,
            r.mean,
            r.std,
            r.adf_statistic.map_or("-".into(), |v| format!("{v:.2}")),
            r.ks_statistic.map_or("-".into(), |v| format!("{v:.3}")),
            r.ks_p_value.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
    s
}

// ---------------------------------------------------------------- tune

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningFile {
    pub config_hash: String,
    pub outcomes: Vec<TuningOutcome>,
}

fn tuning_csv(outcomes: &[&TuningOutcome]) -> CliResult<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = ["learner", "method", "hyper", "criterion", "oos_rmse", "failed_cells", "chosen", "error"];
    let csv_err = |e: csv::Error| CliError::Core {
        context: "tuning table".into(),
        source: e.into(),
    };
    wtr.write_record(header).map_err(csv_err)?;
    for o in outcomes {
        for m in &o.methods {
            wtr.write_record([
                o.learner.as_str().to_string(),
                m.method.as_str().to_string(),
                m.hyper.map(|h| h.describe()).unwrap_or_default(),
                fmt_opt(m.criterion),
                fmt_opt(m.oos_rmse),
                m.failed_cells.to_string(),
                (m.method == o.chosen_method).to_string(),
                m.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    Ok(wtr.into_inner().expect("in-memory writer"))
}

fn choice(o: &TuningOutcome, label: &str) -> ChoiceRow {
    ChoiceRow {
        learner: label.to_string(),
        method: o.chosen_method.as_str().into(),
        hyper: o.hyper.describe(),
        oos_rmse: o.oos_rmse,
    }
}

pub fn tune(ctx: &mut Ctx) -> CliResult<()> {
    let settings = ctx.cfg.train_settings();
    for p in ctx.cfg.periods.clone() {
        let data = ctx.prepare(&p)?;
        let dir = ctx.period_dir(&p)?;
        let outcomes = tune_first_level(&data, &settings).context(|| format!("period {}: tuning", p.name))?;
        write_json(
            &dir.join(TUNING_FILE),
            &TuningFile {
                config_hash: ctx.cfg.hash(),
                outcomes: outcomes.clone(),
            },
        )?;
        write_bytes(&dir.join("tuning.csv"), &tuning_csv(&outcomes.iter().collect::<Vec<_>>())?)?;
        let pm = ctx.manifest.period(&p.name);
        pm.tuning = outcomes.iter().map(|o| choice(o, o.learner.as_str())).collect();
        pm.models.clear();
        pm.rmse.clear();
        pm.backtest.clear();
    }
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainFile {
    pub config_hash: String,
    pub models: Vec<ModelRow>,
}

fn artifact_name(tag: ModelTag) -> String {
    match tag {
        ModelTag::Stacked => "stacked.json".into(),
        t => format!("{}.json", t.as_str().to_ascii_lowercase()),
    }
}

fn stale(path: &Path, what: &str, command: &'static str) -> CliError {
    CliError::Missing {
        what: format!("{what} for the current configuration"),
        path: path.to_path_buf(),
        command,
    }
}

pub fn train(ctx: &mut Ctx) -> CliResult<()> {
    let settings = ctx.cfg.train_settings();
    let tags = ctx.cfg.model_tags()?;
    let hash = ctx.cfg.hash();
    for p in ctx.cfg.periods.clone() {
        let dir = ctx.period_dir(&p)?;
        let tpath = dir.join(TUNING_FILE);
        let tuning: TuningFile = read_json(&tpath, "tuning results", "tune")?;
        if tuning.config_hash != hash {
            return Err(stale(&tpath, "tuning results", "tune"));
        }
        let data = ctx.prepare(&p)?;
        let test_raw = data.raw.slice(data.bounds.test());
        let models_dir = dir.join("models");
        let save = |name: &str, m: TrainedModel| -> CliResult<String> {
            let path = models_dir.join(name);
            save_model(&path, &m).context(|| path.display().to_string())?;
            Ok(format!("models/{name}"))
        };

        let stacked = train_stacked(&data, &tuning.outcomes, &settings)
            .context(|| format!("period {}: training S-ANN", p.name))?;
        for (f, o) in stacked.first_level.iter().zip(&stacked.first_level_outcomes) {
            save(&format!("{}.json", o.learner.as_str().to_ascii_lowercase()), TrainedModel::Learner(f.clone()))?;
        }
        let mut rows = vec![ModelRow {
            model: ModelTag::Stacked.as_str().into(),
            artifact: Some(save(&artifact_name(ModelTag::Stacked), TrainedModel::Stacked(stacked.clone()))?),
            test_rmse: Some(
                model_rmse(ForecastModel::Stacked(&stacked), &test_raw, &data.returns)
                    .context(|| format!("period {}: S-ANN test RMSE", p.name))?,
            ),
            chosen_method: Some(stacked.stacker_outcome.chosen_method.as_str().into()),
            hyper: Some(stacked.stacker_outcome.hyper.describe()),
            error: None,
        }];
        let mut choices: Vec<ChoiceRow> = stacked
            .first_level_outcomes
            .iter()
            .map(|o| choice(o, o.learner.as_str()))
            .collect();
        choices.push(choice(&stacked.stacker_outcome, "S-ANN"));

        for &tag in tags.iter().filter(|t| **t != ModelTag::Stacked) {
            let trained = train_benchmark(tag, &data, &settings).and_then(|b| {
                let rmse = model_rmse(ForecastModel::Benchmark(&b), &test_raw, &data.returns)?;
                Ok((b, rmse))
            });
            match trained {
                Ok((b, rmse)) => {
                    match &b {
                        BenchmarkModel::AnnGarch(a) | BenchmarkModel::AnnEgarch(a) => {
                            let (name, m) = match &a.vol {
                                VolModel::Garch(g) => ("garch.json", TrainedModel::Garch(g.clone())),
                                VolModel::Egarch(g) => ("egarch.json", TrainedModel::Egarch(g.clone())),
                            };
                            save(name, m)?;
                        }
                        _ => {}
                    }
                    let outcome = match &b {
                        BenchmarkModel::Ann(a) => Some(&a.outcome),
                        BenchmarkModel::AnnGarch(a) | BenchmarkModel::AnnEgarch(a) => Some(&a.outcome),
                        BenchmarkModel::Heston(_) => None,
                    };
                    if let Some(o) = outcome {
                        choices.push(choice(o, tag.as_str()));
                    }
                    rows.push(ModelRow {
                        model: tag.as_str().into(),
                        artifact: Some(save(&artifact_name(tag), TrainedModel::Benchmark(b.clone()))?),
                        test_rmse: Some(rmse),
                        chosen_method: outcome.map(|o| o.chosen_method.as_str().into()),
                        hyper: outcome.map(|o| o.hyper.describe()),
                        error: None,
                    });
                }
                Err(e) => {
                    eprintln!("warning: period {}: {tag} skipped: {e}", p.name);
                    rows.push(ModelRow {
                        model: tag.as_str().into(),
                        artifact: None,
                        test_rmse: None,
                        chosen_method: None,
                        hyper: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        write_json(
            &dir.join(TRAIN_FILE),
            &TrainFile {
                config_hash: hash.clone(),
                models: rows.clone(),
            },
        )?;
        let pm = ctx.manifest.period(&p.name);
        pm.tuning = choices;
        pm.models = rows;
        pm.rmse.clear();
        pm.backtest.clear();
    }
    Ok(())
}

// ---------------------------------------------------------------- forecast / backtest

pub enum Loaded {
    Stacked(StackedModel),
    Benchmark(BenchmarkModel),
}

impl Loaded {
    pub fn as_forecast(&self) -> ForecastModel<'_> {
        match self {
            Loaded::Stacked(m) => ForecastModel::Stacked(m),
            Loaded::Benchmark(b) => ForecastModel::Benchmark(b),
        }
    }
}

/// Trained models of a period in canonical order; skipped benchmarks are left out.
pub fn load_trained(cfg: &RunConfig, p: &PeriodConfig) -> CliResult<Vec<(String, Loaded)>> {
    let dir = cfg.out.join(&p.name);
    let path = dir.join(TRAIN_FILE);
    let tf: TrainFile = read_json(&path, "trained models", "train")?;
    if tf.config_hash != cfg.hash() {
        return Err(stale(&path, "trained models", "train"));
    }
    let mut out = Vec::new();
    for row in &tf.models {
        let Some(a) = &row.artifact else { continue };
        let mpath = dir.join(a);
        if !mpath.exists() {
            return Err(CliError::Missing {
                what: format!("{} artifact", row.model),
                path: mpath,
                command: "train",
            });
        }
        let loaded = match load_model(&mpath).context(|| mpath.display().to_string())? {
            TrainedModel::Stacked(m) => Loaded::Stacked(m),
            TrainedModel::Benchmark(b) => Loaded::Benchmark(b),
            _ => {
                return Err(CliError::Config(format!("{} is not a forecasting model", mpath.display())));
            }
        };
        out.push((row.model.clone(), loaded));
    }
    Ok(out)
}

pub fn forecast(ctx: &mut Ctx) -> CliResult<()> {
    for p in ctx.cfg.periods.clone() {
        let models = load_trained(&ctx.cfg, &p)?;
        let data = ctx.prepare(&p)?;
        let cmp = &data.comparison_raw;
        let mut cols = vec![persistence_forecast(cmp).context(|| p.name.clone())?];
        for (name, m) in &models {
            cols.push(
                m.as_forecast()
                    .forecast(cmp, &data.returns)
                    .context(|| format!("period {}: forecasting {name}", p.name))?,
            );
        }
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["date".to_string(), "trv".into(), "PERSISTENCE".into()];
        header.extend(models.iter().map(|(n, _)| n.clone()));
        let path = ctx.period_dir(&p)?.join(FORECAST_FILE);
        let csv_err = |e: csv::Error| CliError::Core {
            context: path.display().to_string(),
            source: e.into(),
        };
        wtr.write_record(&header).map_err(csv_err)?;
        for i in 0..cmp.len() {
            let mut rec = vec![cmp.dates[i].to_string(), cmp.y[i].to_string()];
            rec.extend(cols.iter().map(|c| c[i].to_string()));
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        write_bytes(&path, &wtr.into_inner().expect("in-memory writer"))?;
    }
    Ok(())
}

pub fn backtest_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let opts = ctx.cfg.risk_options();
    for p in ctx.cfg.periods.clone() {
        let models = load_trained(&ctx.cfg, &p)?;
        let data = ctx.prepare(&p)?;
        let test_raw = data.raw.slice(data.bounds.test());
        let cmp = &data.comparison_raw;
        let mut report = BacktestReport::new(opts.alpha, opts.horizon);
        let mut risk = csv::Writer::from_writer(Vec::new());
        let dir = ctx.period_dir(&p)?;
        let rpath = dir.join(RISK_FILE);
        let csv_err = |e: csv::Error| CliError::Core {
            context: rpath.display().to_string(),
            source: e.into(),
        };
        risk.write_record(["model", "date", "var", "cvar", "realized", "hit"]).map_err(csv_err)?;
        for (name, m) in &models {
            let fm = m.as_forecast();
            let ctxs = || format!("period {}: {name}", p.name);
            for (window, frame) in [("test", &test_raw), ("comparison", cmp)] {
                report.rmse.push(RmseRow {
                    model: name.clone(),
                    window: window.into(),
                    rmse: model_rmse(fm, frame, &data.returns).context(ctxs)?,
                });
            }
            let (series, tests) = backtest(fm, cmp, &data.returns, &data.comparison, &opts).context(ctxs)?;
            report.push_tests(name, &tests);
            for (i, hit) in series.hits().into_iter().enumerate() {
                risk.write_record([
                    name.clone(),
                    series.dates[i].to_string(),
                    series.var[i].to_string(),
                    series.cvar[i].to_string(),
                    series.realized[i].to_string(),
                    (hit as u8).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        for (window, frame) in [("test", &test_raw), ("comparison", cmp)] {
            report.rmse.push(RmseRow {
                model: "PERSISTENCE".into(),
                window: window.into(),
                rmse: persistence_rmse(frame).context(|| p.name.clone())?,
            });
        }
        write_bytes(&rpath, &risk.into_inner().expect("in-memory writer"))?;
        write_with(&dir.join(BACKTEST_FILE), |w| report.write_tests_csv(w))?;
        write_with(&dir.join(RMSE_FILE), |w| report.write_rmse_csv(w))?;
        let pm = ctx.manifest.period(&p.name);
        pm.rmse = report.rmse;
        pm.backtest = report.tests;
    }
    Ok(())
}

// ---------------------------------------------------------------- report

pub fn report(ctx: &mut Ctx) -> CliResult<String> {
    let cfg = &ctx.cfg;
    let mut s = String::new();
    let _ = writeln!(s, "volstack report");
    let _ = writeln!(s, "config hash {}", ctx.manifest.config_hash);
    let _ = writeln!(s, "data sha256 {}", ctx.manifest.data_sha256);
    let _ = writeln!(s, "seed {}, profile {:?}\n", cfg.seed, cfg.profile);

    let mut per_period = Vec::new();
    for p in &cfg.periods {
        let path = cfg.out.join(&p.name).join(BACKTEST_FILE);
        let pm = ctx.manifest.periods.get(&p.name);
        match pm {
            Some(pm) if path.exists() && !pm.backtest.is_empty() => per_period.push((p, pm.clone())),
            _ => {
                return Err(CliError::Missing {
                    what: format!("backtest results for period {}", p.name),
                    path,
                    command: "backtest",
                })
            }
        }
    }

    // comparison-window RMSE per model across periods
    let _ = writeln!(s, "Comparison-window RMSE");
    let _ = write!(s, "{:<14}", "model");
    for (p, _) in &per_period {
        let _ = write!(s, "{:>14}", p.name);
    }
    s.push('\n');
    let mut models: Vec<String> = Vec::new();
    for (_, pm) in &per_period {
        for r in &pm.rmse {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
    }
    for m in &models {
        let _ = write!(s, "{m:<14}");
        for (_, pm) in &per_period {
            let v = pm.rmse.iter().find(|r| &r.model == m && r.window == "comparison");
            let _ = write!(s, "{:>14}", v.map_or("-".to_string(), |r| format!("{:.5}", r.rmse)));
        }
        s.push('\n');
    }

    for (p, pm) in &per_period {
        let _ = writeln!(
            s,
            "\n== period {}: training {}, comparison {} ==",
            p.name, p.training, p.comparison
        );
        if !pm.tuning.is_empty() {
            let _ = writeln!(s, "Chosen tuning methods");
            for c in &pm.tuning {
                let _ = writeln!(s, "  {:<12}{:<6}{:<28}oos rmse {:.5}", c.learner, c.method, c.hyper, c.oos_rmse);
            }
        }
        for m in pm.models.iter().filter(|m| m.error.is_some()) {
            let _ = writeln!(s, "  {} skipped: {}", m.model, m.error.as_deref().unwrap_or_default());
        }
        let mut r = BacktestReport::new(cfg.risk.alpha, cfg.risk.horizon);
        r.rmse = pm.rmse.clone();
        r.tests = pm.backtest.clone();
        s.push('\n');
        s.push_str(&r.text());
    }
    write_bytes(&cfg.out.join(REPORT_FILE), s.as_bytes())?;
    Ok(s)
}

// ---------------------------------------------------------------- simulate

/// Synthetic Student-t GARCH(1,1) closes on business days.
pub fn simulate(output: &Path, start: NaiveDate, n_prices: usize, seed: u64) -> CliResult<()> {
    let prices = synthetic::garch_prices(start, n_prices, &synthetic::default_params(), seed)
        .context(|| "simulating prices".into())?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_with(output, |w| write_prices(w, &prices))
}
