//! Tuning, stacking, benchmark assembly and evaluation for one training period.

pub mod artifact;
pub mod backtest;
pub mod data;
pub mod grid;
pub mod learner;
pub mod models;
pub mod tuning;

pub use artifact::{load_model, save_model, TrainedModel};
pub use backtest::{
    backtest, forecast, model_rmse, persistence_rmse, risk_series, BacktestReport, ForecastModel, RiskOptions,
    RmseRow, TestRow,
};
pub use data::{persistence_forecast, rmse, DateWindow, PeriodData};
pub use grid::{GridSpec, Hyper, LearnerTag, Profile, ProfileSettings};
pub use learner::{fit_learner, Fitted, TargetScale};
pub use models::{
    train_benchmark, train_stacked, tune_first_level, BenchmarkModel, ModelTag, StackedModel, TrainSettings,
    ANN_DIM, ANN_EGARCH_DIM, ANN_GARCH_DIM, STACKER_DIM,
};
pub use tuning::{tune_learner, MethodOutcome, Tuned, TuningOutcome, TuningWindow};
