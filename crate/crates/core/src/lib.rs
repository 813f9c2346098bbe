//! Stacked-ensemble volatility forecasting and market-risk backtesting.
//!
//! Random forest, gradient boosting and support vector regression forecasts of
//! the 5-day realized volatility are stacked, together with 30 lagged trailing
//! volatilities, into a small feed-forward network. GARCH / EGARCH / Heston /
//! plain-network benchmarks and a VaR/CVaR backtesting battery complete the
//! toolkit.

pub mod ann;
pub mod error;
pub mod garch;
pub mod heston;
pub mod learners;
pub mod market_data;
pub mod matrix;
pub mod optim;
pub mod pipeline;
pub mod resampling;
pub mod risk;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
pub use market_data::{FeatureFrame, PriceSeries, ReturnSeries, SplitSpec, VolSeries};
pub use matrix::Matrix;
