//! Synthetic adjusted-close series with GARCH(1,1) Student-t returns on a
//! Monday-to-Friday calendar.

use chrono::{Datelike, Days, NaiveDate, Weekday};

use crate::error::{Error, Result};
use crate::garch::{simulate_garch, GarchParams};
use crate::market_data::PriceSeries;
use crate::rng;

pub const START_PRICE: f64 = 100.0;
const BURN_IN: usize = 500;

/// Daily-scale GARCH with unit-percent unconditional volatility.
pub fn default_params() -> GarchParams {
    GarchParams {
        omega: 5e-6,
        alpha: vec![0.10],
        beta: vec![0.85],
        nu: 8.0,
    }
}

/// `n` consecutive weekdays starting at the first weekday on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// `n_prices` closes starting at 100 whose log-returns follow `params`.
pub fn garch_prices(start: NaiveDate, n_prices: usize, params: &GarchParams, seed: u64) -> Result<PriceSeries> {
    params.validate()?;
    if n_prices < 2 {
        return Err(Error::InvalidParameter("need at least 2 prices".into()));
    }
    let mut r = rng::seeded(seed);
    let returns = simulate_garch(params, n_prices - 1, BURN_IN, &mut r);
    let mut closes = Vec::with_capacity(n_prices);
    let mut log_p = START_PRICE.ln();
    closes.push(START_PRICE);
    for x in returns {
        log_p += x;
        closes.push(log_p.exp());
    }
    PriceSeries::new(business_days(start, n_prices), closes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::log_returns;

    #[test]
    fn calendar_skips_weekends() {
        // 2021-01-01 is a Friday
        let d = business_days(NaiveDate::from_ymd_opt(2021, 1, 2).unwrap(), 3);
        assert_eq!(d[0], NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
        assert_eq!(d[2], NaiveDate::from_ymd_opt(2021, 1, 6).unwrap());
    }

    #[test]
    fn prices_reproducible_and_scaled() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let a = garch_prices(start, 3000, &default_params(), 4).unwrap();
        assert_eq!(a, garch_prices(start, 3000, &default_params(), 4).unwrap());
        assert_eq!(a.closes()[0], START_PRICE);
        let r = log_returns(&a).unwrap();
        let sd = crate::stats::std_pop(&r.returns);
        assert!(sd > 0.007 && sd < 0.013, "{sd}");
    }
}
