use chrono::{Days, NaiveDate};
use rand::Rng as _;
use volstack_core::heston::{heston_simulate, HestonParams};
use volstack_core::risk::*;
use volstack_core::{rng, stats};

fn series(realized: Vec<f64>, scale: f64, nu: f64, alpha: f64) -> RiskSeries {
    let n = realized.len();
    let sigma = scale / ((nu - 2.0) / nu).sqrt();
    let (var, cvar) = student_t_var_cvar(sigma, nu, alpha, 1).unwrap();
    let d0 = NaiveDate::from_ymd_opt(2008, 1, 2).unwrap();
    RiskSeries {
        dates: (0..n).map(|i| d0 + Days::new(i as u64)).collect(),
        var: vec![var; n],
        cvar: vec![cvar; n],
        realized,
        alpha,
        horizon: 1,
        predictive: vec![Predictive::StudentT { scale, nu }; n],
        thin_tail_periods: 0,
    }
}

fn draws(n: usize, scale: f64, nu: f64, r: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| scale * stats::t_quantile(r.random::<f64>(), nu)).collect()
}

#[test]
fn coverage_tests_hold_size() {
    let p = 0.05;
    let mut rej = [0usize; 2];
    let trials = 2000;
    for k in 0..trials {
        let mut r = rng::derive(17, k);
        let hits: Vec<bool> = (0..500).map(|_| r.random::<f64>() < p).collect();
        rej[0] += kupiec_test(&hits, p).unwrap().reject as usize;
        rej[1] += christoffersen_test(&hits, p).unwrap().reject as usize;
    }
    for x in rej {
        let rate = x as f64 / trials as f64;
        assert!((0.03..=0.07).contains(&rate), "{rate}");
    }
}

#[test]
fn as1_detects_understated_cvar() {
    // VaR is right but losses beyond it run twice as deep as the model's CVaR
    let mut rejected = 0;
    for k in 0..200 {
        let mut r = rng::derive(23, k);
        let mut s = series(draws(500, 0.01, 5.0, &mut r), 0.01, 5.0, 0.99);
        let (v, c) = (s.var[0], s.cvar[0]);
        let stretch = (2.0 * c - v) / (c - v);
        for x in &mut s.realized {
            if *x < -v {
                *x = -v + stretch * (*x + v);
            }
        }
        let Some(_) = as1_statistic(&s.realized, &s.var, &s.cvar) else {
            continue;
        };
        rejected += as1_test(&s, 500, k).unwrap().reject as usize;
    }
    assert!(rejected >= 160, "{rejected}/200");
}

#[test]
fn gaussian_heston_paths_give_gaussian_var() {
    let v = 1e-4;
    let h = 10;
    let p = HestonParams {
        mu: 0.0,
        theta: 0.1,
        upsilon: v,
        delta: 0.0,
        rho: 0.0,
        v0: v,
    };
    let n = 20_000;
    let paths = heston_simulate(&p, h, n, 2).unwrap();
    let (est, _) = heston_var_cvar(&paths.cumulative_returns(), 0.99).unwrap();
    let sd = (v * h as f64).sqrt();
    let q = stats::normal_quantile(0.01);
    let phi = (-0.5 * q * q).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let se = (0.01f64 * 0.99 / n as f64).sqrt() / (phi / sd);
    assert!((est.var + sd * q).abs() < 3.0 * se, "{} vs {}", est.var, -sd * q);
    assert!(est.cvar >= est.var);
}

#[test]
fn clustered_exceedances_look_worse() {
    let n = 250;
    let mut clustered = vec![false; n];
    clustered[100..105].fill(true);
    let mut spread = vec![false; n];
    for i in 0..5 {
        spread[25 + 50 * i] = true;
    }
    let pc = christoffersen_test(&clustered, 0.01).unwrap().p_value.unwrap();
    let ps = christoffersen_test(&spread, 0.01).unwrap().p_value.unwrap();
    assert!(pc < ps, "{pc} {ps}");
}

#[test]
fn coverage_statistics_ignore_dates() {
    let mut r = rng::seeded(40);
    let s = series(draws(300, 0.01, 6.0, &mut r), 0.01, 6.0, 0.95);
    let mut shuffled = s.clone();
    shuffled.dates.reverse();
    assert_eq!(run_backtests(&s, 50, 1).unwrap(), run_backtests(&shuffled, 50, 1).unwrap());
}
