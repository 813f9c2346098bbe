use rand::Rng as _;
use volstack_core::garch::*;
use volstack_core::{rng, stats};

const S2: f64 = 1e-4;

fn generator() -> GarchParams {
    GarchParams {
        omega: 0.05 * S2,
        alpha: vec![0.10],
        beta: vec![0.85],
        nu: 8.0,
    }
}

#[test]
fn garch_parameter_recovery() {
    let mut r = rng::seeded(2024);
    let ret = simulate_garch(&generator(), 10_000, 500, &mut r);
    let fit = garch_fit(&ret, 1, 1).unwrap();
    let p = &fit.params;
    assert!((p.alpha[0] - 0.10).abs() <= 0.05, "{p:?}");
    assert!((p.beta[0] - 0.85).abs() <= 0.05, "{p:?}");
    assert!((p.nu - 8.0).abs() <= 3.0, "{p:?}");
    p.validate().unwrap();

    // local-optimum sanity against random feasible points
    let mut q = rng::seeded(5);
    for _ in 0..20 {
        let a: f64 = q.random_range(0.0..0.3);
        let b: f64 = q.random_range(0.0..(0.99 - a));
        let cand = GarchParams {
            omega: S2 * q.random_range(0.01..0.5),
            alpha: vec![a],
            beta: vec![b],
            nu: q.random_range(2.5..30.0),
        };
        assert!(fit.log_likelihood >= garch_loglik(&cand, &ret, fit.sigma2_0));
    }
}

#[test]
fn filtered_mean_matches_unconditional_variance() {
    let p = generator();
    let mut r = rng::seeded(7);
    let ret = simulate_garch(&p, 200_000, 1000, &mut r);
    let s2 = garch_filter(&p, &ret, p.unconditional_variance());
    let m = stats::mean(&s2);
    assert!((m / p.unconditional_variance() - 1.0).abs() < 0.05, "{m}");
    assert!(s2.iter().all(|v| *v > 0.0));
}

#[test]
fn no_arch_under_iid_student_t() {
    let mut alphas = Vec::new();
    for trial in 0..50 {
        let mut r = rng::derive(31, trial);
        let ret: Vec<f64> = (0..1000).map(|_| 0.01 * std_t_draw(&mut r, 6.0)).collect();
        alphas.push(garch_fit(&ret, 1, 1).unwrap().params.alpha[0]);
    }
    let med = stats::median(&alphas);
    assert!(med <= 0.05, "median alpha {med}");
}

#[test]
fn egarch_leverage_sign_recovered() {
    let gen = EgarchParams {
        omega: 0.05 * S2.ln(),
        alpha: vec![0.95],
        beta: vec![-0.10],
        gamma: vec![0.15],
        nu: 8.0,
    };
    let mut hits = 0;
    for trial in 0..50 {
        let mut r = rng::derive(77, trial);
        let ret = simulate_egarch(&gen, 2000, 200, &mut r);
        let fit = egarch_fit(&ret, 1, 1).unwrap();
        fit.params.validate().unwrap();
        let ls = egarch_filter(&fit.params, &ret, fit.sigma2_0);
        assert!(ls.iter().all(|v| v.is_finite()));
        if fit.params.beta[0] < 0.0 {
            hits += 1;
        }
    }
    assert!(hits >= 45, "negative sign in {hits}/50 fits");
}
