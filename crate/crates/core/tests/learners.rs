use rand::Rng as _;
use volstack_core::learners::svr::svr_fit_weighted;
use volstack_core::learners::*;
use volstack_core::{rng, Matrix};

fn random_data(n: usize, p: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut r = rng::seeded(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
    let y = rows
        .iter()
        .map(|v| (4.0 * v[0]).sin() + v[1] * v[p - 1] + 0.1 * r.random::<f64>())
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// Dense projected-gradient solver for the stacked 2n-variable SVR dual.
fn pg_dual_objective(x: &Matrix, y: &[f64], gamma: f64, eps: f64, c: f64, iters: usize) -> f64 {
    let l = y.len();
    let n = 2 * l;
    let s: Vec<f64> = (0..n).map(|t| if t < l { 1.0 } else { -1.0 }).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = s[i] * s[j] * svr::rbf(x.row(i % l), x.row(j % l), gamma);
        }
    }
    let p: Vec<f64> = (0..n).map(|t| if t < l { eps - y[t] } else { eps + y[t - l] }).collect();

    // Largest eigenvalue by power iteration.
    let mut v = vec![1.0; n];
    let mut lmax = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i * n + j] * v[j]).sum()).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        lmax = norm;
        v = w.iter().map(|a| a / norm).collect();
    }
    let step = 1.0 / (lmax * 1.01);

    let project = |z: &mut [f64]| {
        let h = |lam: f64| -> f64 { (0..n).map(|t| s[t] * (z[t] - lam * s[t]).clamp(0.0, c)).sum() };
        let bound = z.iter().map(|a| a.abs()).fold(0.0, f64::max) + c;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lam = 0.5 * (lo + hi);
        for t in 0..n {
            z[t] = (z[t] - lam * s[t]).clamp(0.0, c);
        }
    };

    let mut a = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for _ in 0..iters {
        for i in 0..n {
            grad[i] = p[i] + (0..n).map(|j| q[i * n + j] * a[j]).sum::<f64>();
        }
        for i in 0..n {
            a[i] -= step * grad[i];
        }
        project(&mut a);
    }
    let mut f = 0.0;
    for i in 0..n {
        f += p[i] * a[i] + 0.5 * a[i] * (0..n).map(|j| q[i * n + j] * a[j]).sum::<f64>();
    }
    f
}

#[test]
fn svr_objective_matches_dense_qp() {
    let (x, y) = random_data(30, 3, 5);
    let (gamma, eps, c) = (1.5, 0.05, 1.0);
    let m = svr_fit(&x, &y, &SvrParams::new(gamma, eps, c)).unwrap();
    let oracle = pg_dual_objective(&x, &y, gamma, eps, c, 1_000_000);
    let rel = (m.objective - oracle).abs() / oracle.abs();
    assert!(rel < 1e-4, "smo {} vs projected gradient {oracle} (rel {rel})", m.objective);
}

#[test]
fn duplicate_point_equals_doubled_box() {
    let (gamma, eps, c) = (1.0, 0.1, 2.0);
    let mut p = SvrParams::new(gamma, eps, c);
    p.tol = 1e-9;

    let dup = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0]]).unwrap();
    let m_dup = svr_fit(&dup, &[1.0, 1.0, -1.0], &p).unwrap();
    let single = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
    let m_w = svr_fit_weighted(&single, &[1.0, -1.0], &[2.0, 1.0], &p).unwrap();

    // Two dual variables b1, b2 with b1 + b2 = 0, |b1| <= 2C, |b2| <= C: exhaustive grid.
    let k12 = (-gamma * 1.0f64).exp();
    let obj = |b1: f64, b2: f64| {
        0.5 * (b1 * b1 + 2.0 * b1 * b2 * k12 + b2 * b2) - (b1 - b2) + eps * (b1.abs() + b2.abs())
    };
    let mut best = (f64::INFINITY, 0.0);
    let steps = 2_000_000;
    for k in 0..=steps {
        let b1 = -c + 2.0 * c * k as f64 / steps as f64;
        let v = obj(b1, -b1);
        if v < best.0 {
            best = (v, b1);
        }
    }
    let b = best.1;
    // Free variable at the first point pins the offset.
    let bias = 1.0 - eps - (b - b * k12);
    let oracle = |u: f64| b * (-gamma * u * u).exp() - b * (-gamma * (u - 1.0) * (u - 1.0)).exp() + bias;

    for k in 0..=20 {
        let u = -0.5 + 0.1 * k as f64;
        let pd = m_dup.predict_row(&[u]);
        let pw = m_w.predict_row(&[u]);
        assert!((pd - pw).abs() < 1e-6, "dup {pd} vs weighted {pw} at {u}");
        assert!((pd - oracle(u)).abs() < 1e-4, "dup {pd} vs grid {} at {u}", oracle(u));
    }
}

#[test]
fn reference_forest_cell_respects_leaf_size() {
    let (x, y) = random_data(300, 30, 7);
    let p = ForestParams {
        n_vars: 10,
        min_leaf_obs: 24,
        n_trees: 25,
        bootstrap: true,
    };
    let f = rf_fit(&x, &y, &p, 99).unwrap();
    for t in &f.trees {
        assert!(t.leaves().all(|(_, n)| n >= 24));
        assert_eq!(t.leaves().map(|(_, n)| n).sum::<usize>(), 300);
    }
}

#[test]
fn reference_boosting_cell_monotone() {
    let (x, y) = random_data(250, 30, 8);
    let p = BoostParams {
        n_stages: 1479,
        learning_rate: 0.003,
        stage_depth: 3,
    };
    let m = gb_fit(&x, &y, &p).unwrap();
    assert_eq!(m.stages.len(), 1479);
    for w in m.train_mse.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(m.train_mse[1479] < m.train_mse[0]);
}

#[test]
fn reference_svr_cell_fits() {
    let (x, y) = random_data(120, 30, 9);
    let m = svr_fit(&x, &y, &SvrParams::new(0.0001, 0.45, 1.0)).unwrap();
    assert!(m.predict(&x).iter().all(|v| v.is_finite()));
    assert!(m.coef.iter().all(|b| b.abs() <= 1.0 + 1e-9));
}
