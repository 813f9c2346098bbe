use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng as _;
use volstack_core::ann::{net_gradient, net_init};
use volstack_core::garch::{garch_fit, simulate_garch};
use volstack_core::heston::{heston_simulate, HestonParams};
use volstack_core::learners::svr::{svr_fit, SvrParams};
use volstack_core::resampling::{cbb_sample, meb_sample, sb_sample};
use volstack_core::risk::student_t_var_cvar;
use volstack_core::{rng, synthetic, Matrix};

fn data(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut r = rng::seeded(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
    let y = rows.iter().map(|v| v.iter().sum::<f64>() / d as f64).collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn ann(c: &mut Criterion) {
    let (x, y) = data(1000, 33, 1);
    let net = net_init(33, 2).unwrap();
    c.bench_function("ann gradient 1000x33", |b| b.iter(|| net_gradient(&net, black_box(&x), &y, 1e-4).unwrap()));
}

fn garch(c: &mut Criterion) {
    let ret = simulate_garch(&synthetic::default_params(), 2000, 500, &mut rng::seeded(3));
    let mut g = c.benchmark_group("garch");
    g.sample_size(10);
    g.bench_function("fit(1,1) n=2000", |b| b.iter(|| garch_fit(black_box(&ret), 1, 1).unwrap()));
    g.finish();
}

fn heston(c: &mut Criterion) {
    let p = HestonParams {
        mu: 0.0002,
        theta: 0.05,
        upsilon: 1e-4,
        delta: 0.001,
        rho: -0.6,
        v0: 2e-4,
    };
    let mut g = c.benchmark_group("heston");
    g.sample_size(10);
    g.bench_function("10k paths h=10", |b| b.iter(|| heston_simulate(&p, 10, 10_000, black_box(4)).unwrap()));
    g.finish();
}

fn svr(c: &mut Criterion) {
    let (x, y) = data(300, 30, 5);
    let p = SvrParams::new(0.1, 0.01, 1.0);
    let mut g = c.benchmark_group("svr");
    g.sample_size(10);
    g.bench_function("fit 300x30", |b| b.iter(|| svr_fit(black_box(&x), &y, &p).unwrap()));
    g.finish();
}

fn resampling(c: &mut Criterion) {
    let mut r = rng::seeded(6);
    let series: Vec<f64> = (0..1000).map(|_| r.random::<f64>()).collect();
    c.bench_function("cbb 1000 b=10", |b| b.iter(|| cbb_sample(1000, 10, &mut r).unwrap()));
    c.bench_function("sb 1000 mean=10", |b| b.iter(|| sb_sample(1000, 10.0, &mut r).unwrap()));
    c.bench_function("meb 1000", |b| b.iter(|| meb_sample(black_box(&series), &mut r).unwrap()));
}

fn risk(c: &mut Criterion) {
    c.bench_function("student-t var/cvar", |b| {
        b.iter(|| student_t_var_cvar(black_box(0.012), 6.0, 0.99, 10).unwrap())
    });
}

criterion_group!(benches, ann, garch, heston, svr, resampling, risk);
criterion_main!(benches);
