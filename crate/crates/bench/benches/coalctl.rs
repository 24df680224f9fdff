use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};

use coalctl_bench::platoon;
use coalctl_core::harness::{run, synthesize_all, RunOptions};
use coalctl_core::model::{coalitions_of, enumerate_topologies};
use coalctl_core::supervisor::{ellipsoid_box, worst_case};
use coalctl_core::synthesis::{synth_controller, synth_observer};

fn supervisor(c: &mut Criterion) {
    let n = 28;
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 3.0 } else { 0.1 / (1.0 + (i + j) as f64) });
    let x_hat = DVector::from_fn(12, |i, _| i as f64 * 0.3 - 1.0);
    let u = DVector::from_element(4, 0.5);
    let bx = ellipsoid_box(&DMatrix::identity(12, 12), &x_hat, 0.4).unwrap();
    c.bench_function("worst_case_12_states", |b| {
        b.iter(|| worst_case(black_box(&p), &u, &bx, 20).unwrap())
    });
}

fn design(c: &mut Criterion) {
    let cfg = platoon();
    let tops = enumerate_topologies(&cfg.links).unwrap();
    let part = coalitions_of(&tops[4], cfg.plant.n_agents()).unwrap();
    let mut g = c.benchmark_group("design_one_topology");
    g.sample_size(10);
    g.bench_function("controller", |b| {
        b.iter(|| synth_controller(&cfg.plant, &part, &cfg.q_x, &cfg.r, &cfg.synthesis).unwrap())
    });
    g.bench_function("observer", |b| {
        b.iter(|| synth_observer(&cfg.plant, &part, &cfg.p_obs, &cfg.omega_box, cfg.epsilon, &cfg.synthesis).unwrap())
    });
    g.finish();
}

fn online(c: &mut Criterion) {
    let cfg = platoon();
    let store = synthesize_all(&cfg).unwrap();
    let mut g = c.benchmark_group("online");
    g.sample_size(10);
    g.bench_function("platoon_10s_switching", |b| {
        b.iter(|| run(&cfg, &store, &RunOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, supervisor, design, online);
criterion_main!(benches);
