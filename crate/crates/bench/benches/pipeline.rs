use std::hint::black_box;

use bae_oed::{brute_force_design, estimate_stats, greedy_design, StatsOptions};
use bae_oed_bench::{darcy_fixture, exp_fixture};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn stats(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_stats");
    for q in [500, 2000] {
        let fx = darcy_fixture(16, 8, q);
        let s = fx.zero_surrogate();
        g.bench_with_input(BenchmarkId::new("darcy16_8x8", q), &q, |b, _| {
            b.iter(|| estimate_stats(black_box(&fx.ensemble), &s, &fx.noise, StatsOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn greedy(c: &mut Criterion) {
    let mut g = c.benchmark_group("greedy_design");
    let darcy = darcy_fixture(16, 8, 2000).kernel();
    for k in [5, 20] {
        g.bench_with_input(BenchmarkId::new("darcy_64_candidates", k), &k, |b, &k| {
            b.iter(|| greedy_design(black_box(&darcy), k).unwrap())
        });
    }
    let exp = exp_fixture(12, 40, 2, 1000).kernel();
    g.bench_function("exp_40x2_k10", |b| b.iter(|| greedy_design(black_box(&exp), 10).unwrap()));
    g.finish();
}

fn brute_force(c: &mut Criterion) {
    let k = exp_fixture(8, 8, 1, 300).kernel();
    c.bench_function("brute_force_s8_k3", |b| b.iter(|| brute_force_design(black_box(&k), 3).unwrap()));
}

fn forward(c: &mut Criterion) {
    let fx = darcy_fixture(32, 8, 2);
    let v = fx.ensemble.params().row(0).transpose();
    c.bench_function("darcy32_forward", |b| b.iter(|| fx.problem.forward(black_box(&v)).unwrap()));
}

criterion_group!(benches, stats, greedy, brute_force, forward);
criterion_main!(benches);
