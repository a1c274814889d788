use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use randevo_bench::dense_chain;
use randevo_core::averaging::{fundamental_matrix, poisson_solve};
use randevo_core::semi_markov::stationary_distribution;

fn stationary(c: &mut Criterion) {
    let mut group = c.benchmark_group("stationary_distribution");
    for n in [2, 6, 32] {
        let sm = dense_chain(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), sm.p(), |b, p| {
            b.iter(|| stationary_distribution(p).unwrap())
        });
    }
    group.finish();
}

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson_solve");
    for n in [2, 6, 32] {
        let sm = dense_chain(n);
        let rho = sm.stationary().rho.clone();
        let raw: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mean: f64 = rho.iter().zip(&raw).map(|(r, v)| r * v).sum();
        let rhs: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &rhs, |b, rhs| {
            b.iter(|| poisson_solve(sm.p(), &rho, rhs).unwrap())
        });
    }
    group.finish();
    let sm = dense_chain(6);
    c.bench_function("fundamental_matrix/6", |b| {
        b.iter(|| fundamental_matrix(sm.p(), &sm.stationary().rho).unwrap())
    });
}

criterion_group!(benches, stationary, poisson);
criterion_main!(benches);
