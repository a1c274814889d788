use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use randevo_bench::{drift_switching, jump_diffusion};
use randevo_core::averaging::{lln_sweep, Averager, SweepSettings};
use randevo_core::{McBudget, RandomEvolution, StreamKey, TestFunction};

fn sample_paths(c: &mut Criterion) {
    let (sm, levy, alpha) = jump_diffusion();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(1, "bench");
    let mut group = c.benchmark_group("evolve_multi");
    for eps in [0.5, 0.05] {
        group.bench_with_input(BenchmarkId::from_parameter(eps), &eps, |b, &eps| {
            b.iter(|| evo.evolve_multi(0.0, &[0.5, 1.0], eps, 100, &key).unwrap())
        });
    }
    group.finish();
}

fn exact_path_law(c: &mut Criterion) {
    let (sm, levy, alpha) = jump_diffusion();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(2, "bench");
    let f = TestFunction::gaussian(0.0, 1.0, 1.0);
    let mut group = c.benchmark_group("path_law");
    for eps in [0.5, 0.1] {
        let path = evo.scaled_path(0.0, 1.0, eps, &key, 0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(eps), &path, |b, path| {
            b.iter(|| evo.path_law(path, 1.0, false).unwrap().expect(&f, 0.0, 0))
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let (sm, levy, alpha) = drift_switching();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let avg = Averager::new(evo).unwrap();
    let settings = SweepSettings {
        s: 0.0,
        epsilons: vec![0.5, 0.2, 0.1],
        t_grid: vec![0.5, 1.0],
        z_grid: vec![0.0],
        functions: vec![("gauss".into(), TestFunction::gaussian(0.0, 1.0, 1.0))],
        budget: McBudget::samples(2000),
        ci_floor: 0.01,
        final_ratio: 2.0,
        level: 0.05,
    };
    let key = StreamKey::root(3, "bench");
    c.bench_function("lln_sweep", |b| {
        b.iter(|| lln_sweep(&avg, &settings, &key).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = sample_paths, exact_path_law, sweep
}
criterion_main!(benches);
