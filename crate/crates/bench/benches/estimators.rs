use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use driftkit_core::*;

fn benchmark_ensemble(n_paths: usize) -> PathEnsemble {
    let grid = ObservationGrid::new(1.0, 5.0, 50).unwrap();
    let model = SdeModel::preset(1).unwrap();
    simulate_ensemble(&model, n_paths, &grid, 10, 7).unwrap()
}

fn bench_simulation(c: &mut Criterion) {
    let grid = ObservationGrid::new(1.0, 5.0, 50).unwrap();
    let model = SdeModel::preset(4).unwrap();
    c.bench_function("simulate 50x50 substeps 10", |b| {
        b.iter(|| simulate_ensemble(black_box(&model), 50, &grid, 10, 7).unwrap())
    });
}

fn bench_drift_curve(c: &mut Criterion) {
    let ens = benchmark_ensemble(50);
    let kernel = Kernel::gaussian();
    let xs = evaluation_grid(&ens, 0.05, 200).unwrap();
    let floor = FloorSpec::default();
    c.bench_function("drift curve 50x50 on 200 points", |b| {
        b.iter(|| estimate_drift(black_box(&ens), &kernel, 0.04, &xs, &floor).unwrap())
    });
}

fn bench_cv(c: &mut Criterion) {
    let kernel = Kernel::gaussian();
    let mut group = c.benchmark_group("cv criterion");
    for n_paths in [10usize, 25, 50] {
        let ens = benchmark_ensemble(n_paths);
        group.bench_with_input(BenchmarkId::from_parameter(n_paths), &ens, |b, ens| {
            b.iter(|| cv_criterion(black_box(ens), &kernel, 0.04).unwrap())
        });
    }
    group.finish();
}

fn bench_selection(c: &mut Criterion) {
    let ens = benchmark_ensemble(25);
    let kernel = Kernel::gaussian();
    let grid = BandwidthGrid::uniform(0.02, 0.02, 10).unwrap();
    c.bench_function("select bandwidth 25x50 over 10 candidates", |b| {
        b.iter(|| select_bandwidth(black_box(&ens), &kernel, &grid).unwrap())
    });
}

criterion_group!(
    benches,
    bench_simulation,
    bench_drift_curve,
    bench_cv,
    bench_selection
);
criterion_main!(benches);
