use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rfs_monitor::eval::{
    calibrate_rf_threshold, calibrate_rf_threshold_seq, default_grid, run_f1_experiment,
    run_f1_experiment_seq, F1Options,
};
use rfs_monitor::rfs::{GaussParams, PoissonRfsParams};
use rfs_monitor::simulate::{RngStream, ScenarioKind};

fn bench_rf_calibration(c: &mut Criterion) {
    let params = PoissonRfsParams::new(10.0, GaussParams::standard(2)).unwrap();
    let stream = RngStream::new(42, 0);
    let mut group = c.benchmark_group("calibrate_rf");
    for samples in [20_000u64, 100_000] {
        group.bench_with_input(BenchmarkId::new("parallel", samples), &samples, |b, &n| {
            b.iter(|| calibrate_rf_threshold(&params, 0.01, n, &stream).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", samples), &samples, |b, &n| {
            b.iter(|| calibrate_rf_threshold_seq(&params, 0.01, n, &stream).unwrap())
        });
    }
    group.finish();
}

fn bench_f1_experiment(c: &mut Criterion) {
    let grid = default_grid();
    let scenarios = [ScenarioKind::S1, ScenarioKind::S3];
    let opts = F1Options {
        horizon: 30,
        alpha: 0.01,
        rf_samples: 20_000,
    };
    let stream = RngStream::new(7, 0);
    let mut group = c.benchmark_group("f1_experiment");
    group.sample_size(10);
    for batches in [20u64, 60] {
        group.bench_with_input(BenchmarkId::new("parallel", batches), &batches, |b, &n| {
            b.iter(|| run_f1_experiment(&grid, &scenarios, n, &opts, &stream).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", batches), &batches, |b, &n| {
            b.iter(|| run_f1_experiment_seq(&grid, &scenarios, n, &opts, &stream).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_rf_calibration, bench_f1_experiment);
criterion_main!(benches);
