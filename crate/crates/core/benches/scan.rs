use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drot::experiments::gaussian_benchmark;
use drot::random::{rng, uniform_cost};
use drot::scan::{scan_parallel, scan_sequential, ScanMode};
use drot::solver::solve_with_mode;
use drot::{Regularizer, SolverConfig};
use rand::Rng;

fn scans(c: &mut Criterion) {
    let mut group = c.benchmark_group("scan");
    for n in [128, 512, 2048] {
        let mut r = rng(7);
        let cost = uniform_cost(&mut r, n, n);
        let f: Vec<f64> = (0..n).map(|_| r.random_range(0.0..0.6)).collect();
        let g: Vec<f64> = (0..n).map(|_| r.random_range(0.0..0.6)).collect();
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |bench, _| {
            bench.iter(|| scan_sequential(black_box(&f), black_box(&g), &cost, 0.0))
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |bench, _| {
            bench.iter(|| scan_parallel(black_box(&f), black_box(&g), &cost, 0.0))
        });
    }
    group.finish();
}

fn solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_gaussian");
    group.sample_size(10);
    let problem = gaussian_benchmark(201).unwrap();
    let config = SolverConfig::symmetric(100.0, Regularizer::Quadratic);
    for (name, mode) in [("sequential", ScanMode::Sequential), ("parallel", ScanMode::Parallel)] {
        group.bench_function(name, |bench| bench.iter(|| solve_with_mode(&problem, &config, mode).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, scans, solves);
criterion_main!(benches);
