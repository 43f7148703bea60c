use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ftn_bench::Fixture;
use ftn_core::admmse::{AdmmDetector, AdmmParams};

/// One full detection (200 iterations x 50 restarts) per order at N = 150.
fn detect_by_order(c: &mut Criterion) {
    let mut group = c.benchmark_group("detect_n150");
    group.sample_size(10);
    for order in [4usize, 16, 65536] {
        let fx = Fixture::new(order, 0.3, 0.85, 150, 1e-4, 1).unwrap();
        let det = AdmmDetector::new(&fx.problem, AdmmParams::with_rho(0.5)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(order), &fx, |b, fx| {
            b.iter(|| det.detect(black_box(&fx.problem), 7).unwrap())
        });
    }
    group.finish();
}

fn detect_by_length(c: &mut Criterion) {
    let mut group = c.benchmark_group("detect_qpsk");
    group.sample_size(10);
    for n in [50usize, 150, 300] {
        let fx = Fixture::new(4, 0.3, 0.8, n, 0.1, 2).unwrap();
        let det = AdmmDetector::new(&fx.problem, AdmmParams::with_rho(0.5)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &fx, |b, fx| {
            b.iter(|| det.detect(black_box(&fx.problem), 7).unwrap())
        });
    }
    group.finish();
}

fn assemble(c: &mut Criterion) {
    let fx = Fixture::new(16, 0.5, 0.8, 150, 0.05, 3).unwrap();
    c.bench_function("assemble_n150", |b| {
        b.iter(|| fx.link.template().assemble(black_box(&fx.received)).unwrap())
    });
}

criterion_group!(benches, detect_by_order, detect_by_length, assemble);
criterion_main!(benches);
