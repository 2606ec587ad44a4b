//! The same data-parallel kernels on a one-thread rayon pool and on the
//! default pool. Built without the `parallel` feature both groups run the
//! sequential fallback, which makes a third point of comparison.

use std::f64::consts::FRAC_1_SQRT_2;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64 as C;
use tgifs::harness::{self, Estimator};
use tgifs::hilbert::{self, FockSpace, HybridState};
use tgifs::tomography::{self, ScanKind};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn left(cutoff: usize) -> HybridState {
    let s = FockSpace::new(cutoff).unwrap();
    HybridState::down(s, &hilbert::coherent_state(s, C::new(-1.5 * FRAC_1_SQRT_2, 0.0)).unwrap()).unwrap()
}

fn characteristic_scan(c: &mut Criterion) {
    let state = left(100);
    let grid = tomography::half_plane_grid(4.0, 21, 4.0, 11);
    let mut group = c.benchmark_group("chi_scan_21x11");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| tomography::sample_scan(&state, &grid, 500, 1, ScanKind::Grid).unwrap()))
        });
    }
    group.finish();
}

fn readout_trace(c: &mut Criterion) {
    let states = vec![left(100); 40];
    let est = Estimator::Pfd { h: 0.4, shots: 200 };
    let mut group = c.benchmark_group("2pfd_trace_40x100");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| harness::estimator_trace(&states, est, 1, 100).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, characteristic_scan, readout_trace);
criterion_main!(benches);
