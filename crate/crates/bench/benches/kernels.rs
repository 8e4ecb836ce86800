use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mixspec_core::{
    autocovariance_closed_form, build_bn, eig_sym, sample_trajectory, solve_fixed_point, spectral_density,
    Complex64, EnsembleConfig, ProcessSpec, SolverOptions,
};

fn bench_eig_sym(c: &mut Criterion) {
    let mut group = c.benchmark_group("eig_sym");
    group.sample_size(20);
    for n in [100, 200, 400] {
        let cfg = EnsembleConfig::new(n, n).unwrap();
        let traj = sample_trajectory(&ProcessSpec::harris(1.0), cfg.entries(), 0).unwrap();
        let (_, gram) = build_bn(&traj, &cfg).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &gram, |b, g| b.iter(|| eig_sym(black_box(g))));
    }
    group.finish();
}

fn bench_build_bn(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_bn");
    for n in [100, 400] {
        let cfg = EnsembleConfig::new(n, n).unwrap();
        let traj = sample_trajectory(&ProcessSpec::harris(1.0), cfg.entries(), 0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &traj, |b, t| b.iter(|| build_bn(black_box(t), &cfg)));
    }
    group.finish();
}

fn bench_solve_fixed_point(c: &mut Criterion) {
    let gamma = autocovariance_closed_form(&ProcessSpec::harris(1.0), 1024).unwrap();
    let f = spectral_density(&gamma).unwrap();
    let mut group = c.benchmark_group("solve_fixed_point");
    for (label, z) in [("bulk", Complex64::new(1.0, 1.0)), ("near_axis", Complex64::new(0.5, 1e-3))] {
        group.bench_function(label, |b| {
            b.iter(|| solve_fixed_point(&f, 1.0, black_box(z), SolverOptions::default()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_eig_sym, bench_build_bn, bench_solve_fixed_point);
criterion_main!(benches);
