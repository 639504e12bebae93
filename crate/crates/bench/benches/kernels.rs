use avglemma_bench::{planar_curve, random_pair};
use avglemma_core::oscillatory::integrate;
use avglemma_core::sobolev::{m0_derivative, m0_eval};
use avglemma_core::sublevel::{sup_measure, SublevelSweep, SweepOptions};
use avglemma_core::transport::{reconstruct_from_slice, spectral_ode_residual};
use avglemma_core::{catalog, Amplitude, OscillatorySpec, PhaseFunction, SphereSampler};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn oscillatory(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate");
    for lambda in [1e2, 1e4, 1e6] {
        let spec = OscillatorySpec::new(Amplitude::constant(1.0), PhaseFunction::monomial(2, 1.0, (0.0, 1.0)), (0.0, 1.0), lambda).unwrap();
        g.bench_with_input(BenchmarkId::new("parabola", lambda), &spec, |b, s| b.iter(|| integrate(black_box(s)).unwrap()));
    }
    g.finish();
}

fn sublevel(c: &mut Criterion) {
    let (a, _) = planar_curve();
    let sweep = SublevelSweep::new(&*a, 1.0).unwrap();
    let dirs = SphereSampler::new(3, 256).points();
    let eps = [1e-4, 1e-3, 1e-2];
    c.bench_function("sweep_measures_256_directions", |b| {
        b.iter(|| dirs.iter().map(|s| sweep.measures(s, &eps)[0]).sum::<f64>())
    });
    let opts = SweepOptions { sphere_samples: 256, ..SweepOptions::default() };
    c.bench_function("sup_measure_curve", |b| b.iter(|| sup_measure(&a, 1.0, black_box(1e-3), &opts).unwrap()));
    let (id, _) = catalog("identity", 2, 2).unwrap();
    let grid_sweep = SublevelSweep::new(&*id, 1.0).unwrap();
    c.bench_function("grid_measure_identity", |b| b.iter(|| grid_sweep.measure(black_box(&[0.3, 0.8, 0.52]), 1e-2)));
}

fn transport(c: &mut Criterion) {
    let (a, _grid, pair) = random_pair(32, 64, 8.0);
    let slice = pair.f.slice(pair.v1_index).unwrap();
    let mut g = c.benchmark_group("transport");
    g.sample_size(10);
    g.bench_function("reconstruct", |b| b.iter(|| reconstruct_from_slice(&slice, &pair.g, &*a, &[1.0]).unwrap()));
    g.bench_function("residual", |b| b.iter(|| spectral_ode_residual(&pair.f, &pair.g, &*a, &[1.0], 64).unwrap()));
    g.finish();
}

fn multiplier(c: &mut Criterion) {
    c.bench_function("m0_eval", |b| b.iter(|| m0_eval(black_box(0.7))));
    c.bench_function("m0_derivative_3", |b| b.iter(|| m0_derivative(black_box(0.7), 3)));
}

criterion_group!(benches, oscillatory, sublevel, transport, multiplier);
criterion_main!(benches);
