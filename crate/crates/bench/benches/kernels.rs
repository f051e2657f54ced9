use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pnvflow_bench::{torus_chart, torus_data};
use pnvflow_core::evolution::{initial_state_unchecked, rhs, rk4_step};
use pnvflow_core::geometry::riemann_up;
use pnvflow_core::{GeometryCache, SystemKind};

const SIZES: [usize; 3] = [32, 64, 128];

fn differentiation(c: &mut Criterion) {
    let mut group = c.benchmark_group("diff");
    for n in SIZES {
        let chart = torus_chart(n);
        let f: Vec<f64> = (0..chart.len())
            .map(|p| chart.coord(p, 0).sin() * chart.coord(p, 1).cos())
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| chart.gradient(black_box(&f)))
        });
    }
    group.finish();
}

fn curvature(c: &mut Criterion) {
    let mut group = c.benchmark_group("curvature");
    for n in SIZES {
        let data = torus_data(n);
        group.bench_with_input(BenchmarkId::new("christoffel", n), &n, |b, _| {
            b.iter(|| GeometryCache::new(black_box(&data.g)).unwrap())
        });
        let geo = GeometryCache::new(&data.g).unwrap();
        group.bench_with_input(BenchmarkId::new("riemann", n), &n, |b, _| {
            b.iter(|| riemann_up(black_box(&geo)))
        });
    }
    group.finish();
}

fn evolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolution");
    group.sample_size(20);
    for n in [32, 64] {
        let data = torus_data(n);
        let state = initial_state_unchecked(&data).unwrap();
        let lapse = data.lapse.sample(&data.chart, 0.0).unwrap();
        for kind in [SystemKind::PnvA, SystemKind::PnvB] {
            group.bench_with_input(BenchmarkId::new(format!("rhs/{kind:?}"), n), &n, |b, _| {
                b.iter(|| rhs(kind, black_box(&state), &lapse, 0.0).unwrap())
            });
        }
        let dt = 0.25 * data.chart.min_spacing();
        group.bench_with_input(BenchmarkId::new("rk4_step", n), &n, |b, _| {
            b.iter(|| rk4_step(SystemKind::PnvB, black_box(&state), dt, &data.lapse, 0.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, differentiation, curvature, evolution);
criterion_main!(benches);
