//! Benchmarks for the data-parallel hot paths against the sequential
//! fallback.
//!
//! With the default `parallel` feature the "parallel" legs run on the rayon
//! pool and the "single_thread" legs pin a one-thread pool, which is the
//! same code path the sequential fallback build takes. Building with
//! `--no-default-features` benches the pure fallback.

use criterion::{criterion_group, criterion_main, Criterion};
use nullsurf_core::deform::{DeformationContext, DeformationParams};
use nullsurf_core::forms::{build_f, BaseSpec};
use nullsurf_core::nulldisk::{bundled_disk, normalize_disk, BundledDisk};
use nullsurf_core::numeric::C;
use nullsurf_core::periods::raw_periods;
use nullsurf_core::surface::{make_surface, BackendSpec, LoopOptions};

fn torus_setup() -> (DeformationContext, DeformationParams) {
    let surface = make_surface(BackendSpec::Torus {
        tau: C::new(0.0, 1.0),
    })
    .unwrap();
    let base = build_f(&surface, BaseSpec::TorusP).unwrap();
    let (disk, _) = normalize_disk(&bundled_disk(BundledDisk::GzOmega1), None).unwrap();
    let ctx = DeformationContext::build(surface, base, disk, LoopOptions::default()).unwrap();
    let mut params = DeformationParams::zeros(ctx.n());
    params.lambda[0] = C::new(0.001, 0.0);
    (ctx, params)
}

fn grid_points(n: usize) -> Vec<C> {
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(C::new(
                -0.25 + i as f64 / n as f64,
                -0.25 + j as f64 / n as f64,
            ));
        }
    }
    out
}

fn bench_level_grid(c: &mut Criterion) {
    let (ctx, params) = torus_setup();
    let data = ctx.deformed(&params).unwrap();
    let points = grid_points(96);
    let mut group = c.benchmark_group("level_grid");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let values = nullsurf_core::exec::map(&points, |&z| data.level.eval(z).norm());
            criterion::black_box(values)
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let values = nullsurf_core::exec::map_seq(&points, |&z| data.level.eval(z).norm());
            criterion::black_box(values)
        })
    });
    group.finish();
}

fn bench_period_map(c: &mut Criterion) {
    let (ctx, params) = torus_setup();
    let mut group = c.benchmark_group("period_map");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| criterion::black_box(raw_periods(&ctx, &params, 1e-10).unwrap()))
    });
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function("single_thread", |b| {
            b.iter(|| {
                pool.install(|| criterion::black_box(raw_periods(&ctx, &params, 1e-10).unwrap()))
            })
        });
    }
    group.finish();
}

fn bench_psi_samples(c: &mut Criterion) {
    let (ctx, params) = torus_setup();
    let data = ctx.deformed(&params).unwrap();
    let points = grid_points(64);
    let mut group = c.benchmark_group("psi_samples");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let values = nullsurf_core::exec::map(&points, |&z| data.psi(z));
            criterion::black_box(values)
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let values = nullsurf_core::exec::map_seq(&points, |&z| data.psi(z));
            criterion::black_box(values)
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_level_grid,
    bench_period_map,
    bench_psi_samples
);
criterion_main!(benches);
