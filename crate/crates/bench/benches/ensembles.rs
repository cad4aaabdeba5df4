use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use openkpz_core::fields::{sample_initial, sample_noise};
use openkpz_core::polymer::{frozen_initial, z_theta};
use openkpz_core::she_pde::{flow_grid, flow_sbe, solve_smoothed_pde};
use openkpz_core::{BoundaryParams, GridSpec, KernelConfig, PolymerEnv, SmoothingParams};

fn polymer(c: &mut Criterion) {
    let cfg = KernelConfig::default();
    let grid = GridSpec::new(32, 100, 0.25).unwrap();
    let sp = SmoothingParams::new(0.05, 0.05).unwrap();
    let bp = BoundaryParams::new(0.3, 0.9).unwrap();
    let nr = sample_noise(&grid, &sp, 1);
    let init = frozen_initial(&grid, &sp, &bp, 2);
    let env = PolymerEnv::new(Some(&nr), init.clone(), &sp, &bp, &grid, &cfg).unwrap();
    let mut g = c.benchmark_group("polymer");
    g.sample_size(10);
    g.bench_function("z_theta_1000_paths", |b| b.iter(|| z_theta(black_box(0.5), &env, 1000, 7).unwrap()));
    g.bench_function("walk_with_slope", |b| {
        let mut rng = openkpz_core::rng::stream_rng(1, 2, 3);
        b.iter(|| env.walk(black_box(0.5), &mut rng, true).unwrap())
    });
    g.bench_function("smoothed_pde_nx128", |b| {
        let grid = GridSpec::new(128, 100, 0.25).unwrap();
        let nr = sample_noise(&grid, &sp, 1);
        b.iter(|| solve_smoothed_pde(&nr, &init, &sp, &bp, &grid, &cfg).unwrap())
    });
    g.finish();
}

fn flow(c: &mut Criterion) {
    let grid = flow_grid(64, 0.25).unwrap();
    let bp = BoundaryParams::stationary(0.0).unwrap();
    let id = sample_initial(&grid, 0.0, 4);
    let mut g = c.benchmark_group("flow");
    g.sample_size(10);
    g.bench_function("open_she_nx64_t025", |b| b.iter(|| flow_sbe(&id, &bp, &grid, black_box(5)).unwrap()));
    g.finish();
}

criterion_group!(benches, polymer, flow);
criterion_main!(benches);
