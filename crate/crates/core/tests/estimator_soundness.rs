//! Calibration of the statistical estimators against known answers.

use openkpz_core::fields::sample_noise;
use openkpz_core::kernels::reflect;
use openkpz_core::polymer::{frozen_initial, poly_expect};
use openkpz_core::stats::sample_variance;
use openkpz_core::stein::{sbe_pairings, stein_residual_gaussian_selftest, SbeSource};
use openkpz_core::{Battery, BoundaryParams, GridSpec, KernelConfig, PolymerEnv, SmoothingParams};

#[test]
fn stein_residuals_are_standard_normal_on_gaussian_input() {
    let battery = Battery::primary();
    let mut zs = Vec::new();
    for r in 0..100 {
        let rep = stein_residual_gaussian_selftest(&battery, 10_000, 1000 + r).unwrap();
        zs.extend(rep.rows.iter().map(|row| row.z()));
    }
    let mean_abs = zs.iter().map(|z| z.abs()).sum::<f64>() / zs.len() as f64;
    assert!(mean_abs < 1.5, "mean |z| {mean_abs}");
    // E|Z| = sqrt(2/pi) for a standard normal.
    assert!((mean_abs - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.1, "mean |z| {mean_abs}");
    let within = zs.iter().filter(|z| z.abs() <= 3.0).count() as f64 / zs.len() as f64;
    assert!(within > 0.98, "fraction within 3 SE {within}");
}

#[test]
fn independent_polymer_paths_factorize() {
    let cfg = KernelConfig::default();
    let grid = GridSpec::new(32, 40, 0.2).unwrap();
    let sp = SmoothingParams::new(0.05, 0.05).unwrap();
    let bp = BoundaryParams::new(0.3, 0.9).unwrap();
    let nr = sample_noise(&grid, &sp, 5);
    let env = PolymerEnv::new(Some(&nr), frozen_initial(&grid, &sp, &bp, 6), &sp, &bp, &grid, &cfg).unwrap();
    let m = 4000;
    let a = env.ensemble(0.3, m, 7, 0, false).unwrap();
    let b = env.ensemble(0.7, m, 7, m as u64, false).unwrap();
    let f = |x: f64| (std::f64::consts::PI * reflect(x).unwrap()).cos();
    let g = |x: f64| reflect(x).unwrap();
    let joint = poly_expect(&a.zip(&b).unwrap(), |(p, q)| f(p.endpoint) * g(q.endpoint)).unwrap();
    let ef = poly_expect(&a, |p| f(p.endpoint)).unwrap();
    let eg = poly_expect(&b, |q| g(q.endpoint)).unwrap();
    let product = ef.value * eg.value;
    let se = (joint.stderr.powi(2) + (ef.stderr * eg.value).powi(2) + (ef.value * eg.stderr).powi(2)).sqrt();
    assert!((joint.value - product).abs() <= 3.0 * se, "{} vs {product} (se {se})", joint.value);
}

#[test]
fn polymer_slope_variance_approaches_white_noise() {
    let cfg = KernelConfig::default();
    let grid = GridSpec::new(64, 40, 0.1).unwrap();
    let bp = BoundaryParams::stationary(0.0).unwrap();
    let battery = Battery::primary();
    let norm = battery.tests[0].norm_sq();
    let n = 200;
    let gap = |eps: f64| {
        let sp = SmoothingParams::new(eps, eps).unwrap();
        let source = SbeSource::Polymer { sp, n_paths: 200 };
        let ys = &sbe_pairings(&grid, &bp, source, &battery.tests, n, 17, &cfg).unwrap()[0];
        let v = sample_variance(ys);
        ((v - norm).abs(), v * (2.0 / (n as f64 - 1.0)).sqrt())
    };
    let (coarse, se_coarse) = gap(1e-1);
    let (fine, se_fine) = gap(1e-2);
    assert!(
        fine <= coarse + 2.0 * (se_coarse.powi(2) + se_fine.powi(2)).sqrt(),
        "|Var - |f|^2|: {coarse} at eps 0.1, {fine} at eps 0.01"
    );
}
