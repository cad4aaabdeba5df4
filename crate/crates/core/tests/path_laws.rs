//! Statistical laws of the Brownian path layer.

use openkpz_core::kernels::reflect;
use openkpz_core::paths::{ito_integral_r, local_time_smooth, sample_path_indexed, IntegralMode};
use openkpz_core::stats::{ks_two_sample, linear_fit};
use openkpz_core::{GridSpec, KernelConfig, Path, SmoothingParams, StoppedPair};

fn rho(x: f64) -> f64 {
    reflect(x).unwrap()
}

/// Endpoint of path 1 in pair `i`, optionally continued after the stopping
/// time with the increments of path 2. `None` when the pair never stops.
fn stopped_endpoint(grid: &GridSpec, master: u64, i: u64, exchanged: bool, conditioned: bool) -> Option<f64> {
    let p1 = sample_path_indexed(0.3, grid, master, 2 * i);
    let p2 = sample_path_indexed(0.6, grid, master, 2 * i + 1);
    let pair = StoppedPair::new(p1, p2).unwrap();
    let tau = pair.tau_index;
    if conditioned && tau >= grid.nt {
        return None;
    }
    let (a, b) = (&pair.path1.positions, &pair.path2.positions);
    Some(if exchanged { rho(a[tau] + (b[grid.nt] - b[tau])) } else { rho(a[grid.nt]) })
}

#[test]
fn continuations_are_exchangeable_after_the_stopping_time() {
    let grid = GridSpec::new(16, 2000, 0.1).unwrap();
    let n = 10_000u64;
    let original: Vec<f64> = (0..n).filter_map(|i| stopped_endpoint(&grid, 1, i, false, true)).collect();
    let swapped: Vec<f64> = (0..n).filter_map(|i| stopped_endpoint(&grid, 2, i, true, true)).collect();
    assert!(original.len() > 3000 && swapped.len() > 3000);
    let ks = ks_two_sample(&original, &swapped);
    assert!(ks.p_value > 0.01, "KS p {} D {}", ks.p_value, ks.statistic);

    // Without conditioning the two starts stay distinguishable.
    let start1: Vec<f64> = (0..n).filter_map(|i| stopped_endpoint(&grid, 3, i, false, false)).collect();
    let start2: Vec<f64> =
        (0..n).map(|i| rho(sample_path_indexed(0.6, &grid, 4, i).endpoint())).collect();
    assert!(ks_two_sample(&start1, &start2).p_value < 1e-6);
}

fn coarsen(p: &Path, factor: usize) -> Path {
    Path {
        x0: p.x0,
        positions: p.positions.iter().step_by(factor).copied().collect(),
        dt: p.dt * factor as f64,
    }
}

#[test]
fn ito_sum_refines_at_half_order() {
    let cfg = KernelConfig::default();
    let fine = GridSpec::new(16, 4096, 0.2).unwrap();
    let n = 1500u64;
    let factors = [64usize, 32, 16, 8, 4];
    let mut sq = vec![0.0; factors.len()];
    for i in 0..n {
        let p1 = sample_path_indexed(0.3, &fine, 11, 2 * i);
        let p2 = sample_path_indexed(0.6, &fine, 11, 2 * i + 1);
        for (j, &f) in factors.iter().enumerate() {
            let at = |g: usize| {
                let pair = StoppedPair::new(coarsen(&p1, g), coarsen(&p2, g)).unwrap();
                ito_integral_r(&pair, 0.05, IntegralMode::Difference, &cfg).unwrap()
            };
            sq[j] += (at(f) - at(f / 2)).powi(2);
        }
    }
    let dt: Vec<f64> = factors.iter().map(|&f| (fine.dt() * f as f64).ln()).collect();
    let rms: Vec<f64> = sq.iter().map(|s| (s / n as f64).sqrt().ln()).collect();
    let (_, slope, _) = linear_fit(&dt, &rms);
    assert!((0.3..=0.7).contains(&slope), "RMS refinement slope {slope}, log rms {rms:?}");
}

#[test]
fn local_time_at_the_wall_is_stable_in_eps() {
    let cfg = KernelConfig::default();
    let grid = GridSpec::new(16, 20_000, 1.0).unwrap();
    let paths: Vec<Path> = (0..1000).map(|i| sample_path_indexed(0.5, &grid, 21, i)).collect();
    let means: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let sp = SmoothingParams::new(eps, 0.1).unwrap();
            paths.iter().map(|p| local_time_smooth(p, &sp, 0.0, &cfg).unwrap()).sum::<f64>() / paths.len() as f64
        })
        .collect();
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo - 1.0 < 0.05, "means {means:?}");
}

#[test]
fn occupation_density_reproduces_time_averages() {
    let cfg = KernelConfig::default();
    let grid = GridSpec::new(16, 4000, 1.0).unwrap();
    let sp = SmoothingParams::new(1e-4, 0.1).unwrap();
    let f = |y: f64| 1.0 + (std::f64::consts::PI * y).cos() + y * y;
    let gl = openkpz_core::quadrature::GaussLegendre::on_interval(400, 0.0, 1.0);
    for i in 0..5 {
        let p = sample_path_indexed(0.4, &grid, 31, i);
        let direct: f64 = p.positions[..grid.nt].iter().map(|&x| f(rho(x))).sum::<f64>() * p.dt;
        let via_density = gl.integrate(|y| f(y) * local_time_smooth(&p, &sp, y, &cfg).unwrap());
        assert!((direct - via_density).abs() / direct < 0.02, "path {i}: {direct} vs {via_density}");
    }
}
