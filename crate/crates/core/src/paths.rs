//! Driving Brownian paths, crossings of `2Z`, stopped Ito sums and smoothed
//! local time.
//!
//! Paths are stored unreflected; reflection happens where a path is
//! evaluated, which is harmless because every kernel here is even and
//! 2-periodic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{precondition, Result};
use crate::kernels::{reflect_raw, KernelConfig, PeriodicKernel};
use crate::params::{GridSpec, SmoothingParams};
use crate::report::ExperimentReport;
use crate::rng::{stream_rng, tag};

/// Positions `x0 + B` at the grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub x0: f64,
    pub positions: Vec<f64>,
    pub dt: f64,
}

impl Path {
    /// Brownian path with per-step variance `diffusivity * dt`.
    pub fn brownian<R: Rng + ?Sized>(x0: f64, nt: usize, dt: f64, diffusivity: f64, rng: &mut R) -> Self {
        let sd = (diffusivity * dt).sqrt();
        let mut positions = Vec::with_capacity(nt + 1);
        let mut x = x0;
        positions.push(x);
        for _ in 0..nt {
            let g: f64 = StandardNormal.sample(rng);
            x += sd * g;
            positions.push(x);
        }
        Self { x0, positions, dt }
    }

    pub fn nt(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn endpoint(&self) -> f64 {
        self.positions[self.nt()]
    }

    /// Mirror image `-x0 - B`.
    pub fn negated(&self) -> Self {
        Self {
            x0: -self.x0,
            positions: self.positions.iter().map(|x| -x).collect(),
            dt: self.dt,
        }
    }
}

/// Standard Brownian path from `x0`, reproducible from `seed`.
pub fn sample_path(x0: f64, grid: &GridSpec, seed: u64) -> Path {
    sample_path_indexed(x0, grid, seed, 0)
}

/// Path number `index` of the ensemble keyed by `master`.
pub fn sample_path_indexed(x0: f64, grid: &GridSpec, master: u64, index: u64) -> Path {
    let mut rng = stream_rng(master, tag::PATHS, index);
    Path::brownian(x0, grid.nt, grid.dt(), 1.0, &mut rng)
}

/// True when the segment from `a` to `b` meets `2Z`, endpoint `b` included.
#[inline]
pub fn crosses_even(a: f64, b: f64) -> bool {
    let hb = 0.5 * b;
    (0.5 * a).floor() != hb.floor() || hb == hb.floor()
}

/// First index at which the sequence touches or has crossed `2Z` under
/// linear interpolation; the sequence length minus one if it never does.
pub fn first_crossing(seq: &[f64]) -> usize {
    let last = seq.len() - 1;
    let h0 = 0.5 * seq[0];
    if h0 == h0.floor() {
        return 0;
    }
    (1..seq.len()).find(|&k| crosses_even(seq[k - 1], seq[k])).unwrap_or(last)
}

/// Two paths with the crossing index of their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedPair {
    pub path1: Path,
    pub path2: Path,
    pub tau_index: usize,
}

impl StoppedPair {
    pub fn new(path1: Path, path2: Path) -> Result<Self> {
        if path1.positions.len() != path2.positions.len() {
            return Err(precondition("paired paths must share a grid"));
        }
        let diff: Vec<f64> = path1.positions.iter().zip(&path2.positions).map(|(a, b)| a - b).collect();
        let tau_index = first_crossing(&diff);
        Ok(Self { path1, path2, tau_index })
    }
}

/// Which process drives the stopped integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralMode {
    Difference,
    Sum,
    Single,
}

/// Left-point sum of `R(D_k) (D_{k+1} - D_k)` up to the first crossing of
/// `2Z` by `D`. Returns the sum and the stopping index.
pub fn stopped_ito_sum(seq: &[f64], kernel: &PeriodicKernel) -> (f64, usize) {
    let h0 = 0.5 * seq[0];
    if h0 == h0.floor() {
        return (0.0, 0);
    }
    let mut s = 0.0;
    for k in 1..seq.len() {
        s += kernel.value(seq[k - 1]) * (seq[k] - seq[k - 1]);
        if crosses_even(seq[k - 1], seq[k]) {
            return (s, k);
        }
    }
    (s, seq.len() - 1)
}

/// Stopped Ito integral of the periodic kernel along the chosen process.
/// Each mode stops at the first crossing of `2Z` by its own process.
pub fn ito_integral_r(pair: &StoppedPair, eps: f64, mode: IntegralMode, cfg: &KernelConfig) -> Result<f64> {
    let kernel = PeriodicKernel::new(eps, cfg)?;
    let (p1, p2) = (&pair.path1.positions, &pair.path2.positions);
    let seq: Vec<f64> = match mode {
        IntegralMode::Difference => p1.iter().zip(p2).map(|(a, b)| a - b).collect(),
        IntegralMode::Sum => p1.iter().zip(p2).map(|(a, b)| a + b).collect(),
        IntegralMode::Single => p1.clone(),
    };
    Ok(stopped_ito_sum(&seq, &kernel).0)
}

/// `sum_k p_neumann(eps, reflect(X_k), y) dt` over the left endpoints.
pub fn local_time_smooth(p: &Path, sp: &SmoothingParams, y: f64, cfg: &KernelConfig) -> Result<f64> {
    let k = PeriodicKernel::new(sp.eps, cfg)?;
    let n = p.nt();
    Ok(p.positions[..n]
        .iter()
        .map(|&x| {
            let r = reflect_raw(x);
            k.value(r - y) + k.value(r + y)
        })
        .sum::<f64>()
        * p.dt)
}

/// Moments of the stopped occupation integral of the periodic kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// `E[(int_0^tau R(B) ds)^4]`.
    pub fourth: ExperimentReport,
    /// `E[(int_0^tau R(B)^2 ds)^2]`.
    pub squared_second: ExperimentReport,
}

/// Monte Carlo moments for a variance-2 Brownian motion from `x`, stopped at
/// the first visit to `2Z` or at the final time.
pub fn fourth_moment_experiment(
    x: f64,
    eps: f64,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<MomentReport> {
    if n_paths < 1000 {
        return Err(precondition(format!("moment experiment needs at least 1000 paths (got {n_paths})")));
    }
    let kernel = PeriodicKernel::new(eps, cfg)?;
    let dt = grid.dt();
    let sd = (2.0 * dt).sqrt();
    let samples: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, tag::PATHS, i);
            let h0 = 0.5 * x;
            if h0 == h0.floor() {
                return (0.0, 0.0);
            }
            let (mut b, mut one, mut two) = (x, 0.0, 0.0);
            for _ in 0..grid.nt {
                let r = kernel.value(b);
                one += r * dt;
                two += r * r * dt;
                let g: f64 = StandardNormal.sample(&mut rng);
                let next = b + sd * g;
                let crossed = crosses_even(b, next);
                b = next;
                if crossed {
                    break;
                }
            }
            (one.powi(4), two * two)
        })
        .collect();
    let fourth: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let second: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let build = |name: &str, v: &[f64]| {
        let mut r = ExperimentReport::from_samples(name, v, seed, grid);
        r.eps = eps;
        r.x = vec![x];
        r.n_paths = n_paths;
        r.ess = contribution_ess(v);
        r.degenerate = r.ess < 10.0;
        r
    };
    Ok(MomentReport {
        fourth: build("moment-fourth", &fourth),
        squared_second: build("moment-squared-second", &second),
    })
}

/// `(sum v)^2 / sum v^2` for nonnegative contributions.
pub fn contribution_ess(v: &[f64]) -> f64 {
    let s: f64 = v.iter().sum();
    let s2: f64 = v.iter().map(|a| a * a).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean_stderr, sample_variance};

    #[test]
    fn brownian_endpoint_moments() {
        let g = GridSpec::new(8, 50, 0.7).unwrap();
        let ends: Vec<f64> = (0..10_000).map(|i| sample_path_indexed(0.3, &g, 5, i).endpoint() - 0.3).collect();
        let (m, se) = mean_stderr(&ends);
        assert!(m.abs() < 3.0 * se);
        assert!((sample_variance(&ends) / 0.7 - 1.0).abs() < 0.05);
        let p = sample_path(0.3, &g, 1);
        assert_eq!(p.positions[0], 0.3);
        assert!(p.positions.iter().all(|&x| (0.0..=1.0).contains(&reflect_raw(x))));
        assert_eq!(p, sample_path(0.3, &g, 1));
    }

    #[test]
    fn crossing_detection() {
        assert_eq!(first_crossing(&[0.5, 0.8, 1.9, 2.1, 1.5]), 3);
        assert_eq!(first_crossing(&[0.5, 0.1, -0.1]), 2);
        assert_eq!(first_crossing(&[0.0, 0.5]), 0);
        assert_eq!(first_crossing(&[0.5, 1.0, 1.5, 2.0]), 3);
        assert_eq!(first_crossing(&[2.5, 2.0, 2.5]), 1);
        assert_eq!(first_crossing(&[0.5, 0.7, 1.9]), 2);
        assert_eq!(first_crossing(&[-3.0, -2.5]), 1);
        assert_eq!(first_crossing(&[-3.0, -2.5, -1.5]), 2);
        assert_eq!(first_crossing(&[-2.5, -3.5]), 1);
    }

    #[test]
    fn zero_increments_give_zero_integral() {
        let p = Path { x0: 0.3, positions: vec![0.3; 11], dt: 0.1 };
        let q = Path { x0: 0.6, positions: vec![0.6; 11], dt: 0.1 };
        let pair = StoppedPair::new(p, q).unwrap();
        assert_eq!(pair.tau_index, 10);
        for mode in [IntegralMode::Difference, IntegralMode::Sum, IntegralMode::Single] {
            assert_eq!(ito_integral_r(&pair, 0.01, mode, &KernelConfig::default()).unwrap(), 0.0);
        }
    }

    #[test]
    fn sum_mode_is_difference_mode_of_mirrored_partner() {
        let g = GridSpec::new(8, 400, 1.0).unwrap();
        let cfg = KernelConfig::default();
        for i in 0..50 {
            let p1 = sample_path_indexed(0.3, &g, 8, 2 * i);
            let p2 = sample_path_indexed(0.55, &g, 8, 2 * i + 1);
            let a = ito_integral_r(&StoppedPair::new(p1.clone(), p2.clone()).unwrap(), 0.02, IntegralMode::Sum, &cfg).unwrap();
            let b = ito_integral_r(&StoppedPair::new(p1, p2.negated()).unwrap(), 0.02, IntegralMode::Difference, &cfg)
                .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ito_integral_is_centred() {
        let g = GridSpec::new(8, 200, 0.5).unwrap();
        let cfg = KernelConfig::default();
        let vals: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let p1 = sample_path_indexed(0.2, &g, 31, 2 * i);
                let p2 = sample_path_indexed(0.45, &g, 31, 2 * i + 1);
                ito_integral_r(&StoppedPair::new(p1, p2).unwrap(), 0.05, IntegralMode::Difference, &cfg).unwrap()
            })
            .collect();
        let (m, se) = mean_stderr(&vals);
        assert!(m.abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn local_time_localizes() {
        let sp = SmoothingParams::new(1e-4, 0.1).unwrap();
        let p = Path { x0: 0.5, positions: vec![0.5; 101], dt: 0.01 };
        assert!(local_time_smooth(&p, &sp, 0.0, &KernelConfig::default()).unwrap() < 1e-100);
    }

    #[test]
    fn immediate_stop_gives_zero_moments() {
        let g = GridSpec::new(8, 100, 1.0).unwrap();
        let r = fourth_moment_experiment(2.0, 0.01, &g, 1000, 3, &KernelConfig::default()).unwrap();
        assert_eq!(r.fourth.estimate, 0.0);
        assert_eq!(r.squared_second.estimate, 0.0);
        assert!(fourth_moment_experiment(0.5, 0.01, &g, 10, 3, &KernelConfig::default()).is_err());
    }
}
