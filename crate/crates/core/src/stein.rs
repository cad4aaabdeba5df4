//! Stein-identity residuals, Gaussianity checks and the limiting correction
//! groups for pairings `Y = <u_t - alpha, f>`.
//!
//! A centred Gaussian `Y` with variance `|f|^2` satisfies
//! `E[F(Y) Y] = |f|^2 E[F'(Y)]` for every bounded smooth `F`; the residual of
//! that identity is what every report here carries.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{precondition, Error, Result};
use crate::fields::{sample_initial, sample_noise, SmoothedInitial};
use crate::kernels::{altsign_raw, reflect_raw, zigzag_raw, KernelConfig};
use crate::params::{BoundaryParams, GridSpec, SmoothingParams};
use crate::polymer::{poly_expect, Estimate, PolymerEnv, WalkRecord, WeightedEnsemble};
use crate::quadrature::GaussLegendre;
use crate::rng::{derive_seed, stream_rng, tag};
use crate::she_pde::flow_sbe;
use crate::stats::{ks_one_sample, mean_stderr, normal_cdf, sample_variance, KsResult};

/// Bounded outer functions `F` with bounded derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterFn {
    Identity,
    Tanh,
    Sin,
    Sin2,
    /// `exp(-1 / (1 - (y/a)^2))` on `|y| < a`, `a = 1.5`.
    Bump,
}

const BUMP_HALF_WIDTH: f64 = 1.5;

impl OuterFn {
    pub const ALL: [OuterFn; 5] = [OuterFn::Identity, OuterFn::Tanh, OuterFn::Sin, OuterFn::Sin2, OuterFn::Bump];

    pub fn name(&self) -> &'static str {
        match self {
            OuterFn::Identity => "identity",
            OuterFn::Tanh => "tanh",
            OuterFn::Sin => "sin",
            OuterFn::Sin2 => "sin2",
            OuterFn::Bump => "bump",
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        match self {
            OuterFn::Identity => y,
            OuterFn::Tanh => y.tanh(),
            OuterFn::Sin => y.sin(),
            OuterFn::Sin2 => (2.0 * y).sin(),
            OuterFn::Bump => {
                let s = (y / BUMP_HALF_WIDTH).powi(2);
                if s < 1.0 {
                    (-1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            OuterFn::Identity => 1.0,
            OuterFn::Tanh => 1.0 - y.tanh().powi(2),
            OuterFn::Sin => y.cos(),
            OuterFn::Sin2 => 2.0 * (2.0 * y).cos(),
            OuterFn::Bump => {
                let a2 = BUMP_HALF_WIDTH * BUMP_HALF_WIDTH;
                let s = y * y / a2;
                if s < 1.0 {
                    let q = 1.0 - s;
                    (-1.0 / q).exp() * (-2.0 * y / a2) / (q * q)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Envelope modulation of a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Modulation {
    None,
    Cos(u32),
    Sin(u32),
}

/// `cos^2` bump of a given width, optionally modulated; vanishes outside
/// `[center - width/2, center + width/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub center: f64,
    pub width: f64,
    pub modulation: Modulation,
    norm_sq: f64,
}

impl TestFunction {
    pub fn new(center: f64, width: f64, modulation: Modulation) -> Result<Self> {
        let (a, b) = (center - 0.5 * width, center + 0.5 * width);
        if !(width > 0.0 && a >= 0.0 && b <= 1.0) {
            return Err(crate::error::domain(format!("bump [{a}, {b}] leaves [0, 1]")));
        }
        let name = match modulation {
            Modulation::None => format!("bump(c={center},w={width})"),
            Modulation::Cos(k) => format!("bump(c={center},w={width})*cos{k}"),
            Modulation::Sin(k) => format!("bump(c={center},w={width})*sin{k}"),
        };
        let mut f = Self { name, center, width, modulation, norm_sq: 0.0 };
        f.norm_sq = f.quadrature(8, 16).iter().map(|(x, w)| w * f.value(*x).powi(2)).sum();
        Ok(f)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - 0.5 * self.width, self.center + 0.5 * self.width)
    }

    /// `int_0^1 f^2`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    fn envelope(&self, x: f64) -> (f64, f64) {
        let s = (x - self.center) / self.width;
        if s.abs() >= 0.5 {
            return (0.0, 0.0);
        }
        let c = (PI * s).cos();
        (c * c, -PI / self.width * (2.0 * PI * s).sin())
    }

    fn carrier(&self, x: f64) -> (f64, f64) {
        let d = x - self.center;
        match self.modulation {
            Modulation::None => (1.0, 0.0),
            Modulation::Cos(k) => {
                let w = k as f64 * PI;
                ((w * d).cos(), -w * (w * d).sin())
            }
            Modulation::Sin(k) => {
                let w = k as f64 * PI;
                ((w * d).sin(), w * (w * d).cos())
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.envelope(x).0 * self.carrier(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (e, de) = self.envelope(x);
        let (m, dm) = self.carrier(x);
        de * m + e * dm
    }

    /// Composite Gauss-Legendre nodes and weights on the support.
    pub fn quadrature(&self, panels: usize, order: usize) -> Vec<(f64, f64)> {
        let (a, b) = self.support();
        let h = (b - a) / panels as f64;
        (0..panels)
            .flat_map(|p| {
                let g = GaussLegendre::on_interval(order, a + p as f64 * h, a + (p + 1) as f64 * h);
                g.nodes.into_iter().zip(g.weights).collect::<Vec<_>>()
            })
            .collect()
    }
}

/// One outer function against one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionPair {
    pub outer: OuterFn,
    pub test: TestFunction,
}

/// Outer functions and test functions checked against each other.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    pub outer: Vec<OuterFn>,
    pub tests: Vec<TestFunction>,
}

impl Battery {
    /// Ten plain bumps and ten modulated wide bumps, all inside `[0.1, 0.9]`.
    pub fn standard() -> Self {
        let mut tests = Vec::new();
        for w in [0.3, 0.4] {
            for c in [0.3, 0.4, 0.5, 0.6, 0.7] {
                tests.push(TestFunction::new(c, w, Modulation::None).expect("bump inside [0, 1]"));
            }
        }
        for k in 1..=5 {
            for m in [Modulation::Cos(k), Modulation::Sin(k)] {
                tests.push(TestFunction::new(0.5, 0.8, m).expect("bump inside [0, 1]"));
            }
        }
        Self { outer: OuterFn::ALL.to_vec(), tests }
    }

    /// Every outer function against the centred bump of width 0.4 only.
    pub fn primary() -> Self {
        Self {
            outer: OuterFn::ALL.to_vec(),
            tests: vec![TestFunction::new(0.5, 0.4, Modulation::None).expect("bump inside [0, 1]")],
        }
    }
}

/// `E[F(Y) Y]` against `|f|^2 E[F'(Y)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinRow {
    pub outer: String,
    pub test: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl SteinRow {
    pub fn from_samples(outer: OuterFn, test: &TestFunction, ys: &[f64]) -> Self {
        let nf = test.norm_sq();
        let lhs_s: Vec<f64> = ys.iter().map(|&y| outer.value(y) * y).collect();
        let rhs_s: Vec<f64> = ys.iter().map(|&y| nf * outer.derivative(y)).collect();
        let diff: Vec<f64> = lhs_s.iter().zip(&rhs_s).map(|(a, b)| a - b).collect();
        let lhs = mean_stderr(&lhs_s).0;
        let rhs = mean_stderr(&rhs_s).0;
        Self {
            outer: outer.name().to_string(),
            test: test.name.clone(),
            lhs,
            rhs,
            residual: lhs - rhs,
            stderr: mean_stderr(&diff).1,
            n_samples: ys.len(),
        }
    }

    /// Residual in units of its standard error.
    pub fn z(&self) -> f64 {
        self.residual / self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SteinReport {
    pub rows: Vec<SteinRow>,
}

impl SteinReport {
    /// `samples[j]` holds the pairings with `battery.tests[j]`.
    pub fn from_samples(battery: &Battery, samples: &[Vec<f64>]) -> Self {
        let mut rows = Vec::new();
        for (test, ys) in battery.tests.iter().zip(samples) {
            for &outer in &battery.outer {
                rows.push(SteinRow::from_samples(outer, test, ys));
            }
        }
        Self { rows }
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z().abs()).fold(0.0, f64::max)
    }

    pub fn all_within(&self, n_se: f64) -> bool {
        self.rows.iter().all(|r| r.z().abs() <= n_se)
    }
}

/// Synthetic `N(0, scale |f|^2)` pairings for each test function.
pub fn synthetic_pairings(battery: &Battery, n_samples: usize, seed: u64, variance_scale: f64) -> Vec<Vec<f64>> {
    battery
        .tests
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let mut rng = stream_rng(seed, tag::SYNTHETIC, j as u64);
            let sd = (variance_scale * f.norm_sq()).sqrt();
            (0..n_samples)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    sd * g
                })
                .collect()
        })
        .collect()
}

/// Residuals on exactly Gaussian pairings; calibrates the harness.
pub fn stein_residual_gaussian_selftest(battery: &Battery, n_samples: usize, seed: u64) -> Result<SteinReport> {
    stein_residual_synthetic(battery, n_samples, seed, 1.0)
}

/// As the self-test, with the variance multiplied by `variance_scale`.
pub fn stein_residual_synthetic(battery: &Battery, n_samples: usize, seed: u64, variance_scale: f64) -> Result<SteinReport> {
    if n_samples < 10_000 {
        return Err(precondition(format!("self-test needs at least 10^4 samples (got {n_samples})")));
    }
    let s = synthetic_pairings(battery, n_samples, seed, variance_scale);
    Ok(SteinReport::from_samples(battery, &s))
}

/// How the slope field `u_t` is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SbeSource {
    /// The initial white noise itself.
    Initial,
    /// The discrete open heat equation; the grid must satisfy `dt <= dx^2/2`.
    Flow,
    /// Smoothed polymer field `u_theta` with `n_paths` per quadrature node.
    Polymer { sp: SmoothingParams, n_paths: usize },
}

const POLYMER_SPAN: (f64, f64) = (0.1, 0.9);
const POLYMER_PANELS: usize = 16;
const POLYMER_ORDER: usize = 3;

fn span_quadrature() -> Vec<(f64, f64)> {
    let (a, b) = POLYMER_SPAN;
    let h = (b - a) / POLYMER_PANELS as f64;
    (0..POLYMER_PANELS)
        .flat_map(|p| {
            let g = GaussLegendre::on_interval(POLYMER_ORDER, a + p as f64 * h, a + (p + 1) as f64 * h);
            g.nodes.into_iter().zip(g.weights).collect::<Vec<_>>()
        })
        .collect()
}

fn cell_pairing(u: &[f64], alpha: f64, f: &TestFunction) -> f64 {
    let n = u.len();
    let dx = 1.0 / n as f64;
    u.iter().enumerate().map(|(i, v)| (v - alpha) * f.value((i as f64 + 0.5) * dx)).sum::<f64>() * dx
}

/// Pairings of `u_t - alpha` with every test function, one row per test
/// function, one column per realization of noise and initial data.
pub fn sbe_pairings(
    grid: &GridSpec,
    bp: &BoundaryParams,
    source: SbeSource,
    tests: &[TestFunction],
    n_samples: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<Vec<Vec<f64>>> {
    let per = realizations(grid, bp, source, tests, n_samples, seed, cfg)?;
    Ok(transpose(&per, tests.len()))
}

/// Flow pairings together with `h(1) - h(0)` for each realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEnsemble {
    /// `pairings[j][r]` pairs realization `r` with test function `j`.
    pub pairings: Vec<Vec<f64>>,
    pub height_differences: Vec<f64>,
}

pub fn flow_ensemble(
    grid: &GridSpec,
    bp: &BoundaryParams,
    tests: &[TestFunction],
    n_samples: usize,
    seed: u64,
) -> Result<FlowEnsemble> {
    let per = realizations(grid, bp, SbeSource::Flow, tests, n_samples, seed, &KernelConfig::default())?;
    Ok(FlowEnsemble {
        pairings: transpose(&per, tests.len()),
        height_differences: per.iter().filter_map(|r| r.height_difference).collect(),
    })
}

struct Realization {
    pairings: Vec<f64>,
    /// Absent for the polymer field, which is evaluated inside `[0.1, 0.9]` only.
    height_difference: Option<f64>,
}

fn transpose(per: &[Realization], n_tests: usize) -> Vec<Vec<f64>> {
    (0..n_tests).map(|j| per.iter().map(|r| r.pairings[j]).collect()).collect()
}

fn realizations(
    grid: &GridSpec,
    bp: &BoundaryParams,
    source: SbeSource,
    tests: &[TestFunction],
    n_samples: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<Vec<Realization>> {
    bp.require_drift_symmetric()?;
    let alpha = bp.alpha;
    let quad = span_quadrature();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|r| {
            let id = sample_initial(grid, alpha, derive_seed(seed, tag::INITIAL, r));
            match source {
                SbeSource::Initial => Ok(Realization {
                    pairings: tests.iter().map(|f| cell_pairing(&id.u0_values, alpha, f)).collect(),
                    height_difference: Some(id.h0_values[grid.nx] - id.h0_values[0]),
                }),
                SbeSource::Flow => {
                    let p = flow_sbe(&id, bp, grid, derive_seed(seed, tag::FLOW, r))?;
                    Ok(Realization {
                        pairings: tests.iter().map(|f| cell_pairing(&p.u_field, alpha, f)).collect(),
                        height_difference: Some(p.height_difference()),
                    })
                }
                SbeSource::Polymer { sp, n_paths } => {
                    let nr = sample_noise(grid, &sp, derive_seed(seed, tag::NOISE, r));
                    let init = SmoothedInitial::new(&id, sp.kappa);
                    let env = PolymerEnv::new(Some(&nr), init, &sp, bp, grid, cfg)?;
                    let ps = derive_seed(seed, tag::PATHS, r);
                    let mut u = Vec::with_capacity(quad.len());
                    for &(x, _) in &quad {
                        let ens = env.ensemble(x, n_paths, ps, 0, true)?;
                        u.push(poly_expect(&ens, |w| w.slope)?.value);
                    }
                    let pairings = tests
                        .iter()
                        .map(|f| quad.iter().zip(&u).map(|((x, w), ux)| w * (ux - alpha) * f.value(*x)).sum())
                        .collect();
                    Ok(Realization { pairings, height_difference: None })
                }
            }
        })
        .collect()
}

/// Stein residuals of `<u_t - alpha, f>` over the battery.
pub fn stein_residual_sbe(
    grid: &GridSpec,
    bp: &BoundaryParams,
    source: SbeSource,
    battery: &Battery,
    n_samples: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<SteinReport> {
    let s = sbe_pairings(grid, bp, source, &battery.tests, n_samples, seed, cfg)?;
    Ok(SteinReport::from_samples(battery, &s))
}

/// Mean, variance and KS checks of pairings against `N(0, |f|^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianityReport {
    pub n: usize,
    pub mean: f64,
    pub mean_z: f64,
    pub variance: f64,
    /// Deviation of the sample variance in units of its chi-square spread.
    pub variance_z: f64,
    pub ks: KsResult,
}

impl GaussianityReport {
    pub fn passed(&self, n_se: f64, ks_level: f64) -> bool {
        self.mean_z.abs() < n_se && self.variance_z.abs() < n_se && self.ks.p_value > ks_level
    }
}

pub fn gaussianity_battery(samples: &[f64], norm_sq: f64) -> Result<GaussianityReport> {
    let n = samples.len();
    if n < 1000 {
        return Err(precondition(format!("gaussianity battery needs at least 1000 samples (got {n})")));
    }
    let (mean, _) = mean_stderr(samples);
    let sd = norm_sq.sqrt();
    let variance = sample_variance(samples);
    Ok(GaussianityReport {
        n,
        mean,
        mean_z: mean / (sd / (n as f64).sqrt()),
        variance,
        variance_z: (variance - norm_sq) / (norm_sq * (2.0 / (n as f64 - 1.0)).sqrt()),
        ks: ks_one_sample(samples, |y| normal_cdf(y / sd)),
    })
}

/// The three groups of the limiting correction term, averaged over
/// realizations of noise and initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    /// Two-path term from distinct starts, weighted by `F'(Y)`.
    pub pair_group: Estimate,
    /// Two-path term from a shared start, weighted by `F(Y)`.
    pub diagonal_group: Estimate,
    /// One-path term, weighted by `F(Y)`.
    pub single_group: Estimate,
    /// Diagonal plus single group.
    pub diagonal_plus_single: Estimate,
    pub total: Estimate,
    pub n_samples: usize,
    pub n_paths: usize,
}

/// `zeta(d/2)/2 + zeta(s/2)/2 + sigma(x1) 1[rho(x1) <= rho(x2)]`.
#[inline]
pub fn endpoint_bracket(x1: f64, x2: f64) -> f64 {
    let ind = if reflect_raw(x1) <= reflect_raw(x2) { 1.0 } else { 0.0 };
    0.5 * zigzag_raw(0.5 * (x1 - x2)) + 0.5 * zigzag_raw(0.5 * (x1 + x2)) + altsign_raw(x1) * ind
}

/// `zeta(x)/2 + sigma(x)/2`.
#[inline]
pub fn endpoint_single(x: f64) -> f64 {
    0.5 * zigzag_raw(x) + 0.5 * altsign_raw(x)
}

fn over_realizations(v: &[f64]) -> Estimate {
    let (value, stderr) = mean_stderr(v);
    Estimate { value, stderr, ess: v.len() as f64 }
}

/// Monte Carlo estimates of the three limiting groups at smoothing `sp`.
#[allow(clippy::too_many_arguments)]
pub fn gamma_terms(
    grid: &GridSpec,
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    pair: &TestFunctionPair,
    n_samples: usize,
    n_paths: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<GammaReport> {
    bp.require_drift_symmetric()?;
    if sp.eps > 1e-2 {
        return Err(precondition(format!("correction groups need eps <= 1e-2 (got {})", sp.eps)));
    }
    let f = &pair.test;
    let outer = pair.outer;
    let quad = f.quadrature(6, 4);
    let fw: Vec<f64> = quad.iter().map(|(x, w)| w * f.value(*x)).collect();
    let dfw: Vec<f64> = quad.iter().map(|(x, w)| w * f.derivative(*x)).collect();
    let alpha = bp.alpha;
    let groups: Result<Vec<[f64; 3]>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|r| {
            let id = sample_initial(grid, alpha, derive_seed(seed, tag::INITIAL, r));
            let nr = sample_noise(grid, sp, derive_seed(seed, tag::NOISE, r));
            let env = PolymerEnv::new(Some(&nr), SmoothedInitial::new(&id, sp.kappa), sp, bp, grid, cfg)?;
            let ps = derive_seed(seed, tag::PATHS, r);
            let mut first: Vec<WeightedEnsemble<WalkRecord>> = Vec::with_capacity(quad.len());
            let mut second: Vec<WeightedEnsemble<WalkRecord>> = Vec::with_capacity(quad.len());
            for &(x, _) in &quad {
                first.push(env.ensemble(x, n_paths, ps, 0, true)?);
                second.push(env.ensemble(x, n_paths, ps, n_paths as u64, false)?);
            }
            let mut y = 0.0;
            for (k, e) in first.iter().enumerate() {
                y += fw[k] * (poly_expect(e, |w| w.slope)?.value - alpha);
            }
            let wa: Vec<Vec<f64>> = first.iter().map(|e| e.weights()).collect();
            let wb: Vec<Vec<f64>> = second.iter().map(|e| e.weights()).collect();
            let pair_mean = |k: usize, l: usize| {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..n_paths {
                    let w = wa[k][i] * wb[l][i];
                    num += w * endpoint_bracket(first[k].samples[i].endpoint, second[l].samples[i].endpoint);
                    den += w;
                }
                num / den
            };
            let mut g1 = 0.0;
            let mut g2 = 0.0;
            let mut g3 = 0.0;
            for k in 0..quad.len() {
                for l in 0..quad.len() {
                    g1 += fw[k] * dfw[l] * pair_mean(k, l);
                }
                g2 += fw[k] * pair_mean(k, k);
                let single: f64 = (0..n_paths).map(|i| wa[k][i] * endpoint_single(first[k].samples[i].endpoint)).sum();
                g3 += fw[k] * single;
            }
            let (fy, dfy) = (outer.value(y), outer.derivative(y));
            let out = [-dfy * g1, -fy * g2, fy * g3];
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { term: "correction group" });
            }
            Ok(out)
        })
        .collect();
    let groups = groups?;
    let col = |j: usize| groups.iter().map(|g| g[j]).collect::<Vec<f64>>();
    let g23: Vec<f64> = groups.iter().map(|g| g[1] + g[2]).collect();
    let tot: Vec<f64> = groups.iter().map(|g| g[0] + g[1] + g[2]).collect();
    Ok(GammaReport {
        pair_group: over_realizations(&col(0)),
        diagonal_group: over_realizations(&col(1)),
        single_group: over_realizations(&col(2)),
        diagonal_plus_single: over_realizations(&g23),
        total: over_realizations(&tot),
        n_samples,
        n_paths,
    })
}
