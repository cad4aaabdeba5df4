//! Feynman-Kac path weights, the smoothed fields `Z` and `u`, and
//! self-normalized polymer expectations over one, two and four paths.
//!
//! Along a path `X` the log-weight is
//! `sum_k [xi(n-1-k, X_k) - C(X_k)/2 + V(X_k)] dt + h0(X_n)`: the noise is read
//! backwards in time, which makes the path sum match the forward PDE step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{precondition, Error, Result};
use crate::fields::{sample_initial, sample_noise, NoiseRealization, SmoothedInitial, SmoothedNoise};
use crate::kernels::{KernelConfig, PeriodicKernel, SmoothedPotential};
use crate::params::{BoundaryParams, GridSpec, SmoothingParams};
use crate::paths::{crosses_even, Path};
use crate::report::ExperimentReport;
use crate::rng::{derive_seed, stream_rng, tag};

/// Below this effective sample size an ensemble is rejected.
pub const ESS_THRESHOLD: f64 = 10.0;

/// Weighted estimate with delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub ess: f64,
}

/// Samples with log-weights; expectations are self-normalized.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble<T> {
    pub samples: Vec<T>,
    pub log_weights: Vec<f64>,
    /// `log sum exp(log_weights)`.
    pub normalizer: f64,
    pub ess: f64,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<T> WeightedEnsemble<T> {
    pub fn new(samples: Vec<T>, log_weights: Vec<f64>) -> Result<Self> {
        if samples.len() != log_weights.len() || samples.is_empty() {
            return Err(precondition("ensemble needs one log-weight per sample"));
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite { term: "log-weight" });
        }
        let normalizer = log_sum_exp(&log_weights);
        let w: Vec<f64> = log_weights.iter().map(|l| (l - normalizer).exp()).collect();
        let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        Ok(Self { samples, log_weights, normalizer, ess })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Normalized weights summing to one.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| (l - self.normalizer).exp()).collect()
    }

    /// Product ensemble pairing sample `i` of `self` with sample `i` of `other`.
    pub fn zip<U: Clone>(&self, other: &WeightedEnsemble<U>) -> Result<WeightedEnsemble<(T, U)>>
    where
        T: Clone,
    {
        if self.len() != other.len() {
            return Err(precondition("zipped ensembles must have equal size"));
        }
        let samples = self.samples.iter().cloned().zip(other.samples.iter().cloned()).collect();
        let lw = self.log_weights.iter().zip(&other.log_weights).map(|(a, b)| a + b).collect();
        WeightedEnsemble::new(samples, lw)
    }

    /// Pairs sample `i` with sample `i + 1` (cyclically): two independent
    /// polymer paths from the same start.
    pub fn self_pairs(&self) -> Result<WeightedEnsemble<(T, T)>>
    where
        T: Clone,
    {
        let n = self.len();
        let samples = (0..n).map(|i| (self.samples[i].clone(), self.samples[(i + 1) % n].clone())).collect();
        let lw = (0..n).map(|i| self.log_weights[i] + self.log_weights[(i + 1) % n]).collect();
        WeightedEnsemble::new(samples, lw)
    }
}

/// Self-normalized expectation of `obs`.
pub fn poly_expect<T>(ens: &WeightedEnsemble<T>, obs: impl Fn(&T) -> f64) -> Result<Estimate> {
    if ens.ess < ESS_THRESHOLD {
        return Err(Error::Degenerate { ess: ens.ess, threshold: ESS_THRESHOLD });
    }
    let w = ens.weights();
    let vals: Vec<f64> = ens.samples.iter().map(obs).collect();
    Ok(weighted_estimate(&w, &vals, ens.ess))
}

/// `sum w v` with `sum w = 1` and its delta-method error.
pub fn weighted_estimate(w: &[f64], v: &[f64], ess: f64) -> Estimate {
    let value: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
    let var: f64 = w.iter().zip(v).map(|(a, b)| a * a * (b - value) * (b - value)).sum();
    Estimate { value, stderr: var.sqrt(), ess }
}

/// Per-path outcome of a weighted walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkRecord {
    pub log_weight: f64,
    /// Integrand of `u`: noise slope, potential slope and initial slope.
    pub slope: f64,
    /// Unreflected terminal position.
    pub endpoint: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Accum {
    noise: f64,
    renorm: f64,
    boundary: f64,
    slope: f64,
}

/// Frozen noise, smoothed initial data and potentials for one field.
#[derive(Debug, Clone)]
pub struct PolymerEnv {
    grid: GridSpec,
    noise: Option<SmoothedNoise>,
    potential: SmoothedPotential,
    initial: SmoothedInitial,
}

impl PolymerEnv {
    /// `noise = None` switches the forcing off.
    pub fn new(
        noise: Option<&NoiseRealization>,
        initial: SmoothedInitial,
        sp: &SmoothingParams,
        bp: &BoundaryParams,
        grid: &GridSpec,
        cfg: &KernelConfig,
    ) -> Result<Self> {
        if let Some(nr) = noise {
            if nr.nt != grid.nt {
                return Err(precondition(format!("noise has {} slices, grid has {}", nr.nt, grid.nt)));
            }
        }
        Ok(Self {
            grid: *grid,
            noise: noise.map(|nr| SmoothedNoise::new(nr, sp.eps)),
            potential: SmoothedPotential::new(sp.eps, bp, cfg)?,
            initial,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn potential(&self) -> &SmoothedPotential {
        &self.potential
    }

    pub fn initial(&self) -> &SmoothedInitial {
        &self.initial
    }

    #[inline]
    fn step(&self, k: usize, x: f64, acc: &mut Accum, with_slope: bool) {
        let j = self.grid.nt - 1 - k;
        if with_slope {
            let [c, v, dc, dv] = self.potential.parts_with_dx(x);
            acc.renorm += c;
            acc.boundary += v;
            acc.slope += dv - 0.5 * dc;
            if let Some(sn) = &self.noise {
                let (a, b) = sn.value_and_slope(j, x);
                acc.noise += a;
                acc.slope += b;
            }
        } else {
            acc.renorm += self.potential.renorm(x);
            acc.boundary += self.potential.boundary(x);
            if let Some(sn) = &self.noise {
                acc.noise += sn.value(j, x);
            }
        }
    }

    fn finish(&self, acc: &Accum, end: f64, with_slope: bool) -> Result<WalkRecord> {
        let dt = self.grid.dt();
        let (h, u) = if with_slope {
            self.initial.height_and_slope(end)
        } else {
            (self.initial.height(end), 0.0)
        };
        let parts = [
            (acc.noise * dt, "noise"),
            (-0.5 * acc.renorm * dt, "normalization"),
            (acc.boundary * dt, "boundary"),
            (h, "initial"),
        ];
        for (v, term) in parts {
            if !v.is_finite() {
                return Err(Error::NonFinite { term });
            }
        }
        let slope = acc.slope * dt + u;
        if with_slope && !slope.is_finite() {
            return Err(Error::NonFinite { term: "slope" });
        }
        Ok(WalkRecord {
            log_weight: parts.iter().map(|p| p.0).sum(),
            slope,
            endpoint: end,
        })
    }

    /// Log-weight of a stored path.
    pub fn log_weight(&self, p: &Path) -> Result<f64> {
        self.record(p, false).map(|r| r.log_weight)
    }

    /// Log-weight and `u` integrand of a stored path.
    pub fn record(&self, p: &Path, with_slope: bool) -> Result<WalkRecord> {
        if p.nt() != self.grid.nt {
            return Err(precondition(format!("path has {} steps, grid has {}", p.nt(), self.grid.nt)));
        }
        let mut acc = Accum::default();
        for (k, &x) in p.positions[..self.grid.nt].iter().enumerate() {
            self.step(k, x, &mut acc, with_slope);
        }
        self.finish(&acc, p.endpoint(), with_slope)
    }

    /// Samples a Brownian path from `x0` on the fly and weighs it.
    pub fn walk<R: Rng + ?Sized>(&self, x0: f64, rng: &mut R, with_slope: bool) -> Result<WalkRecord> {
        let sd = self.grid.dt().sqrt();
        let mut acc = Accum::default();
        let mut x = x0;
        for k in 0..self.grid.nt {
            self.step(k, x, &mut acc, with_slope);
            let g: f64 = StandardNormal.sample(rng);
            x += sd * g;
        }
        self.finish(&acc, x, with_slope)
    }

    /// Paths `first..first+n` of the stream keyed by `seed`, all from `x0`.
    /// Equal `(seed, first)` across starting points gives common random numbers.
    pub fn ensemble(&self, x0: f64, n_paths: usize, seed: u64, first: u64, with_slope: bool) -> Result<WeightedEnsemble<WalkRecord>> {
        let recs: Result<Vec<WalkRecord>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, tag::PATHS, first + i);
                self.walk(x0, &mut rng, with_slope)
            })
            .collect();
        let recs = recs?;
        let lw = recs.iter().map(|r| r.log_weight).collect();
        WeightedEnsemble::new(recs, lw)
    }

    /// Two paths walked together; returns their summed log-weight and the
    /// stopped Ito integral of `kernel` along their difference.
    fn walk_pair_ito(&self, x1: f64, x2: f64, kernel: &PeriodicKernel, rng1: &mut ChaCha8Rng, rng2: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        let sd = self.grid.dt().sqrt();
        let (mut a, mut b) = (Accum::default(), Accum::default());
        let (mut p, mut q) = (x1, x2);
        let mut ito = 0.0;
        let mut live = !is_even_integer(p - q);
        for k in 0..self.grid.nt {
            self.step(k, p, &mut a, false);
            self.step(k, q, &mut b, false);
            let g1: f64 = StandardNormal.sample(rng1);
            let g2: f64 = StandardNormal.sample(rng2);
            let (np, nq) = (p + sd * g1, q + sd * g2);
            if live {
                let (d0, d1) = (p - q, np - nq);
                ito += kernel.value(d0) * (d1 - d0);
                live = !crosses_even(d0, d1);
            }
            p = np;
            q = nq;
        }
        let r1 = self.finish(&a, p, false)?;
        let r2 = self.finish(&b, q, false)?;
        Ok((r1.log_weight + r2.log_weight, ito))
    }
}

#[inline]
fn is_even_integer(x: f64) -> bool {
    let h = 0.5 * x;
    h == h.floor()
}

/// `E[exp(log-weight)]` from `x`: the smoothed heat-equation solution.
pub fn z_theta(x: f64, env: &PolymerEnv, n_paths: usize, seed: u64) -> Result<ExperimentReport> {
    if n_paths < 100 {
        return Err(precondition(format!("Z estimate needs at least 100 paths (got {n_paths})")));
    }
    let ens = env.ensemble(x, n_paths, seed, 0, false)?;
    let est = unnormalized_mean(&ens.log_weights)?;
    let mut r = ExperimentReport::new("z-theta", est.value, est.stderr, seed, env.grid());
    r.ess = est.ess;
    r.x = vec![x];
    r.n_paths = n_paths;
    r.eps = env.potential.eps();
    r.kappa = env.initial.kappa();
    Ok(r)
}

/// Plain mean of `exp(lw)` computed in a shifted scale.
pub fn unnormalized_mean(lw: &[f64]) -> Result<Estimate> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
    let (mean, se) = crate::stats::mean_stderr(&w);
    let s: f64 = w.iter().sum();
    let ess = s * s / w.iter().map(|a| a * a).sum::<f64>();
    if ess < ESS_THRESHOLD {
        return Err(Error::Degenerate { ess, threshold: ESS_THRESHOLD });
    }
    let scale = m.exp();
    Ok(Estimate { value: mean * scale, stderr: se * scale, ess })
}

/// Polymer expectation of the `u` integrand from `x`.
pub fn u_theta(x: f64, env: &PolymerEnv, n_paths: usize, seed: u64) -> Result<ExperimentReport> {
    if n_paths < 100 {
        return Err(precondition(format!("u estimate needs at least 100 paths (got {n_paths})")));
    }
    let ens = env.ensemble(x, n_paths, seed, 0, true)?;
    let est = poly_expect(&ens, |r| r.slope)?;
    let mut r = ExperimentReport::new("u-theta", est.value, est.stderr, seed, env.grid());
    r.ess = est.ess;
    r.x = vec![x];
    r.n_paths = n_paths;
    r.eps = env.potential.eps();
    r.kappa = env.initial.kappa();
    Ok(r)
}

fn noise_seed(seed: u64, r: u64) -> u64 {
    derive_seed(seed, tag::NOISE, r)
}

fn path_seed(seed: u64, r: u64) -> u64 {
    derive_seed(seed, tag::PATHS, r)
}

/// Initial data shared by all noise fields of one experiment.
pub fn frozen_initial(grid: &GridSpec, sp: &SmoothingParams, bp: &BoundaryParams, seed: u64) -> SmoothedInitial {
    SmoothedInitial::new(&sample_initial(grid, bp.alpha, seed), sp.kappa)
}

/// `E_noise |E^poly[int_0^tau R(X1 - X2) d(X1 - X2)]|`, one polymer pair
/// ensemble per noise field. Each polymer mean uses the unweighted mean of
/// the same pairs as a control variate.
#[allow(clippy::too_many_arguments)]
pub fn key_symmetry_estimator(
    x1: f64,
    x2: f64,
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    grid: &GridSpec,
    n_paths: usize,
    n_noise: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<ExperimentReport> {
    bp.require_drift_symmetric()?;
    let initial = frozen_initial(grid, sp, bp, seed);
    let kernel = PeriodicKernel::new(sp.eps, cfg)?;
    let fields: Result<Vec<(f64, f64)>> = (0..n_noise as u64)
        .into_par_iter()
        .map(|r| {
            let nr = sample_noise(grid, sp, noise_seed(seed, r));
            let env = PolymerEnv::new(Some(&nr), initial.clone(), sp, bp, grid, cfg)?;
            let ps = path_seed(seed, r);
            let pairs: Result<Vec<(f64, f64)>> = (0..n_paths as u64)
                .into_par_iter()
                .map(|i| {
                    let mut g1 = stream_rng(ps, tag::PATHS, 2 * i);
                    let mut g2 = stream_rng(ps, tag::PATHS, 2 * i + 1);
                    env.walk_pair_ito(x1, x2, &kernel, &mut g1, &mut g2)
                })
                .collect();
            let pairs = pairs?;
            let ito: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ens = WeightedEnsemble::new(ito.clone(), pairs.iter().map(|p| p.0).collect())?;
            let est = poly_expect(&ens, |v| *v)?;
            // The stopped sum has mean zero under unweighted pairs; subtracting
            // its plain average removes the part of the error that the weights
            // do not correlate with.
            let plain = ito.iter().sum::<f64>() / ito.len() as f64;
            Ok(((est.value - plain).abs(), ens.ess))
        })
        .collect();
    let fields = fields?;
    let abs: Vec<f64> = fields.iter().map(|f| f.0).collect();
    let mut r = ExperimentReport::from_samples("key-symmetry", &abs, seed, grid);
    r.ess = fields.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    r.eps = sp.eps;
    r.kappa = sp.kappa;
    r.x = vec![x1, x2];
    r.n_paths = n_paths;
    r.n_noise = n_noise;
    Ok(r)
}

/// Both sides of the Gaussian moment-generating-function identity for the
/// squared unnormalized numerator.
#[derive(Debug, Clone, PartialEq)]
pub struct MgfReport {
    /// Average over noise fields of the product of two independent halves.
    pub noise_side: ExperimentReport,
    /// Noise-free four-path representation.
    pub path_side: ExperimentReport,
}

impl MgfReport {
    /// Difference of the two sides in units of their combined error.
    pub fn z_score(&self) -> f64 {
        let se = (self.noise_side.stderr.powi(2) + self.path_side.stderr.powi(2)).sqrt();
        (self.noise_side.estimate - self.path_side.estimate) / se
    }
}

struct StoredPair {
    p: Vec<f64>,
    q: Vec<f64>,
    fixed: f64,
    ito: f64,
}

/// Checks `E_noise[N^2]` two ways, `N` being the unnormalized numerator of the
/// stopped two-path Ito integral. Both sides use the same Brownian pairs.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_mgf_check(
    x1: f64,
    x2: f64,
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    grid: &GridSpec,
    n_paths: usize,
    n_noise: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<MgfReport> {
    bp.require_drift_symmetric()?;
    let initial = frozen_initial(grid, sp, bp, seed);
    let free = PolymerEnv::new(None, initial, sp, bp, grid, cfg)?;
    let kernel = PeriodicKernel::new(sp.eps, cfg)?;
    let nt = grid.nt;
    let dt = grid.dt();
    let ps = path_seed(seed, u64::MAX);
    let stored: Vec<StoredPair> = (0..2 * n_paths as u64)
        .into_par_iter()
        .map(|a| {
            let mut g1 = stream_rng(ps, tag::PATHS, 2 * a);
            let mut g2 = stream_rng(ps, tag::PATHS, 2 * a + 1);
            let p = Path::brownian(x1, nt, dt, 1.0, &mut g1);
            let q = Path::brownian(x2, nt, dt, 1.0, &mut g2);
            let diff: Vec<f64> = p.positions.iter().zip(&q.positions).map(|(u, v)| u - v).collect();
            let ito = crate::paths::stopped_ito_sum(&diff, &kernel).0;
            let fixed = free.log_weight(&p)? + free.log_weight(&q)?;
            Ok(StoredPair { p: p.positions, q: q.positions, fixed, ito })
        })
        .collect::<Result<Vec<_>>>()?;

    let halves: Vec<f64> = (0..n_noise as u64)
        .into_par_iter()
        .map(|r| {
            let nr = sample_noise(grid, sp, noise_seed(seed, r));
            let sn = SmoothedNoise::new(&nr, sp.eps);
            let numer = |s: &StoredPair| {
                let mut acc = 0.0;
                for k in 0..nt {
                    let j = nt - 1 - k;
                    acc += sn.value(j, s.p[k]) + sn.value(j, s.q[k]);
                }
                (acc * dt + s.fixed).exp() * s.ito
            };
            let a: f64 = stored[..n_paths].iter().map(numer).sum::<f64>() / n_paths as f64;
            let b: f64 = stored[n_paths..].iter().map(numer).sum::<f64>() / n_paths as f64;
            a * b
        })
        .collect();

    let pk = *free.potential().covariance_kernel();
    let pot = *free.potential();
    let h = free.initial().clone();
    let tuples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let (s, t) = (&stored[i], &stored[n_paths + i]);
            let mut acc = 0.0;
            for k in 0..nt {
                let xs = [s.p[k], s.q[k], t.p[k], t.q[k]];
                acc += pair_sum(&pk, &xs) + xs.iter().map(|&x| pot.boundary(x)).sum::<f64>();
            }
            let hs: f64 = [s.p[nt], s.q[nt], t.p[nt], t.q[nt]].iter().map(|&x| h.height(x)).sum();
            (acc * dt + hs).exp() * s.ito * t.ito
        })
        .collect();

    let mut noise_side = ExperimentReport::from_samples("mgf-noise-side", &halves, seed, grid);
    let mut path_side = ExperimentReport::from_samples("mgf-path-side", &tuples, seed, grid);
    for r in [&mut noise_side, &mut path_side] {
        r.eps = sp.eps;
        r.kappa = sp.kappa;
        r.x = vec![x1, x2];
        r.n_paths = n_paths;
        r.n_noise = n_noise;
    }
    path_side.n_noise = 0;
    Ok(MgfReport { noise_side, path_side })
}

/// `sum_{i<j} p_neumann(2 eps, x_i, x_j)` given the kernel at `2 eps`.
#[inline]
pub fn pair_sum(k: &PeriodicKernel, xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            s += k.value(xs[i] - xs[j]) + k.value(xs[i] + xs[j]);
        }
    }
    s
}

/// Which parts of the four-path exponent are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftTerms {
    pub pair: bool,
    pub boundary: bool,
    pub initial: bool,
}

impl Default for DriftTerms {
    fn default() -> Self {
        Self { pair: true, boundary: true, initial: true }
    }
}

/// Extremes of the four-path field and of its log-gradient over the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftBoundReport {
    pub eps: f64,
    pub z_max: f64,
    pub z_min: f64,
    pub u_max: f64,
    /// Standard error of the component attaining `u_max`.
    pub u_max_stderr: f64,
    pub min_ess: f64,
    pub n_points: usize,
    pub n_paths: usize,
}

/// Lattice levels per coordinate.
pub const DRIFT_LATTICE: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Sorted 4-tuples from the lattice; every lattice point is a permutation of one.
pub fn lattice_representatives() -> Vec<[f64; 4]> {
    let n = DRIFT_LATTICE.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                for d in c..n {
                    out.push([DRIFT_LATTICE[a], DRIFT_LATTICE[b], DRIFT_LATTICE[c], DRIFT_LATTICE[d]]);
                }
            }
        }
    }
    out
}

/// Exponent of the noise-free four-path weight and its gradient in the
/// starting points, along one tuple of Brownian increments.
#[allow(clippy::too_many_arguments)]
fn four_path_exponent(
    starts: &[f64; 4],
    incs: &[[f64; 4]],
    pk: &PeriodicKernel,
    pot: &SmoothedPotential,
    h: &SmoothedInitial,
    terms: DriftTerms,
    dt: f64,
) -> (f64, [f64; 4]) {
    let mut x = *starts;
    let mut s = 0.0;
    let mut g = [0.0; 4];
    for inc in incs {
        if terms.pair {
            for i in 0..4 {
                for j in i + 1..4 {
                    let (a, da) = pk.value_and_derivative(x[i] - x[j]);
                    let (b, db) = pk.value_and_derivative(x[i] + x[j]);
                    s += a + b;
                    g[i] += da + db;
                    g[j] += db - da;
                }
            }
        }
        if terms.boundary {
            for i in 0..4 {
                let (v, dv) = pot.boundary_with_dx(x[i]);
                s += v;
                g[i] += dv;
            }
        }
        for i in 0..4 {
            x[i] += inc[i];
        }
    }
    s *= dt;
    for gi in g.iter_mut() {
        *gi *= dt;
    }
    if terms.initial {
        for i in 0..4 {
            let (hv, hu) = h.height_and_slope(x[i]);
            s += hv;
            g[i] += hu;
        }
    }
    (s, g)
}

/// Scans the noise-free four-path field over the start lattice. The
/// gradient uses the pathwise derivative, the limit of common-random-number
/// finite differences.
#[allow(clippy::too_many_arguments)]
pub fn drift_bound_probe(
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
    terms: DriftTerms,
    cfg: &KernelConfig,
) -> Result<DriftBoundReport> {
    bp.require_drift_symmetric()?;
    let initial = frozen_initial(grid, sp, bp, seed);
    let pot = SmoothedPotential::new(sp.eps, bp, cfg)?;
    let pk = *pot.covariance_kernel();
    let dt = grid.dt();
    let sd = dt.sqrt();
    let incs: Vec<Vec<[f64; 4]>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, tag::LATTICE, i);
            (0..grid.nt)
                .map(|_| {
                    let mut v = [0.0; 4];
                    for c in v.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *c = sd * z;
                    }
                    v
                })
                .collect()
        })
        .collect();
    let points = lattice_representatives();
    let per_point: Result<Vec<(f64, f64, f64, f64)>> = points
        .par_iter()
        .map(|starts| {
            let vals: Vec<(f64, [f64; 4])> = incs
                .iter()
                .map(|inc| four_path_exponent(starts, inc, &pk, &pot, &initial, terms, dt))
                .collect();
            let lw: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let z = unnormalized_mean(&lw)?;
            let ens = WeightedEnsemble::new(vals.iter().map(|v| v.1).collect::<Vec<_>>(), lw)?;
            let mut best = (0.0f64, 0.0f64);
            for c in 0..4 {
                let u = poly_expect(&ens, |g| g[c])?;
                if u.value.abs() > best.0 {
                    best = (u.value.abs(), u.stderr);
                }
            }
            Ok((z.value, best.0, best.1, ens.ess))
        })
        .collect();
    let per_point = per_point?;
    let z_max = per_point.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let z_min = per_point.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let top = per_point.iter().fold((0.0f64, 0.0f64), |acc, p| if p.1 > acc.0 { (p.1, p.2) } else { acc });
    let min_ess = per_point.iter().map(|p| p.3).fold(f64::INFINITY, f64::min);
    Ok(DriftBoundReport {
        eps: sp.eps,
        z_max,
        z_min,
        u_max: top.0,
        u_max_stderr: top.1,
        min_ess,
        n_points: points.len(),
        n_paths,
    })
}

/// `E_noise[Z^{-4}]` at `x`, one path ensemble per noise field.
#[allow(clippy::too_many_arguments)]
pub fn negative_moment_probe(
    x: f64,
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    grid: &GridSpec,
    n_paths: usize,
    n_noise: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<ExperimentReport> {
    let initial = frozen_initial(grid, sp, bp, seed);
    let vals: Result<Vec<f64>> = (0..n_noise as u64)
        .into_par_iter()
        .map(|r| {
            let nr = sample_noise(grid, sp, noise_seed(seed, r));
            let env = PolymerEnv::new(Some(&nr), initial.clone(), sp, bp, grid, cfg)?;
            let z = z_theta(x, &env, n_paths, path_seed(seed, r))?;
            Ok(z.estimate.powi(-4))
        })
        .collect();
    let mut r = ExperimentReport::from_samples("negative-moment", &vals?, seed, grid);
    r.eps = sp.eps;
    r.kappa = sp.kappa;
    r.x = vec![x];
    r.n_paths = n_paths;
    r.n_noise = n_noise;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_noise;
    use crate::paths::sample_path_indexed;

    struct Setup {
        grid: GridSpec,
        sp: SmoothingParams,
        bp: BoundaryParams,
        cfg: KernelConfig,
    }

    fn setup() -> Setup {
        Setup {
            grid: GridSpec::new(32, 40, 0.2).unwrap(),
            sp: SmoothingParams::new(0.05, 0.05).unwrap(),
            bp: BoundaryParams::new(0.3, 0.9).unwrap(),
            cfg: KernelConfig::default(),
        }
    }

    fn env(s: &Setup, seed: u64) -> PolymerEnv {
        let nr = sample_noise(&s.grid, &s.sp, seed);
        let init = frozen_initial(&s.grid, &s.sp, &s.bp, seed);
        PolymerEnv::new(Some(&nr), init, &s.sp, &s.bp, &s.grid, &s.cfg).unwrap()
    }

    #[test]
    fn weight_is_invariant_under_reflection_and_shift() {
        let s = setup();
        let e = env(&s, 3);
        for i in 0..20 {
            let p = sample_path_indexed(0.37, &s.grid, 11, i);
            let a = e.log_weight(&p).unwrap();
            let b = e.log_weight(&p.negated()).unwrap();
            let mut shifted = p.clone();
            shifted.positions.iter_mut().for_each(|x| *x += 2.0);
            let c = e.log_weight(&shifted).unwrap();
            assert!((a - b).abs() < 1e-11, "{a} {b}");
            assert!((a - c).abs() < 1e-10, "{a} {c}");
        }
    }

    #[test]
    fn stored_and_streamed_walks_agree() {
        let s = setup();
        let e = env(&s, 4);
        let mut rng = stream_rng(8, tag::PATHS, 2);
        let streamed = e.walk(0.4, &mut rng, true).unwrap();
        let p = sample_path_indexed(0.4, &s.grid, 8, 2);
        let stored = e.record(&p, true).unwrap();
        assert!((streamed.log_weight - stored.log_weight).abs() < 1e-12);
        assert!((streamed.slope - stored.slope).abs() < 1e-12);
    }

    #[test]
    fn height_shift_scales_z_and_leaves_u() {
        let s = setup();
        let nr = sample_noise(&s.grid, &s.sp, 5);
        let init = frozen_initial(&s.grid, &s.sp, &s.bp, 5);
        let a = PolymerEnv::new(Some(&nr), init.clone(), &s.sp, &s.bp, &s.grid, &s.cfg).unwrap();
        let b = PolymerEnv::new(Some(&nr), init.shifted(0.7), &s.sp, &s.bp, &s.grid, &s.cfg).unwrap();
        let za = z_theta(0.5, &a, 400, 1).unwrap();
        let zb = z_theta(0.5, &b, 400, 1).unwrap();
        assert!((zb.estimate / za.estimate - 0.7f64.exp()).abs() < 1e-12);
        let ua = u_theta(0.5, &a, 400, 1).unwrap();
        let ub = u_theta(0.5, &b, 400, 1).unwrap();
        assert!((ua.estimate - ub.estimate).abs() < 1e-12);
    }

    #[test]
    fn u_matches_log_z_gradient_with_common_paths() {
        let s = setup();
        let e = env(&s, 6);
        let d = 1e-5;
        let x = 0.42;
        let lz = |y: f64| z_theta(y, &e, 500, 9).unwrap().estimate.ln();
        let fd = (lz(x + d) - lz(x - d)) / (2.0 * d);
        let u = u_theta(x, &e, 500, 9).unwrap().estimate;
        assert!((fd - u).abs() < 1e-5 * (1.0 + u.abs()), "fd {fd} u {u}");
    }

    #[test]
    fn too_few_paths_is_rejected() {
        let s = setup();
        let e = env(&s, 1);
        assert!(matches!(z_theta(0.5, &e, 50, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn dominated_ensemble_is_degenerate() {
        let mut lw = vec![0.0; 200];
        lw[0] = 50.0;
        let ens = WeightedEnsemble::new(vec![1.0; 200], lw).unwrap();
        assert!(matches!(poly_expect(&ens, |v| *v), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn equal_weights_give_plain_mean() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ens = WeightedEnsemble::new(xs.clone(), vec![-3.0; 100]).unwrap();
        let est = poly_expect(&ens, |v| *v).unwrap();
        assert!((est.value - 49.5).abs() < 1e-12);
        assert!((ens.ess - 100.0).abs() < 1e-9);
        let pairs = ens.self_pairs().unwrap();
        let p = poly_expect(&pairs, |(a, b)| b - a).unwrap();
        assert!(p.value.abs() < 1e-12);
    }

    #[test]
    fn key_symmetry_vanishes_on_diagonal() {
        let s = setup();
        let bp = BoundaryParams::stationary(0.4).unwrap();
        let r = key_symmetry_estimator(0.5, 0.5, &s.sp, &bp, &s.grid, 100, 2, 1, &s.cfg).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn lattice_has_seventy_representatives() {
        let l = lattice_representatives();
        assert_eq!(l.len(), 70);
        assert!(l.iter().all(|p| p.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn pathwise_gradient_matches_finite_differences() {
        let s = setup();
        let bp = BoundaryParams::stationary(0.4).unwrap();
        let pot = SmoothedPotential::new(s.sp.eps, &bp, &s.cfg).unwrap();
        let pk = *pot.covariance_kernel();
        let init = frozen_initial(&s.grid, &s.sp, &bp, 2);
        let dt = s.grid.dt();
        let mut rng = stream_rng(1, tag::LATTICE, 0);
        let incs: Vec<[f64; 4]> = (0..s.grid.nt)
            .map(|_| {
                let mut v = [0.0; 4];
                for c in v.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c = dt.sqrt() * z;
                }
                v
            })
            .collect();
        let starts = [0.1, 0.3, 0.3, 0.7];
        let terms = DriftTerms::default();
        let (_, g) = four_path_exponent(&starts, &incs, &pk, &pot, &init, terms, dt);
        let h = 1e-6;
        for c in 0..4 {
            let (mut up, mut dn) = (starts, starts);
            up[c] += h;
            dn[c] -= h;
            let fd = (four_path_exponent(&up, &incs, &pk, &pot, &init, terms, dt).0
                - four_path_exponent(&dn, &incs, &pk, &pot, &init, terms, dt).0)
                / (2.0 * h);
            assert!((fd - g[c]).abs() < 1e-5 * (1.0 + fd.abs()), "component {c}: fd {fd} pathwise {}", g[c]);
        }
    }

    #[test]
    fn mgf_sides_agree_on_small_run() {
        let s = setup();
        let bp = BoundaryParams::stationary(0.4).unwrap();
        let grid = GridSpec::new(16, 20, 0.1).unwrap();
        let sp = SmoothingParams::new(0.1, 0.1).unwrap();
        let r = gaussian_mgf_check(0.3, 0.6, &sp, &bp, &grid, 1000, 40, 3, &s.cfg).unwrap();
        assert!(r.z_score().abs() < 4.0, "{:?}", r);
    }

    #[test]
    fn mgf_sides_vanish_for_a_shared_start() {
        let s = setup();
        let bp = BoundaryParams::stationary(0.4).unwrap();
        let r = gaussian_mgf_check(0.4, 0.4, &s.sp, &bp, &s.grid, 200, 5, 3, &s.cfg).unwrap();
        assert_eq!(r.noise_side.estimate, 0.0);
        assert_eq!(r.path_side.estimate, 0.0);
    }

    #[test]
    fn drift_probe_without_terms_is_flat() {
        let s = setup();
        let bp = BoundaryParams::stationary(0.5).unwrap();
        let grid = GridSpec::new(16, 10, 0.1).unwrap();
        let off = DriftTerms { pair: false, boundary: false, initial: false };
        let r = drift_bound_probe(&s.sp, &bp, &grid, 50, 4, off, &s.cfg).unwrap();
        assert_eq!((r.z_max, r.z_min, r.u_max), (1.0, 1.0, 0.0));
        assert_eq!(r.n_points, 70);
        assert!((r.min_ess - 50.0).abs() < 1e-9);
    }

    #[test]
    fn negative_moments_are_stable_in_eps() {
        let s = setup();
        let bp = BoundaryParams::stationary(0.5).unwrap();
        let grid = GridSpec::new(32, 100, 0.1).unwrap();
        let m: Vec<f64> = [1e-1, 1e-2]
            .iter()
            .map(|&eps| {
                let sp = SmoothingParams::new(eps, 0.05).unwrap();
                let r = negative_moment_probe(0.5, &sp, &bp, &grid, 400, 20, 8, &s.cfg).unwrap();
                assert!(r.estimate.is_finite() && r.estimate > 0.0);
                r.estimate
            })
            .collect();
        let ratio = (m[0] / m[1]).max(m[1] / m[0]);
        assert!(ratio < 10.0, "E[Z^-4] {m:?}");
    }
}
