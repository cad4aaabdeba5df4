//! Random inputs: space-time white noise in the Neumann cosine basis, its
//! heat-semigroup mollification, and Brownian initial data with drift.
//!
//! Mode `m` of the Neumann basis is `phi_0 = 1`, `phi_m = sqrt(2) cos(m pi x)`;
//! mollification at scale `eps` multiplies it by `exp(-eps (m pi)^2 / 2)`, so
//! the mollified field at fixed time has covariance `p_neumann(2 eps, x, y) / dt`.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{precondition, Error, Result};
use crate::params::{modes_for_scale, GridSpec, SmoothingParams};
use crate::rng::{stream_rng, tag};

/// Damping factor of mode `m` at smoothing scale `scale`.
pub fn mode_damping(scale: f64, m: usize) -> f64 {
    let k = m as f64 * PI;
    (-scale * k * k / 2.0).exp()
}

/// Cosine-mode coefficients of one white-noise sample, piecewise constant
/// in time. Row `j` holds the `n_modes + 1` coefficients of slice `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub nt: usize,
    pub n_modes: usize,
    pub dt: f64,
    pub seed: u64,
    pub coeffs: Vec<f64>,
}

impl NoiseRealization {
    /// The zero field, for noise-free runs.
    pub fn zero(grid: &GridSpec, n_modes: usize) -> Self {
        Self {
            nt: grid.nt,
            n_modes,
            dt: grid.dt(),
            seed: 0,
            coeffs: vec![0.0; grid.nt * (n_modes + 1)],
        }
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let w = self.n_modes + 1;
        &self.coeffs[j * w..(j + 1) * w]
    }

    pub fn coeff(&self, j: usize, m: usize) -> f64 {
        self.coeffs[j * (self.n_modes + 1) + m]
    }

    /// Same field on a time grid `factor` times finer: each slice repeats.
    pub fn refine_time(&self, factor: usize) -> Self {
        let w = self.n_modes + 1;
        let mut coeffs = Vec::with_capacity(self.coeffs.len() * factor);
        for j in 0..self.nt {
            for _ in 0..factor {
                coeffs.extend_from_slice(self.slice(j));
            }
        }
        debug_assert_eq!(coeffs.len(), self.nt * factor * w);
        Self {
            nt: self.nt * factor,
            n_modes: self.n_modes,
            dt: self.dt / factor as f64,
            seed: self.seed,
            coeffs,
        }
    }
}

/// Draws white-noise coefficients; slice `j` uses its own stream, so the
/// layout does not depend on how the work is scheduled.
pub fn sample_noise(grid: &GridSpec, sp: &SmoothingParams, seed: u64) -> NoiseRealization {
    let w = sp.n_modes + 1;
    let scale = 1.0 / grid.dt().sqrt();
    let mut coeffs = vec![0.0; grid.nt * w];
    for (j, row) in coeffs.chunks_mut(w).enumerate() {
        let mut rng = stream_rng(seed, tag::NOISE, j as u64);
        for c in row.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *c = g * scale;
        }
    }
    NoiseRealization { nt: grid.nt, n_modes: sp.n_modes, dt: grid.dt(), seed, coeffs }
}

fn check_slice(nr: &NoiseRealization, t_index: usize) -> Result<()> {
    if t_index < nr.nt {
        Ok(())
    } else {
        Err(precondition(format!("time slice {t_index} outside 0..{}", nr.nt)))
    }
}

/// Mollified noise at slice `t_index`, summed mode by mode.
pub fn xi_eps(nr: &NoiseRealization, sp: &SmoothingParams, t_index: usize, x: f64) -> Result<f64> {
    check_slice(nr, t_index)?;
    let row = nr.slice(t_index);
    let mut s = row[0];
    for (m, &g) in row.iter().enumerate().skip(1) {
        s += mode_damping(sp.eps, m) * g * SQRT_2 * (m as f64 * PI * x).cos();
    }
    Ok(s)
}

/// Spatial derivative of [`xi_eps`].
pub fn d_xi_eps(nr: &NoiseRealization, sp: &SmoothingParams, t_index: usize, x: f64) -> Result<f64> {
    check_slice(nr, t_index)?;
    let row = nr.slice(t_index);
    let mut s = 0.0;
    for (m, &g) in row.iter().enumerate().skip(1) {
        let k = m as f64 * PI;
        s -= mode_damping(sp.eps, m) * g * SQRT_2 * k * (k * x).sin();
    }
    Ok(s)
}

/// `sum_{m=0}^{M} a_m cos(m theta)` by Clenshaw's recurrence in `c = cos theta`.
#[inline]
fn cosine_series(a: &[f64], c: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    let two_c = 2.0 * c;
    for &ak in a[1..].iter().rev() {
        let b0 = ak + two_c * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    a[0] + c * b1 - b2
}

/// `sum_{m=1}^{M} a_m sin(m theta) / sin(theta)`; `a[0]` is ignored.
#[inline]
fn sine_series_over_sin(a: &[f64], c: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    let two_c = 2.0 * c;
    for &ak in a[1..].iter().rev() {
        let b0 = ak + two_c * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    b1
}

/// Both series at once; they share the recurrence structure.
#[inline]
fn paired_series(a: &[f64], d: &[f64], c: f64) -> (f64, f64) {
    let (mut a1, mut a2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
    let two_c = 2.0 * c;
    for k in (1..a.len()).rev() {
        let a0 = a[k] + two_c * a1 - a2;
        a2 = a1;
        a1 = a0;
        let d0 = d[k] + two_c * d1 - d2;
        d2 = d1;
        d1 = d0;
    }
    (a[0] + c * a1 - a2, d1)
}

/// Mollified noise ready for repeated evaluation along paths.
#[derive(Debug, Clone)]
pub struct SmoothedNoise {
    nt: usize,
    width: usize,
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl SmoothedNoise {
    pub fn new(nr: &NoiseRealization, eps: f64) -> Self {
        let width = nr.n_modes + 1;
        let damp: Vec<f64> = (0..width)
            .map(|m| if m == 0 { 1.0 } else { SQRT_2 * mode_damping(eps, m) })
            .collect();
        let mut value = Vec::with_capacity(nr.coeffs.len());
        let mut slope = Vec::with_capacity(nr.coeffs.len());
        for j in 0..nr.nt {
            for (m, &g) in nr.slice(j).iter().enumerate() {
                let c = damp[m] * g;
                value.push(c);
                slope.push(-(m as f64) * PI * c);
            }
        }
        Self { nt: nr.nt, width, value, slope }
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn value(&self, j: usize, x: f64) -> f64 {
        let a = &self.value[j * self.width..(j + 1) * self.width];
        cosine_series(a, (PI * x).cos())
    }

    #[inline]
    pub fn slope(&self, j: usize, x: f64) -> f64 {
        let d = &self.slope[j * self.width..(j + 1) * self.width];
        let (s, c) = (PI * x).sin_cos();
        s * sine_series_over_sin(d, c)
    }

    #[inline]
    pub fn value_and_slope(&self, j: usize, x: f64) -> (f64, f64) {
        let r = j * self.width..(j + 1) * self.width;
        let (s, c) = (PI * x).sin_cos();
        let (v, d) = paired_series(&self.value[r.clone()], &self.slope[r], c);
        (v, s * d)
    }
}

/// Brownian initial slope data on the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub alpha: f64,
    /// One value per cell, variance `1/dx` about `alpha`.
    pub u0_values: Vec<f64>,
    /// Height at the `nx + 1` nodes; `h0_values[0] = 0`.
    pub h0_values: Vec<f64>,
}

impl InitialData {
    /// Deterministic slope `u0 = alpha` everywhere.
    pub fn constant(nx: usize, alpha: f64) -> Self {
        Self::from_slopes(alpha, vec![alpha; nx])
    }

    pub fn from_slopes(alpha: f64, u0_values: Vec<f64>) -> Self {
        let dx = 1.0 / u0_values.len() as f64;
        let mut h0_values = Vec::with_capacity(u0_values.len() + 1);
        let mut h = 0.0;
        h0_values.push(h);
        for &u in &u0_values {
            h += u * dx;
            h0_values.push(h);
        }
        Self { alpha, u0_values, h0_values }
    }

    pub fn nx(&self) -> usize {
        self.u0_values.len()
    }

    /// `<u0, f>` with `f` integrated exactly on each cell by the caller's rule.
    pub fn pair_with(&self, cell_integrals: &[f64]) -> f64 {
        self.u0_values.iter().zip(cell_integrals).map(|(u, w)| u * w).sum()
    }
}

/// Mean-`alpha` white noise on cells, integrated to a Brownian height.
pub fn sample_initial(grid: &GridSpec, alpha: f64, seed: u64) -> InitialData {
    let mut rng = stream_rng(seed, tag::INITIAL, 0);
    let sd = 1.0 / grid.dx().sqrt();
    let u0 = (0..grid.nx)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            alpha + sd * g
        })
        .collect();
    InitialData::from_slopes(alpha, u0)
}

/// Smoothed initial height and slope.
///
/// The centred height `h0 - alpha x` is smoothed in the cosine basis and the
/// linear part re-added as `alpha * reflect(x)`, so the slope minus `alpha` is
/// the Dirichlet-smoothed centred noise.
#[derive(Debug, Clone)]
pub struct SmoothedInitial {
    alpha: f64,
    kappa: f64,
    /// Cosine coefficients of the smoothed centred height, `[0]` is the mean.
    height: Vec<f64>,
    /// `-m pi` times the height coefficients; the slope series.
    slope: Vec<f64>,
}

impl SmoothedInitial {
    /// Mode count follows `kappa`, capped at four times the cell count.
    pub fn new(id: &InitialData, kappa: f64) -> Self {
        let nx = id.nx();
        let n_modes = modes_for_scale(kappa).min(4 * nx);
        Self::with_modes(id, kappa, n_modes)
    }

    pub fn with_modes(id: &InitialData, kappa: f64, n_modes: usize) -> Self {
        let nx = id.nx();
        let dx = 1.0 / nx as f64;
        let centred: Vec<f64> = id.u0_values.iter().map(|u| u - id.alpha).collect();
        // Jumps of the centred slope at the nodes, for summation by parts.
        let jumps: Vec<f64> = (0..=nx)
            .map(|i| {
                let right = if i < nx { centred[i] } else { 0.0 };
                let left = if i > 0 { centred[i - 1] } else { 0.0 };
                right - left
            })
            .collect();
        // cos(m pi i / nx) read from a table indexed by (m i) mod 2 nx.
        let table: Vec<f64> = (0..2 * nx).map(|k| (PI * k as f64 / nx as f64).cos()).collect();
        let mean = id
            .h0_values
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * dx)
            .sum::<f64>()
            - 0.5 * id.alpha;
        let mut height = vec![0.0; n_modes + 1];
        let mut slope = vec![0.0; n_modes + 1];
        height[0] = mean;
        for m in 1..=n_modes {
            let k = m as f64 * PI;
            let mut acc = 0.0;
            for (i, &j) in jumps.iter().enumerate() {
                acc += table[(m * i) % (2 * nx)] * j;
            }
            // Sine coefficient of the centred slope, computed cell-exactly.
            let sine = SQRT_2 * acc / k;
            let damp = mode_damping(kappa, m);
            height[m] = -SQRT_2 * damp * sine / k;
            slope[m] = SQRT_2 * damp * sine;
        }
        Self { alpha: id.alpha, kappa, height, slope }
    }

    /// `h0 = 0`, `u0 = 0`.
    pub fn zero() -> Self {
        Self { alpha: 0.0, kappa: 1.0, height: vec![0.0; 2], slope: vec![0.0; 2] }
    }

    /// Same data with the height raised by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.height[0] += c;
        out
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn n_modes(&self) -> usize {
        self.height.len() - 1
    }

    /// Smoothed height, even and 2-periodic.
    pub fn height(&self, x: f64) -> f64 {
        self.alpha * crate::kernels::reflect_raw(x) + cosine_series(&self.height, (PI * x).cos())
    }

    /// Smoothed slope; odd about every integer.
    pub fn slope(&self, x: f64) -> f64 {
        let (s, c) = (PI * x).sin_cos();
        self.alpha * crate::kernels::altsign_raw(x) + s * sine_series_over_sin(&self.slope, c)
    }

    pub fn height_and_slope(&self, x: f64) -> (f64, f64) {
        let (s, c) = (PI * x).sin_cos();
        let (h, d) = paired_series(&self.height, &self.slope, c);
        (
            self.alpha * crate::kernels::reflect_raw(x) + h,
            self.alpha * crate::kernels::altsign_raw(x) + s * d,
        )
    }
}

/// Smooths initial data at the scale `sp.kappa`.
pub fn smooth_initial(id: &InitialData, sp: &SmoothingParams) -> SmoothedInitial {
    SmoothedInitial::new(id, sp.kappa)
}

const MAGIC: &[u8; 5] = b"OKPZ1";

/// Flat little-endian dump: magic, four `u64` header words, then `f64` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatDump {
    pub nx: u64,
    pub nt: u64,
    pub n_modes: u64,
    pub seed: u64,
    pub payload: Vec<f64>,
}

impl FlatDump {
    /// Noise coefficients, then optionally `alpha` and the cell slopes.
    pub fn from_fields(noise: &NoiseRealization, initial: Option<&InitialData>) -> Self {
        let mut payload = noise.coeffs.clone();
        let nx = match initial {
            Some(id) => {
                payload.push(id.alpha);
                payload.extend_from_slice(&id.u0_values);
                id.nx() as u64
            }
            None => 0,
        };
        Self { nx, nt: noise.nt as u64, n_modes: noise.n_modes as u64, seed: noise.seed, payload }
    }

    /// Unreflected path positions, one row per path; `nx` holds the path count.
    pub fn from_paths(paths: &[crate::paths::Path], seed: u64) -> Self {
        let nt = paths.first().map_or(0, |p| p.positions.len().saturating_sub(1));
        let payload = paths.iter().flat_map(|p| p.positions.iter().copied()).collect();
        Self { nx: paths.len() as u64, nt: nt as u64, n_modes: 0, seed, payload }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.nx, self.nt, self.n_modes, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.payload {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut words = [0u64; 4];
        for w in words.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *w = u64::from_le_bytes(b);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if rest.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64".into()));
        }
        let payload = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { nx: words[0], nt: words[1], n_modes: words[2], seed: words[3], payload })
    }

    /// Rebuilds the fields written by [`FlatDump::from_fields`].
    pub fn to_fields(&self, dt: f64) -> Result<(NoiseRealization, Option<InitialData>)> {
        let n_noise = (self.nt * (self.n_modes + 1)) as usize;
        let extra = if self.nx == 0 { 0 } else { 1 + self.nx as usize };
        if self.payload.len() != n_noise + extra {
            return Err(Error::Format(format!(
                "payload holds {} values, header implies {}",
                self.payload.len(),
                n_noise + extra
            )));
        }
        let noise = NoiseRealization {
            nt: self.nt as usize,
            n_modes: self.n_modes as usize,
            dt,
            seed: self.seed,
            coeffs: self.payload[..n_noise].to_vec(),
        };
        let initial = (self.nx > 0).then(|| {
            let alpha = self.payload[n_noise];
            InitialData::from_slopes(alpha, self.payload[n_noise + 1..].to_vec())
        });
        Ok((noise, initial))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{p_dirichlet, p_neumann, KernelConfig};
    use crate::stats::mean_stderr;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(64, 100, 1.0).unwrap()
    }

    #[test]
    fn mode_variance_and_determinism() {
        let g = GridSpec::new(16, 10_000, 1.0).unwrap();
        let sp = SmoothingParams::new(0.5, 0.5).unwrap();
        let nr = sample_noise(&g, &sp, 3);
        let col: Vec<f64> = (0..g.nt).map(|j| nr.coeff(j, 1)).collect();
        let var = crate::stats::sample_variance(&col);
        assert!((var * g.dt() - 1.0).abs() < 0.05, "var*dt = {}", var * g.dt());
        assert_eq!(nr, sample_noise(&g, &sp, 3));
        let other = sample_noise(&g, &sp, 4);
        let n = nr.coeffs.len() as f64;
        let corr: f64 = nr.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum::<f64>()
            / (nr.coeffs.iter().map(|a| a * a).sum::<f64>()
                * other.coeffs.iter().map(|b| b * b).sum::<f64>())
            .sqrt();
        assert!(corr.abs() < 3.0 / n.sqrt());
    }

    #[test]
    fn clenshaw_matches_direct_sum() {
        let sp = SmoothingParams::new(0.01, 0.1).unwrap();
        let nr = sample_noise(&grid(), &sp, 9);
        let sn = SmoothedNoise::new(&nr, sp.eps);
        for &x in &[0.0, 0.013, 0.5, 0.77, 1.0, 1.4, -0.3] {
            for j in [0, 17, 99] {
                let a = xi_eps(&nr, &sp, j, x).unwrap();
                let d = d_xi_eps(&nr, &sp, j, x).unwrap();
                let (v, s) = sn.value_and_slope(j, x);
                let scale = 1.0 + a.abs();
                assert!((a - sn.value(j, x)).abs() < 1e-11 * scale);
                assert!((a - v).abs() < 1e-11 * scale);
                assert!((d - s).abs() < 1e-10 * (1.0 + d.abs()));
                assert!((d - sn.slope(j, x)).abs() < 1e-10 * (1.0 + d.abs()));
            }
        }
        assert!(xi_eps(&nr, &sp, 100, 0.3).is_err());
    }

    #[test]
    fn huge_eps_leaves_constant_field() {
        let sp = SmoothingParams::with_modes(50.0, 0.1, 8).unwrap();
        let nr = sample_noise(&grid(), &sp, 1);
        let a = xi_eps(&nr, &sp, 5, 0.1).unwrap();
        let b = xi_eps(&nr, &sp, 5, 0.8).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn slope_vanishes_at_ends_and_matches_fd() {
        let sp = SmoothingParams::new(0.01, 0.1).unwrap();
        let nr = sample_noise(&grid(), &sp, 2);
        for j in [0, 50] {
            assert!(d_xi_eps(&nr, &sp, j, 0.0).unwrap().abs() < 1e-9);
            assert!(d_xi_eps(&nr, &sp, j, 1.0).unwrap().abs() < 1e-9);
            for &x in &[0.2, 0.45, 0.9] {
                let h = 1e-6;
                let fd = (xi_eps(&nr, &sp, j, x + h).unwrap() - xi_eps(&nr, &sp, j, x - h).unwrap())
                    / (2.0 * h);
                let d = d_xi_eps(&nr, &sp, j, x).unwrap();
                assert!((fd - d).abs() < 1e-5 * (1.0 + d.abs()), "{fd} vs {d}");
                let dm = d_xi_eps(&nr, &sp, j, -x).unwrap();
                assert!((d + dm).abs() < 1e-9 * (1.0 + d.abs()));
            }
        }
    }

    #[test]
    fn spatial_covariance_matches_doubled_kernel() {
        let g = GridSpec::new(16, 10_000, 1.0).unwrap();
        let sp = SmoothingParams::new(0.01, 0.1).unwrap();
        let nr = sample_noise(&g, &sp, 21);
        let sn = SmoothedNoise::new(&nr, sp.eps);
        let cfg = KernelConfig::default();
        for &(x, y) in &[(0.3, 0.3), (0.3, 0.4), (0.05, 0.0), (0.7, 0.75)] {
            let cov: f64 =
                (0..g.nt).map(|j| sn.value(j, x) * sn.value(j, y)).sum::<f64>() / g.nt as f64;
            let want = p_neumann(2.0 * sp.eps, x, y, &cfg).unwrap();
            assert!((cov * g.dt() - want).abs() < 0.05 * want, "({x},{y}) {} vs {want}", cov * g.dt());
        }
    }

    #[test]
    fn isometry_at_small_eps() {
        // g(x) = cos(pi x) + 1 has squared norm 3/2.
        let g = GridSpec::new(16, 4000, 1.0).unwrap();
        let sp = SmoothingParams::new(1e-4, 0.1).unwrap();
        let nr = sample_noise(&g, &sp, 8);
        let gl = crate::quadrature::GaussLegendre::on_interval(64, 0.0, 1.0);
        let sn = SmoothedNoise::new(&nr, sp.eps);
        let samples: Vec<f64> = (0..g.nt)
            .map(|j| {
                let pair = gl.integrate(|x| sn.value(j, x) * ((PI * x).cos() + 1.0));
                pair * pair * g.dt()
            })
            .collect();
        let (m, se) = mean_stderr(&samples);
        assert!((m - 1.5).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn initial_data_moments() {
        let g = GridSpec::new(32, 10, 1.0).unwrap();
        let alpha = 0.4;
        let reps: Vec<InitialData> = (0..10_000).map(|s| sample_initial(&g, alpha, s)).collect();
        let u5: Vec<f64> = reps.iter().map(|id| id.u0_values[5]).collect();
        let (m, se) = mean_stderr(&u5);
        assert!((m - alpha).abs() < 3.0 * se);
        let ends: Vec<f64> = reps.iter().map(|id| id.h0_values[g.nx] - alpha).collect();
        let v = crate::stats::sample_variance(&ends);
        assert!((v - 1.0).abs() < 0.05, "Var h0(1) = {v}");
        assert!(reps.iter().all(|id| id.h0_values[0] == 0.0));
    }

    #[test]
    fn white_noise_isometry_for_initial_data() {
        let g = GridSpec::new(64, 10, 1.0).unwrap();
        // f(x) = sin(2 pi x), norm^2 = 1/2, integrated exactly per cell.
        let dx = g.dx();
        let cells: Vec<f64> = (0..g.nx)
            .map(|i| {
                let (a, b) = (i as f64 * dx, (i + 1) as f64 * dx);
                ((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI)
            })
            .collect();
        let pairs: Vec<f64> = (0..10_000).map(|s| sample_initial(&g, 0.0, s).pair_with(&cells)).collect();
        let sq: Vec<f64> = pairs.iter().map(|p| p * p).collect();
        let (m, se) = mean_stderr(&sq);
        assert!((m - 0.5).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn smoothing_recovers_pairing_at_small_kappa() {
        let g = GridSpec::new(64, 10, 1.0).unwrap();
        let id = sample_initial(&g, 0.3, 4);
        let si = SmoothedInitial::new(&id, 1e-5);
        // Smooth bump supported in [0.2, 0.8].
        let f = |x: f64| {
            let z = (x - 0.5) / 0.3;
            if z.abs() < 1.0 { (-1.0 / (1.0 - z * z)).exp() } else { 0.0 }
        };
        let panels: Vec<crate::quadrature::GaussLegendre> = (0..g.nx)
            .map(|i| crate::quadrature::GaussLegendre::on_interval(12, g.node(i), g.node(i + 1)))
            .collect();
        let cells: Vec<f64> = panels.iter().map(|p| p.integrate(f)).collect();
        let exact = id.pair_with(&cells);
        let smooth: f64 = panels.iter().map(|p| p.integrate(|x| si.slope(x) * f(x))).sum();
        assert!((exact - smooth).abs() < 1e-3, "{exact} vs {smooth}");
    }

    #[test]
    fn slope_is_derivative_of_height() {
        let g = GridSpec::new(64, 10, 1.0).unwrap();
        let id = sample_initial(&g, -0.6, 12);
        let si = SmoothedInitial::new(&id, 0.01);
        for &x in &[0.1, 0.33, 0.5, 0.91, 1.2, -0.4] {
            let h = 1e-5;
            let fd = (si.height(x + h) - si.height(x - h)) / (2.0 * h);
            assert!((fd - si.slope(x)).abs() < 1e-6 * (1.0 + fd.abs()), "x={x}: {fd} vs {}", si.slope(x));
            let (hh, ss) = si.height_and_slope(x);
            assert!((hh - si.height(x)).abs() < 1e-12 && (ss - si.slope(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothed_height_mean_matches_data() {
        let g = GridSpec::new(32, 10, 1.0).unwrap();
        let id = sample_initial(&g, 0.7, 3);
        let si = SmoothedInitial::new(&id, 0.02);
        let gl = crate::quadrature::GaussLegendre::on_interval(200, 0.0, 1.0);
        let smooth_mean = gl.integrate(|x| si.height(x) - 0.7 * x);
        let raw_mean: f64 =
            id.h0_values.windows(2).map(|w| 0.5 * (w[0] + w[1]) / 32.0).sum::<f64>() - 0.35;
        assert!((smooth_mean - raw_mean).abs() < 1e-10);
    }

    #[test]
    fn smoothed_slope_covariance_is_dirichlet_kernel() {
        let g = GridSpec::new(128, 10, 1.0).unwrap();
        let kappa = 0.01;
        let cfg = KernelConfig::default();
        let pts = [(0.3, 0.3), (0.5, 0.55), (0.1, 0.12), (0.8, 0.8)];
        let mut acc = vec![Vec::new(); pts.len()];
        for s in 0..10_000 {
            let si = SmoothedInitial::new(&sample_initial(&g, 0.2, s), kappa);
            for (k, &(x, y)) in pts.iter().enumerate() {
                acc[k].push((si.slope(x) - 0.2) * (si.slope(y) - 0.2));
            }
        }
        for (k, &(x, y)) in pts.iter().enumerate() {
            let (m, _) = mean_stderr(&acc[k]);
            let want = p_dirichlet(2.0 * kappa, x, y, &cfg).unwrap();
            assert!((m - want).abs() < 0.05 * want, "({x},{y}) {m} vs {want}");
        }
    }

    #[test]
    fn dump_round_trip() {
        let g = GridSpec::new(16, 12, 0.5).unwrap();
        let sp = SmoothingParams::new(0.1, 0.1).unwrap();
        let nr = sample_noise(&g, &sp, 77);
        let id = sample_initial(&g, 0.1, 77);
        let d = FlatDump::from_fields(&nr, Some(&id));
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"OKPZ1");
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 16);
        let back = FlatDump::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        let (nr2, id2) = back.to_fields(g.dt()).unwrap();
        assert_eq!(nr2, nr);
        assert_eq!(id2.unwrap(), id);
        assert!(FlatDump::read_from(&b"OKPZ2xxxxxxxx"[..]).is_err());
    }

    proptest! {
        #[test]
        fn smoothed_fields_are_reflection_invariant(x in -3.0f64..3.0) {
            let sp = SmoothingParams::new(0.05, 0.05).unwrap();
            let nr = sample_noise(&GridSpec::new(16, 8, 1.0).unwrap(), &sp, 5);
            let sn = SmoothedNoise::new(&nr, sp.eps);
            let r = crate::kernels::reflect_raw(x);
            prop_assert!((sn.value(3, x) - sn.value(3, r)).abs() < 1e-10);
            let id = sample_initial(&GridSpec::new(16, 8, 1.0).unwrap(), 0.5, 5);
            let si = SmoothedInitial::new(&id, 0.05);
            prop_assert!((si.height(x) - si.height(r)).abs() < 1e-10);
            if (x - x.round()).abs() > 1e-6 {
                let sgn = crate::kernels::altsign_raw(x);
                prop_assert!((si.slope(x) - sgn * si.slope(r)).abs() < 1e-9);
            }
        }
    }
}
