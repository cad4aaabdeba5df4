//! Reflection maps and heat kernels on `[0,1]`.
//!
//! Neumann and Dirichlet kernels are image sums of the free Gaussian. The
//! free functions here sum the images directly; [`PeriodicKernel`] folds its
//! argument into one period first and is the evaluator used in hot loops.

use crate::error::{domain, Error, Result};
use crate::params::BoundaryParams;

pub mod selftest;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Truncation controls for image sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Absolute budget for the omitted tail of one kernel evaluation.
    pub tail_tolerance: f64,
    /// Hard cap on the number of image terms.
    pub max_images: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { tail_tolerance: 1e-14, max_images: 4096 }
    }
}

impl KernelConfig {
    pub fn new(tail_tolerance: f64, max_images: usize) -> Result<Self> {
        if !(tail_tolerance > 0.0) || max_images == 0 {
            return Err(domain("tail_tolerance must be positive and max_images at least 1"));
        }
        Ok(Self { tail_tolerance, max_images })
    }

    /// Half-width of the image window around the evaluation point.
    pub fn window(&self, t: f64) -> f64 {
        (2.0 * t * (1.0 / self.tail_tolerance).ln()).sqrt() + 2.0
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("kernel time must be positive (got {t})")))
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("non-finite argument {x}")))
    }
}

/// Distance to `2Z` computed piecewise; exact on the folded interval.
pub(crate) fn reflect_raw(x: f64) -> f64 {
    let fl = x.floor();
    if fl.rem_euclid(2.0) == 0.0 {
        x - fl
    } else {
        fl + 1.0 - x
    }
}

pub(crate) fn zigzag_raw(x: f64) -> f64 {
    let fl = x.floor();
    if x == fl {
        0.0
    } else {
        1.0 - 2.0 * (x - fl)
    }
}

pub(crate) fn altsign_raw(x: f64) -> f64 {
    let fl = x.floor();
    if x == fl {
        0.0
    } else if fl.rem_euclid(2.0) == 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Folds `x` onto `[0,1]`; 2-periodic and even about every integer.
pub fn reflect(x: f64) -> Result<f64> {
    check_finite(x)?;
    Ok(reflect_raw(x))
}

/// Sawtooth that falls from 1 to -1 on each unit interval and is 0 on integers.
pub fn zigzag(x: f64) -> Result<f64> {
    check_finite(x)?;
    Ok(zigzag_raw(x))
}

/// `+1` on `(2n, 2n+1)`, `-1` on `(2n-1, 2n)`, `0` on integers.
pub fn altsign(x: f64) -> Result<f64> {
    check_finite(x)?;
    Ok(altsign_raw(x))
}

/// Free heat kernel of `d/dt = (1/2) d^2/dx^2`.
pub fn gauss_kernel(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    check_finite(x)?;
    Ok(gauss_raw(t, x))
}

#[inline]
fn gauss_raw(t: f64, x: f64) -> f64 {
    INV_SQRT_2PI / t.sqrt() * (-x * x / (2.0 * t)).exp()
}

/// Images `n` with `|d - 2n|` inside the window.
fn image_range(t: f64, d: f64, cfg: &KernelConfig) -> Result<(i64, i64)> {
    let w = cfg.window(t);
    let lo = ((d - w) / 2.0).ceil() as i64;
    let hi = ((d + w) / 2.0).floor() as i64;
    let needed = (hi - lo + 1).max(0) as usize;
    if needed > cfg.max_images {
        return Err(Error::Truncation { needed, limit: cfg.max_images });
    }
    Ok((lo, hi))
}

fn image_sum(t: f64, d: f64, cfg: &KernelConfig) -> Result<f64> {
    let (lo, hi) = image_range(t, d, cfg)?;
    Ok((lo..=hi).map(|n| gauss_raw(t, d - 2.0 * n as f64)).sum())
}

fn image_sum_dx(t: f64, d: f64, cfg: &KernelConfig) -> Result<f64> {
    let (lo, hi) = image_range(t, d, cfg)?;
    Ok((lo..=hi)
        .map(|n| {
            let z = d - 2.0 * n as f64;
            -z / t * gauss_raw(t, z)
        })
        .sum())
}

fn check_args(t: f64, x: f64, y: f64) -> Result<()> {
    check_time(t)?;
    check_finite(x)?;
    check_finite(y)
}

/// Neumann heat kernel on `[0,1]` by the method of images.
pub fn p_neumann(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    Ok(image_sum(t, x - y, cfg)? + image_sum(t, x + y, cfg)?)
}

/// Dirichlet heat kernel on `[0,1]`; images carry alternating signs.
pub fn p_dirichlet(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    Ok(image_sum(t, x - y, cfg)? - image_sum(t, x + y, cfg)?)
}

/// Derivative of the Neumann kernel in its first argument.
pub fn d_p_neumann(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    Ok(image_sum_dx(t, x - y, cfg)? + image_sum_dx(t, x + y, cfg)?)
}

/// Gaussian summed over all shifts by `2Z`.
pub fn periodic_kernel(t: f64, x: f64, cfg: &KernelConfig) -> Result<f64> {
    check_finite(x)?;
    Ok(PeriodicKernel::new(t, cfg)?.value(x))
}

/// `int_0^x (R_t(y) - 1/2) dy` for the periodic kernel `R_t`.
pub fn periodic_antiderivative(t: f64, x: f64, cfg: &KernelConfig) -> Result<f64> {
    check_finite(x)?;
    Ok(PeriodicKernel::new(t, cfg)?.antiderivative(x))
}

/// Smooth zigzag `2 (r_p(x) + r_p(x+1))`.
pub fn smoothed_zigzag(p: f64, x: f64, cfg: &KernelConfig) -> Result<f64> {
    check_finite(x)?;
    Ok(PeriodicKernel::new(p, cfg)?.smoothed_zigzag(x))
}

/// Smooth alternating sign `2 (r_p(x) - r_p(x+1))`.
pub fn smoothed_altsign(p: f64, x: f64, cfg: &KernelConfig) -> Result<f64> {
    check_finite(x)?;
    Ok(PeriodicKernel::new(p, cfg)?.smoothed_altsign(x))
}

/// Variance density of the mollified noise, `p_neumann(2 eps, x, x)`.
pub fn renormalization(eps: f64, x: f64, cfg: &KernelConfig) -> Result<f64> {
    p_neumann(2.0 * eps, x, x, cfg)
}

/// Boundary potential `-(a p_neumann(eps,x,0) + b p_neumann(eps,x,1)) / 2`
/// with the shifted Robin coefficients `a`, `b`.
pub fn boundary_potential(eps: f64, x: f64, bp: &BoundaryParams, cfg: &KernelConfig) -> Result<f64> {
    let left = p_neumann(eps, x, 0.0, cfg)?;
    let right = p_neumann(eps, x, 1.0, cfg)?;
    Ok(-0.5 * (bp.alpha_hat() * left + bp.beta_hat() * right))
}

/// `int_a^b p(t, u) du`, evaluated on the tail side to keep precision.
fn gauss_mass(t: f64, a: f64, b: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if lo >= 0.0 {
        0.5 * (libm::erfc(a / s) - libm::erfc(b / s))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-b / s) - libm::erfc(-a / s))
    } else {
        0.5 * (libm::erf(b / s) - libm::erf(a / s))
    }
}

/// Periodic Gaussian `R_t` with its derivative and centred antiderivative.
///
/// Arguments are folded into `[-1, 1]` by 2-periodicity, so the work per call
/// does not grow with `|x|`.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicKernel {
    t: f64,
    inv_two_t: f64,
    norm: f64,
    cutoff_sq: f64,
    reach: i64,
}

impl PeriodicKernel {
    pub fn new(t: f64, cfg: &KernelConfig) -> Result<Self> {
        check_time(t)?;
        let norm = INV_SQRT_2PI / t.sqrt();
        // Skip terms below a hundredth of the budget; the skipped tail is
        // geometric and stays under the budget.
        let floor = 0.01 * cfg.tail_tolerance;
        let cutoff_sq = 2.0 * t * (norm / floor).ln().max(0.0);
        let reach = ((1.0 + cutoff_sq.sqrt()) / 2.0).ceil() as i64 + 1;
        let needed = (2 * reach + 1) as usize;
        if needed > cfg.max_images {
            return Err(Error::Truncation { needed, limit: cfg.max_images });
        }
        Ok(Self { t, inv_two_t: 1.0 / (2.0 * t), norm, cutoff_sq, reach })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    #[inline]
    fn fold(x: f64) -> f64 {
        x - 2.0 * (0.5 * x).round()
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let y = Self::fold(x);
        let mut s = 0.0;
        for n in -self.reach..=self.reach {
            let z = y - 2.0 * n as f64;
            let z2 = z * z;
            if z2 <= self.cutoff_sq {
                s += (-z2 * self.inv_two_t).exp();
            }
        }
        self.norm * s
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let y = Self::fold(x);
        let mut s = 0.0;
        for n in -self.reach..=self.reach {
            let z = y - 2.0 * n as f64;
            let z2 = z * z;
            if z2 <= self.cutoff_sq {
                s -= z * (-z2 * self.inv_two_t).exp();
            }
        }
        self.norm * s / self.t
    }

    /// Value and derivative in one pass.
    #[inline]
    pub fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        let y = Self::fold(x);
        let (mut s, mut d) = (0.0, 0.0);
        for n in -self.reach..=self.reach {
            let z = y - 2.0 * n as f64;
            let z2 = z * z;
            if z2 <= self.cutoff_sq {
                let e = (-z2 * self.inv_two_t).exp();
                s += e;
                d -= z * e;
            }
        }
        (self.norm * s, self.norm * d / self.t)
    }

    /// `int_0^x (R_t(y) - 1/2) dy`, one error-function term per image.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let y = Self::fold(x);
        let mut s = 0.0;
        for n in -self.reach..=self.reach {
            let shift = 2.0 * n as f64;
            s += gauss_mass(self.t, -shift, y - shift);
        }
        s - 0.5 * y
    }

    pub fn smoothed_zigzag(&self, x: f64) -> f64 {
        2.0 * (self.antiderivative(x) + self.antiderivative(x + 1.0))
    }

    pub fn smoothed_altsign(&self, x: f64) -> f64 {
        2.0 * (self.antiderivative(x) - self.antiderivative(x + 1.0))
    }
}

/// Noise renormalization and boundary potential evaluated along paths.
///
/// The path weight integrates `drift(x) = -renorm(x)/2 + boundary(x)`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedPotential {
    doubled: PeriodicKernel,
    single: PeriodicKernel,
    renorm_at_zero: f64,
    alpha_hat: f64,
    beta_hat: f64,
}

impl SmoothedPotential {
    pub fn new(eps: f64, bp: &BoundaryParams, cfg: &KernelConfig) -> Result<Self> {
        let doubled = PeriodicKernel::new(2.0 * eps, cfg)?;
        let single = PeriodicKernel::new(eps, cfg)?;
        Ok(Self {
            doubled,
            single,
            renorm_at_zero: doubled.value(0.0),
            alpha_hat: bp.alpha_hat(),
            beta_hat: bp.beta_hat(),
        })
    }

    pub fn eps(&self) -> f64 {
        self.single.time()
    }

    /// Kernel at twice the mollification scale; the noise covariance.
    pub fn covariance_kernel(&self) -> &PeriodicKernel {
        &self.doubled
    }

    pub fn renorm(&self, x: f64) -> f64 {
        self.renorm_at_zero + self.doubled.value(2.0 * x)
    }

    pub fn renorm_dx(&self, x: f64) -> f64 {
        2.0 * self.doubled.derivative(2.0 * x)
    }

    pub fn boundary(&self, x: f64) -> f64 {
        -(self.alpha_hat * self.single.value(x) + self.beta_hat * self.single.value(x + 1.0))
    }

    pub fn boundary_dx(&self, x: f64) -> f64 {
        -(self.alpha_hat * self.single.derivative(x)
            + self.beta_hat * self.single.derivative(x + 1.0))
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        -0.5 * self.renorm(x) + self.boundary(x)
    }

    /// Drift and its derivative together.
    #[inline]
    pub fn drift_with_dx(&self, x: f64) -> (f64, f64) {
        let (r2, d2) = self.doubled.value_and_derivative(2.0 * x);
        let (a, da) = self.single.value_and_derivative(x);
        let (b, db) = self.single.value_and_derivative(x + 1.0);
        let value = -0.5 * (self.renorm_at_zero + r2) - (self.alpha_hat * a + self.beta_hat * b);
        let dx = -d2 - (self.alpha_hat * da + self.beta_hat * db);
        (value, dx)
    }

    /// `(renorm, boundary)` and their derivatives, kept apart.
    #[inline]
    pub fn parts_with_dx(&self, x: f64) -> [f64; 4] {
        let (r2, d2) = self.doubled.value_and_derivative(2.0 * x);
        let (a, da) = self.single.value_and_derivative(x);
        let (b, db) = self.single.value_and_derivative(x + 1.0);
        [
            self.renorm_at_zero + r2,
            -(self.alpha_hat * a + self.beta_hat * b),
            2.0 * d2,
            -(self.alpha_hat * da + self.beta_hat * db),
        ]
    }

    /// Boundary part alone, for runs that drop the renormalization.
    pub fn boundary_with_dx(&self, x: f64) -> (f64, f64) {
        let (a, da) = self.single.value_and_derivative(x);
        let (b, db) = self.single.value_and_derivative(x + 1.0);
        (
            -(self.alpha_hat * a + self.beta_hat * b),
            -(self.alpha_hat * da + self.beta_hat * db),
        )
    }
}

/// `int_0^a p_dirichlet(t, y, z) dy` in closed form.
pub fn dirichlet_mass_below(k: &PeriodicKernel, a: f64, z: f64) -> f64 {
    k.antiderivative(a - z) - k.antiderivative(a + z) + 2.0 * k.antiderivative(z)
}
