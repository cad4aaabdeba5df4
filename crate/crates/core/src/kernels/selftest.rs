//! Residuals of the kernel identities, used by the `kernel-identities` run.

use rand::Rng;

use super::*;
use crate::quadrature::GaussLegendre;
use crate::rng::{stream_rng, tag};

/// Largest deviation seen for one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResidual {
    pub name: &'static str,
    pub max_abs_residual: f64,
    pub n_samples: usize,
    pub tolerance: f64,
}

impl IdentityResidual {
    pub fn passed(&self) -> bool {
        self.max_abs_residual.is_finite() && self.max_abs_residual <= self.tolerance
    }
}

struct Tally {
    name: &'static str,
    worst: f64,
    count: usize,
    tolerance: f64,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, worst: 0.0, count: 0, tolerance }
    }

    fn push(&mut self, r: f64) {
        self.count += 1;
        if r.is_nan() || r.abs() > self.worst {
            self.worst = if r.is_nan() { f64::NAN } else { r.abs().max(self.worst) };
        }
    }

    fn finish(self) -> IdentityResidual {
        IdentityResidual {
            name: self.name,
            max_abs_residual: self.worst,
            n_samples: self.count,
            tolerance: self.tolerance,
        }
    }
}

fn unit_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Heat-kernel identities: invariance, mass, semigroup, regrouping,
/// antiderivative limits, boundary algebra and derivative bounds.
pub fn kernel_identities(cfg: &KernelConfig, seed: u64) -> Result<Vec<IdentityResidual>> {
    let mut rng = stream_rng(seed, tag::SYNTHETIC, 1);
    let mut out = Vec::new();

    let mut rho = Tally::new("neumann_rho_invariance", 1e-12);
    let mut regroup = Tally::new("neumann_periodic_regrouping", 1e-12);
    let mut sym = Tally::new("dirichlet_symmetry", 1e-12);
    let mut bdy = Tally::new("dirichlet_boundary_zero", 1e-12);
    for _ in 0..2000 {
        let t = (rng.random_range(1e-3f64.ln()..0.0)).exp();
        let x = rng.random_range(-5.0..5.0);
        let y = rng.random_range(-5.0..5.0);
        let a = p_neumann(t, x, y, cfg)?;
        let scale = a.max(1.0);
        rho.push((a - p_neumann(t, reflect_raw(x), reflect_raw(y), cfg)?) / scale);
        let k = PeriodicKernel::new(t, cfg)?;
        regroup.push((a - k.value(x - y) - k.value(x + y)) / scale);
        let (u, v) = (reflect_raw(x), reflect_raw(y));
        let d = p_dirichlet(t, u, v, cfg)?;
        sym.push((d - p_dirichlet(t, v, u, cfg)?) / d.abs().max(1.0));
        bdy.push(p_dirichlet(t, 0.0, v, cfg)?);
        bdy.push(p_dirichlet(t, 1.0, v, cfg)?);
    }
    out.extend([rho.finish(), regroup.finish(), sym.finish(), bdy.finish()]);

    // Composite rule so that narrow kernels are resolved.
    let panels: Vec<GaussLegendre> = (0..16)
        .map(|i| GaussLegendre::on_interval(32, i as f64 / 16.0, (i + 1) as f64 / 16.0))
        .collect();
    let integrate = |f: &dyn Fn(f64) -> f64| panels.iter().map(|p| p.integrate(f)).sum::<f64>();
    let mut mass = Tally::new("neumann_unit_mass", 1e-10);
    let mut killed = Tally::new("dirichlet_mass_at_most_one", 1e-12);
    for &t in &log_grid(1e-3, 1.0, 7) {
        for &x in &unit_grid(10) {
            let m = integrate(&|y| p_neumann(t, x, y, cfg).unwrap());
            mass.push(m - 1.0);
            let md = integrate(&|y| p_dirichlet(t, x, y, cfg).unwrap());
            killed.push((md - 1.0).max(0.0));
        }
    }
    out.extend([mass.finish(), killed.finish()]);

    let period = GaussLegendre::on_interval(400, -1.0, 1.0);
    let mut pmass = Tally::new("periodic_unit_mass", 1e-10);
    for &t in &log_grid(1e-3, 1.0, 7) {
        let k = PeriodicKernel::new(t, cfg)?;
        pmass.push(period.integrate(|x| k.value(x)) - 1.0);
    }
    out.push(pmass.finish());

    let gl = GaussLegendre::new(129);
    let nodes: Vec<f64> = gl.nodes.iter().map(|&z| 0.5 * (z + 1.0)).collect();
    let weights: Vec<f64> = gl.weights.iter().map(|&w| 0.5 * w).collect();
    let mut ck_n = Tally::new("chapman_kolmogorov_neumann", 1e-8);
    let mut ck_d = Tally::new("chapman_kolmogorov_dirichlet", 1e-8);
    let times = log_grid(1e-3, 1.0, 5);
    for &s in &times {
        for &t in &times {
            for &(x, y) in &[(0.0, 0.0), (0.1, 0.35), (0.5, 0.5), (0.93, 0.2), (1.0, 0.77)] {
                let lhs: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&z, &w)| {
                        w * p_neumann(s, x, z, cfg).unwrap() * p_neumann(t, z, y, cfg).unwrap()
                    })
                    .sum();
                ck_n.push(lhs - p_neumann(s + t, x, y, cfg)?);
                let lhs: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&z, &w)| {
                        w * p_dirichlet(s, x, z, cfg).unwrap() * p_dirichlet(t, z, y, cfg).unwrap()
                    })
                    .sum();
                ck_d.push(lhs - p_dirichlet(s + t, x, y, cfg)?);
            }
        }
    }
    out.extend([ck_n.finish(), ck_d.finish()]);

    let mut per = Tally::new("antiderivative_periodicity", 1e-12);
    let mut zero = Tally::new("antiderivative_at_zero", 0.0);
    let mut quad = Tally::new("antiderivative_vs_quadrature", 1e-12);
    for &t in &log_grid(1e-3, 1.0, 5) {
        let k = PeriodicKernel::new(t, cfg)?;
        zero.push(k.antiderivative(0.0));
        for i in 0..50 {
            let x = -3.0 + 6.0 * i as f64 / 49.0;
            per.push(k.antiderivative(x + 2.0) - k.antiderivative(x));
            let xr = x - 2.0 * (0.5 * x).round();
            let panels: Vec<GaussLegendre> = (0..8)
                .map(|j| GaussLegendre::on_interval(40, xr * j as f64 / 8.0, xr * (j + 1) as f64 / 8.0))
                .collect();
            let q: f64 = panels.iter().map(|p| p.integrate(|u| k.value(u) - 0.5)).sum();
            quad.push(k.antiderivative(x) - q);
        }
    }
    out.extend([per.finish(), zero.finish(), quad.finish()]);

    // Pointwise limit; 2Z neighbourhoods excluded because the limit jumps there.
    let mut lim = Tally::new("antiderivative_small_time_limit", 1e-3);
    let k = PeriodicKernel::new(1e-4, cfg)?;
    for i in 0..=4000 {
        let x = -2.0 + 4.0 * i as f64 / 4000.0;
        let gap = (x - 2.0 * (0.5 * x).round()).abs();
        if gap < 0.05 {
            continue;
        }
        lim.push(k.antiderivative(x) - 0.5 * zigzag_raw(0.5 * x));
    }
    out.push(lim.finish());

    let mut anti = Tally::new("smoothed_altsign_antiperiodicity", 1e-12);
    for &p in &log_grid(1e-4, 1.0, 5) {
        let k = PeriodicKernel::new(p, cfg)?;
        for i in 0..40 {
            let x = -2.0 + 4.0 * i as f64 / 39.0;
            anti.push(k.smoothed_altsign(x) + k.smoothed_altsign(x + 1.0));
        }
    }
    out.push(anti.finish());

    let mut half = Tally::new("smoothed_half_zigzag_limit", 1e-2);
    let k = PeriodicKernel::new(1e-4, cfg)?;
    half.push(0.5 * k.smoothed_zigzag(0.5) + 0.5 * k.smoothed_altsign(0.5) - zigzag_raw(0.25));
    half.push(k.smoothed_zigzag(1.0));
    out.push(half.finish());

    let mut creg = Tally::new("renormalization_regrouping", 1e-12);
    let mut bid = Tally::new("boundary_identity", 1e-10);
    let mut vzero = Tally::new("boundary_potential_zero_coefficients", 0.0);
    let neutral = BoundaryParams::new(0.5, 0.5)?;
    for &eps in &log_grid(1e-3, 0.5, 6) {
        let k2 = PeriodicKernel::new(2.0 * eps, cfg)?;
        let k1 = PeriodicKernel::new(eps, cfg)?;
        for &x in &unit_grid(40) {
            let c = renormalization(eps, x, cfg)?;
            creg.push((c - k2.value(0.0) - k2.value(2.0 * x)) / c.max(1.0));
            vzero.push(boundary_potential(eps, x, &neutral, cfg)?);
            for &alpha in &[-0.7, 0.0, 0.3, 1.2] {
                let bp = BoundaryParams::stationary(alpha)?;
                let lhs = 0.5 * bp.alpha_hat() * d_p_neumann(eps, x, 0.0, cfg)?
                    + 0.5 * bp.beta_hat() * d_p_neumann(eps, x, 1.0, cfg)?;
                let (d0, d1) = (k1.derivative(x), k1.derivative(x + 1.0));
                let rhs = alpha * (d0 - d1) - 0.5 * (d0 + d1);
                bid.push(lhs - rhs);
            }
        }
    }
    out.extend([creg.finish(), bid.finish(), vzero.finish()]);

    let mut fd = Tally::new("derivative_vs_finite_difference", 1e-6);
    let mut diag = Tally::new("derivative_diagonal_oddness", 1e-12);
    let h = 1e-5;
    for &t in &log_grid(1e-2, 1.0, 5) {
        let k = PeriodicKernel::new(t, cfg)?;
        for &x in &unit_grid(20) {
            for &y in &unit_grid(10) {
                let d = d_p_neumann(t, x, y, cfg)?;
                let c = (p_neumann(t, x + h, y, cfg)? - p_neumann(t, x - h, y, cfg)?) / (2.0 * h);
                fd.push(d - c);
            }
            diag.push(d_p_neumann(t, x, x, cfg)? - k.derivative(2.0 * x));
        }
    }
    out.extend([fd.finish(), diag.finish()]);

    // Residual is the excess of the ratio over the constant 2.
    let mut bound = Tally::new("derivative_gaussian_bound", 0.0);
    for &s in &log_grid(1e-4, 1.0, 25) {
        for &x in &unit_grid(25) {
            for &y in &unit_grid(25) {
                let den = p_neumann(2.0 * s, x, y, cfg)?;
                if den < 1e-250 {
                    continue;
                }
                let ratio = d_p_neumann(s, x, y, cfg)?.abs() * s.sqrt() / den;
                bound.push((ratio - 2.0).max(0.0));
            }
        }
    }
    out.push(bound.finish());

    let mut trunc = Tally::new("image_cap_doubling", cfg.tail_tolerance);
    let doubled = KernelConfig::new(cfg.tail_tolerance, cfg.max_images * 2)?;
    for _ in 0..500 {
        let t = (rng.random_range(1e-4f64.ln()..1.0f64.ln())).exp();
        let x = rng.random_range(-3.0..3.0);
        let y = rng.random_range(-3.0..3.0);
        trunc.push(p_neumann(t, x, y, cfg)? - p_neumann(t, x, y, &doubled)?);
        trunc.push(p_dirichlet(t, x, y, cfg)? - p_dirichlet(t, x, y, &doubled)?);
    }
    out.push(trunc.finish());

    Ok(out)
}

fn near_integer(x: f64, tol: f64) -> bool {
    (x - x.round()).abs() < tol
}

/// Almost-everywhere identities for the sharp zigzag and sign functions,
/// sampled away from their break sets.
pub fn ae_identities(n_samples: usize, seed: u64) -> Vec<IdentityResidual> {
    let mut rng = stream_rng(seed, tag::SYNTHETIC, 2);
    let gap = 1e-9;
    let mut bracket = Tally::new("ae_bracket_identity", 1e-12);
    let mut second = Tally::new("ae_zigzag_altsign_identity", 1e-12);
    while bracket.count < n_samples {
        let x1: f64 = rng.random_range(-4.0..4.0);
        let x2: f64 = rng.random_range(-4.0..4.0);
        let (r1, r2) = (reflect_raw(x1), reflect_raw(x2));
        if near_integer(x1, gap)
            || near_integer(x2, gap)
            || near_integer(0.5 * (x1 - x2), gap)
            || near_integer(0.5 * (x1 + x2), gap)
            || (r1 - r2).abs() < gap
        {
            continue;
        }
        let indicator = if r1 <= r2 { 1.0 } else { 0.0 };
        let lhs = 0.5 * zigzag_raw(0.5 * (x1 - x2))
            + 0.5 * zigzag_raw(0.5 * (x1 + x2))
            + altsign_raw(x1) * indicator;
        bracket.push(lhs - zigzag_raw(0.5 * x1));
        second.push(0.5 * zigzag_raw(x1) + 0.5 * altsign_raw(x1) - zigzag_raw(0.5 * x1));
    }
    let mut sign = Tally::new("half_zigzag_sign_agreement", 1e-15);
    while sign.count < n_samples {
        let x: f64 = rng.random_range(-2.0..2.0);
        if x.abs() < gap || 2.0 - x.abs() < gap {
            continue;
        }
        sign.push(0.5 * zigzag_raw(0.5 * x) - 0.5 * (x.signum() - x));
    }
    vec![bracket.finish(), second.finish(), sign.finish()]
}
