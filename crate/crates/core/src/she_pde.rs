//! Finite-difference solvers for the heat equation with multiplicative
//! potential: the smoothed problem on frozen noise, and the discrete open
//! stochastic heat equation whose log-gradient is the Burgers flow.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{precondition, Error, Result};
use crate::fields::{InitialData, NoiseRealization, SmoothedInitial, SmoothedNoise};
use crate::kernels::{KernelConfig, SmoothedPotential};
use crate::params::{BoundaryParams, GridSpec, SmoothingParams};
use crate::rng::{stream_rng, tag};

/// Nodal values of `Z` at step `t_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub z_values: Vec<f64>,
    pub t_index: usize,
}

impl FieldState {
    pub fn nx(&self) -> usize {
        self.z_values.len() - 1
    }

    pub fn log_z(&self) -> Vec<f64> {
        self.z_values.iter().map(|z| z.ln()).collect()
    }

    /// Linear interpolation of `Z` at `x` in `[0, 1]`.
    pub fn value_at(&self, x: f64) -> f64 {
        let nx = self.nx();
        let s = (x.clamp(0.0, 1.0) * nx as f64).min(nx as f64);
        let i = (s.floor() as usize).min(nx - 1);
        let w = s - i as f64;
        (1.0 - w) * self.z_values[i] + w * self.z_values[i + 1]
    }

    /// Trapezoid integral of `Z` over `[0, 1]`.
    pub fn mass(&self) -> f64 {
        let n = self.nx();
        let dx = 1.0 / n as f64;
        let inner: f64 = self.z_values[1..n].iter().sum();
        dx * (inner + 0.5 * (self.z_values[0] + self.z_values[n]))
    }
}

/// Which multiplicative terms enter the smoothed solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialMode {
    /// `-C/2 + V` alongside the noise.
    Full,
    /// Noise only.
    Off,
}

/// Tridiagonal solve with constant off-diagonals and a modified first and
/// last row, the Neumann reflection of the ghost nodes.
struct CrankNicolson {
    n: usize,
    r: f64,
    /// Forward-eliminated diagonal.
    cprime: Vec<f64>,
    denom: Vec<f64>,
}

impl CrankNicolson {
    /// `r = dt / (4 dx^2)`: half the implicit weight of `(1/2) d^2/dx^2`.
    fn new(n: usize, r: f64) -> Self {
        let sub = |i: usize| if i == n { -2.0 * r } else { -r };
        let sup = |i: usize| if i == 0 { -2.0 * r } else { -r };
        let diag = 1.0 + 2.0 * r;
        let mut cprime = vec![0.0; n + 1];
        let mut denom = vec![0.0; n + 1];
        denom[0] = diag;
        cprime[0] = sup(0) / diag;
        for i in 1..=n {
            denom[i] = diag - sub(i) * cprime[i - 1];
            cprime[i] = if i < n { sup(i) / denom[i] } else { 0.0 };
        }
        Self { n, r, cprime, denom }
    }

    fn step(&self, z: &mut [f64], rhs: &mut [f64]) {
        let (n, r) = (self.n, self.r);
        rhs[0] = (1.0 - 2.0 * r) * z[0] + 2.0 * r * z[1];
        for i in 1..n {
            rhs[i] = r * z[i - 1] + (1.0 - 2.0 * r) * z[i] + r * z[i + 1];
        }
        rhs[n] = 2.0 * r * z[n - 1] + (1.0 - 2.0 * r) * z[n];
        // Thomas forward sweep folded with the stored elimination.
        let sub = |i: usize| if i == n { -2.0 * r } else { -r };
        z[0] = rhs[0] / self.denom[0];
        for i in 1..=n {
            z[i] = (rhs[i] - sub(i) * z[i - 1]) / self.denom[i];
        }
        for i in (0..n).rev() {
            z[i] -= self.cprime[i] * z[i + 1];
        }
    }
}

/// Smoothed problem on frozen noise: Crank-Nicolson diffusion with the
/// potential applied in two half steps around it, starting from `exp(h0)`.
pub fn solve_smoothed_pde(
    nr: &NoiseRealization,
    initial: &SmoothedInitial,
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    grid: &GridSpec,
    cfg: &KernelConfig,
) -> Result<FieldState> {
    solve_smoothed_pde_with(nr, initial, sp, bp, grid, cfg, PotentialMode::Full)
}

pub fn solve_smoothed_pde_with(
    nr: &NoiseRealization,
    initial: &SmoothedInitial,
    sp: &SmoothingParams,
    bp: &BoundaryParams,
    grid: &GridSpec,
    cfg: &KernelConfig,
    mode: PotentialMode,
) -> Result<FieldState> {
    if nr.nt != grid.nt {
        return Err(precondition(format!("noise has {} slices, grid has {}", nr.nt, grid.nt)));
    }
    let n = grid.nx;
    let dt = grid.dt();
    let dx = grid.dx();
    let nodes: Vec<f64> = (0..=n).map(|i| grid.node(i)).collect();
    let base: Vec<f64> = match mode {
        PotentialMode::Full => {
            let pot = SmoothedPotential::new(sp.eps, bp, cfg)?;
            nodes.iter().map(|&x| pot.drift(x)).collect()
        }
        PotentialMode::Off => vec![0.0; n + 1],
    };
    let noise = SmoothedNoise::new(nr, sp.eps);
    let cn = CrankNicolson::new(n, dt / (4.0 * dx * dx));
    let mut z: Vec<f64> = nodes.iter().map(|&x| initial.height(x).exp()).collect();
    let mut rhs = vec![0.0; n + 1];
    let mut half = vec![0.0; n + 1];
    for j in 0..grid.nt {
        for (i, &x) in nodes.iter().enumerate() {
            half[i] = (0.5 * dt * (noise.value(j, x) + base[i])).exp();
        }
        for (zi, hi) in z.iter_mut().zip(&half) {
            *zi *= hi;
        }
        cn.step(&mut z, &mut rhs);
        for (zi, hi) in z.iter_mut().zip(&half) {
            *zi *= hi;
        }
        if let Some(bad) = z.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Scheme(format!(
                "Z lost positivity at node {bad}, step {j}; reduce dt"
            )));
        }
    }
    Ok(FieldState { z_values: z, t_index: grid.nt })
}

/// Whether the flow is driven by space-time white noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowNoise {
    On,
    /// Deterministic run; the Robin parameters are then used unshifted, so a
    /// constant slope `alpha` is a steady state.
    Off,
}

/// Slope and height profiles at the final time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    /// Forward differences of `log Z`, one per cell.
    pub u_field: Vec<f64>,
    /// `log Z(x) - log Z(0)` at the nodes.
    pub h_field: Vec<f64>,
}

impl FlowProfile {
    /// `sum_i (u_i - alpha) f(cell midpoint) dx`.
    pub fn pair_centred(&self, alpha: f64, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.u_field.len();
        let dx = 1.0 / n as f64;
        self.u_field
            .iter()
            .enumerate()
            .map(|(i, u)| (u - alpha) * f((i as f64 + 0.5) * dx))
            .sum::<f64>()
            * dx
    }

    /// `h(1) - h(0)`.
    pub fn height_difference(&self) -> f64 {
        self.h_field[self.h_field.len() - 1]
    }
}

/// Smallest step count with `dt <= dx^2 / 2`.
pub fn flow_grid(nx: usize, t_final: f64) -> Result<GridSpec> {
    let nt = (2.0 * t_final * (nx * nx) as f64).ceil() as usize;
    GridSpec::new(nx, nt.max(8), t_final)
}

/// Discrete open stochastic heat equation from `Z(0) = exp(h0)`, reported
/// through its Hopf-Cole slope and height.
pub fn flow_sbe(id: &InitialData, bp: &BoundaryParams, grid: &GridSpec, seed: u64) -> Result<FlowProfile> {
    flow_sbe_with(id, bp, grid, seed, FlowNoise::On)
}

pub fn flow_sbe_with(
    id: &InitialData,
    bp: &BoundaryParams,
    grid: &GridSpec,
    seed: u64,
    noise: FlowNoise,
) -> Result<FlowProfile> {
    bp.require_drift_symmetric()?;
    let n = grid.nx;
    if id.nx() != n {
        return Err(precondition(format!("initial data has {} cells, grid has {n}", id.nx())));
    }
    let dt = grid.dt();
    let dx = grid.dx();
    if dt > 0.5 * dx * dx * (1.0 + 1e-12) {
        return Err(precondition(format!("flow needs dt <= dx^2/2 (dt = {dt:e}, dx = {dx:e})")));
    }
    let (a, b) = match noise {
        FlowNoise::On => (bp.alpha_hat(), bp.beta_hat()),
        FlowNoise::Off => (bp.alpha, bp.beta),
    };
    let c = dt / (2.0 * dx * dx);
    let sd = (dt / dx).sqrt();
    let drift = -dt / (2.0 * dx);
    let mut rng = stream_rng(seed, tag::FLOW, 0);
    let mut log_offset = 0.0;
    let mut z: Vec<f64> = id.h0_values.iter().map(|h| h.exp()).collect();
    let mut next = vec![0.0; n + 1];
    for j in 0..grid.nt {
        let left_ghost = z[1] - 2.0 * dx * a * z[0];
        let right_ghost = z[n - 1] - 2.0 * dx * b * z[n];
        next[0] = z[0] + c * (z[1] - 2.0 * z[0] + left_ghost);
        for i in 1..n {
            next[i] = z[i] + c * (z[i + 1] - 2.0 * z[i] + z[i - 1]);
        }
        next[n] = z[n] + c * (right_ghost - 2.0 * z[n] + z[n - 1]);
        if noise == FlowNoise::On {
            for v in next.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v *= (sd * g + drift).exp();
            }
        }
        std::mem::swap(&mut z, &mut next);
        if j % 32 == 31 {
            let m = z.iter().copied().fold(0.0, f64::max);
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Scheme(format!("Z lost positivity at step {j}")));
            }
            z.iter_mut().for_each(|v| *v /= m);
            log_offset += m.ln();
        }
    }
    if let Some(bad) = z.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Scheme(format!("Z lost positivity at node {bad}")));
    }
    let log_z: Vec<f64> = z.iter().map(|v| v.ln() + log_offset).collect();
    let u_field = log_z.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
    let h_field = log_z.iter().map(|l| l - log_z[0]).collect();
    Ok(FlowProfile { u_field, h_field })
}
