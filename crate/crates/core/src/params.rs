//! Parameter bundles shared by every module.

use crate::error::{domain, precondition, Result};

/// Uniform space-time grid on `[0,1] x [0, t_final]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub nt: usize,
    pub t_final: f64,
}

impl GridSpec {
    pub fn new(nx: usize, nt: usize, t_final: f64) -> Result<Self> {
        if nx < 8 || nt < 8 {
            return Err(domain(format!("grid needs nx, nt >= 8 (got {nx}, {nt})")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(domain(format!("t_final must be positive (got {t_final})")));
        }
        Ok(Self { nx, nt, t_final })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Node `i` of the spatial grid, `0 <= i <= nx`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }
}

/// Damping level that decides how many cosine modes are kept.
pub const MODE_TAIL: f64 = 1e-12;

/// Number of modes `M` with `exp(-scale (M pi)^2 / 2) <= MODE_TAIL`.
pub fn modes_for_scale(scale: f64) -> usize {
    let m = (2.0 * (1.0 / MODE_TAIL).ln() / scale).sqrt() / std::f64::consts::PI;
    m.ceil().max(1.0) as usize
}

/// Noise mollification scale, initial-data smoothing scale and mode count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    pub eps: f64,
    pub kappa: f64,
    pub n_modes: usize,
}

impl SmoothingParams {
    /// Picks the smallest mode count meeting the damping tail.
    pub fn new(eps: f64, kappa: f64) -> Result<Self> {
        Self::check_scales(eps, kappa)?;
        Ok(Self { eps, kappa, n_modes: modes_for_scale(eps) })
    }

    pub fn with_modes(eps: f64, kappa: f64, n_modes: usize) -> Result<Self> {
        Self::check_scales(eps, kappa)?;
        let top = n_modes as f64 * std::f64::consts::PI;
        if (-eps * top * top / 2.0).exp() > MODE_TAIL {
            return Err(precondition(format!(
                "{n_modes} modes leave a damping tail above {MODE_TAIL:e} at eps={eps}"
            )));
        }
        Ok(Self { eps, kappa, n_modes })
    }

    fn check_scales(eps: f64, kappa: f64) -> Result<()> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(domain(format!("eps must be positive (got {eps})")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(domain(format!("kappa must be positive (got {kappa})")));
        }
        Ok(())
    }
}

/// Boundary drifts. The height slope is pinned to `alpha` at the left end
/// and `-beta` at the right end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BoundaryParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(domain("boundary parameters must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    /// The stationary family `beta = -alpha`.
    pub fn stationary(alpha: f64) -> Result<Self> {
        Self::new(alpha, -alpha)
    }

    pub fn drift_symmetric(&self) -> bool {
        self.alpha + self.beta == 0.0
    }

    pub fn require_drift_symmetric(&self) -> Result<()> {
        if self.drift_symmetric() {
            Ok(())
        } else {
            Err(precondition(format!(
                "stationary run needs beta = -alpha (got alpha={}, beta={})",
                self.alpha, self.beta
            )))
        }
    }

    /// Robin coefficient at `x = 0` for the stochastic heat equation.
    pub fn alpha_hat(&self) -> f64 {
        self.alpha - 0.5
    }

    /// Robin coefficient at `x = 1` for the stochastic heat equation.
    pub fn beta_hat(&self) -> f64 {
        self.beta - 0.5
    }
}
