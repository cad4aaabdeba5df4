//! Estimator summaries shared by every experiment.

use crate::params::GridSpec;
use crate::stats::mean_stderr;

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e6)` in magnitude.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One Monte Carlo estimate with its error bar and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub estimate: f64,
    pub stderr: f64,
    pub ess: f64,
    pub seed: u64,
    pub eps: f64,
    pub kappa: f64,
    pub grid: GridSpec,
    /// Starting points of the driving paths, if any.
    pub x: Vec<f64>,
    pub n_paths: usize,
    pub n_noise: usize,
    pub degenerate: bool,
}

impl ExperimentReport {
    pub fn new(experiment: &str, estimate: f64, stderr: f64, seed: u64, grid: &GridSpec) -> Self {
        Self {
            experiment: experiment.to_string(),
            estimate,
            stderr,
            ess: f64::NAN,
            seed,
            eps: f64::NAN,
            kappa: f64::NAN,
            grid: *grid,
            x: Vec::new(),
            n_paths: 0,
            n_noise: 0,
            degenerate: false,
        }
    }

    /// Sample mean with its standard error; `ess` is the sample count.
    pub fn from_samples(experiment: &str, samples: &[f64], seed: u64, grid: &GridSpec) -> Self {
        let (m, se) = mean_stderr(samples);
        let mut r = Self::new(experiment, m, se, seed, grid);
        r.ess = samples.len() as f64;
        r
    }

    pub const CSV_HEADER: &'static str = "experiment,eps,kappa,t,x1,x2,estimate,stderr,ess,n_paths,n_noise,seed";

    /// Unused start columns are left empty.
    pub fn csv_row(&self) -> String {
        let x = |i: usize| self.x.get(i).map(|v| format_real(*v)).unwrap_or_default();
        let r = format_real;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            r(self.eps),
            r(self.kappa),
            r(self.grid.t_final),
            x(0),
            x(1),
            r(self.estimate),
            r(self.stderr),
            r(self.ess),
            self.n_paths,
            self.n_noise,
            self.seed,
        )
    }
}
