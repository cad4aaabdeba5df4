//! One runner per subcommand. Defaults reproduce the acceptance runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use openkpz_core::fields::sample_noise;
use openkpz_core::kernels::selftest;
use openkpz_core::paths::fourth_moment_experiment;
use openkpz_core::polymer::{
    drift_bound_probe, frozen_initial, gaussian_mgf_check, key_symmetry_estimator, z_theta, DriftTerms,
};
use openkpz_core::rng::{derive_seed, tag};
use openkpz_core::she_pde::{flow_grid, solve_smoothed_pde};
use openkpz_core::stats::{linear_fit, sample_variance, weighted_linear_fit};
use openkpz_core::stein::{
    flow_ensemble, gamma_terms, gaussianity_battery, stein_residual_sbe, Modulation, OuterFn, SbeSource,
    TestFunction,
};
use openkpz_core::{
    Battery, BoundaryParams, Estimate, ExperimentReport, GridSpec, KernelConfig, PolymerEnv, SmoothingParams,
    SteinReport, TestFunctionPair,
};

use crate::output::{Check, Outcome, Table};
use crate::{CliError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Real,
    /// Comma-separated reals.
    List,
    Text,
}

/// A declared configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Param {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
}

const fn int(key: &'static str, default: &'static str) -> Param {
    Param { key, kind: Kind::Int, default }
}
const fn real(key: &'static str, default: &'static str) -> Param {
    Param { key, kind: Kind::Real, default }
}
const fn list(key: &'static str, default: &'static str) -> Param {
    Param { key, kind: Kind::List, default }
}
const fn text(key: &'static str, default: &'static str) -> Param {
    Param { key, kind: Kind::Text, default }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    KernelIdentities,
    FkPdeDuality,
    SteinSbe,
    SteinPolymer,
    GammaCancellation,
    KeySymmetryDecay,
    MomentBounds,
    MgfCheck,
    DriftBound,
    InvarianceEndtoend,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::KernelIdentities,
        Experiment::FkPdeDuality,
        Experiment::SteinSbe,
        Experiment::SteinPolymer,
        Experiment::GammaCancellation,
        Experiment::KeySymmetryDecay,
        Experiment::MomentBounds,
        Experiment::MgfCheck,
        Experiment::DriftBound,
        Experiment::InvarianceEndtoend,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::KernelIdentities => "kernel-identities",
            Experiment::FkPdeDuality => "fk-pde-duality",
            Experiment::SteinSbe => "stein-sbe",
            Experiment::SteinPolymer => "stein-polymer",
            Experiment::GammaCancellation => "gamma-cancellation",
            Experiment::KeySymmetryDecay => "key-symmetry-decay",
            Experiment::MomentBounds => "moment-bounds",
            Experiment::MgfCheck => "mgf-check",
            Experiment::DriftBound => "drift-bound",
            Experiment::InvarianceEndtoend => "invariance-endtoend",
        }
    }

    pub fn about(&self) -> &'static str {
        match self {
            Experiment::KernelIdentities => "heat-kernel and almost-everywhere identity residuals",
            Experiment::FkPdeDuality => "path-ensemble Z against the finite-difference solution on frozen noise",
            Experiment::SteinSbe => "Stein residuals of the discrete slope field",
            Experiment::SteinPolymer => "Stein residuals of the smoothed polymer slope field",
            Experiment::GammaCancellation => "the three limiting correction groups and their sums",
            Experiment::KeySymmetryDecay => "decay of the two-path key-symmetry integral as smoothing vanishes",
            Experiment::MomentBounds => "moments of the stopped occupation integral against their scaling",
            Experiment::MgfCheck => "squared numerator from noise averages and from four-path weights",
            Experiment::DriftBound => "growth of the four-path log-gradient over the start lattice",
            Experiment::InvarianceEndtoend => "white-noise invariance of the open KPZ slope field at t = 1",
        }
    }

    pub fn params(&self) -> &'static [Param] {
        match self {
            Experiment::KernelIdentities => {
                const P: &[Param] = &[
                    real("tail_tolerance", "1e-14"),
                    int("max_images", "4096"),
                    int("n_samples", "100000"),
                ];
                P
            }
            Experiment::FkPdeDuality => {
                const P: &[Param] = &[
                    real("eps", "0.05"),
                    real("kappa", "0.05"),
                    real("alpha", "0.3"),
                    real("beta", "0.9"),
                    real("t", "0.25"),
                    int("nx", "128"),
                    int("nt", "250"),
                    int("n_paths", "20000"),
                    int("n_cases", "10"),
                    int("min_agree", "9"),
                    real("n_se", "3"),
                ];
                P
            }
            Experiment::SteinSbe => {
                const P: &[Param] = &[
                    list("alpha", "0,2"),
                    real("t", "1"),
                    int("nx", "128"),
                    int("n_samples", "500"),
                    text("source", "flow"),
                    text("battery", "primary"),
                    real("n_se", "3"),
                ];
                P
            }
            Experiment::SteinPolymer => {
                const P: &[Param] = &[
                    list("alpha", "0"),
                    real("eps", "0.01"),
                    real("kappa", "0.01"),
                    real("t", "0.1"),
                    int("nx", "64"),
                    int("nt", "40"),
                    int("n_paths", "200"),
                    int("n_samples", "200"),
                    text("battery", "primary"),
                    real("n_se", "3"),
                ];
                P
            }
            Experiment::GammaCancellation => {
                const P: &[Param] = &[
                    list("alpha", "0"),
                    real("eps", "0.01"),
                    real("kappa", "0.01"),
                    real("t", "0.1"),
                    int("nx", "64"),
                    int("nt", "40"),
                    text("outer", "tanh"),
                    real("center", "0.5"),
                    real("width", "0.4"),
                    int("n_samples", "200"),
                    int("n_paths", "1000"),
                    real("n_se", "3"),
                ];
                P
            }
            Experiment::KeySymmetryDecay => {
                const P: &[Param] = &[
                    list("eps", "0.1,0.03,0.01,0.003,0.001"),
                    real("kappa", "0.05"),
                    real("alpha", "0.5"),
                    real("x1", "0.3"),
                    real("x2", "0.6"),
                    real("t", "0.1"),
                    int("nx", "32"),
                    real("steps_per_eps", "10"),
                    int("min_nt", "20"),
                    int("n_paths", "4000"),
                    int("n_noise", "40"),
                    real("min_slope", "0.15"),
                ];
                P
            }
            Experiment::MomentBounds => {
                const P: &[Param] = &[
                    list("eps", "0.1,0.01,0.001"),
                    real("x", "0.5"),
                    real("t", "0.5"),
                    int("nx", "16"),
                    real("steps_per_eps", "20"),
                    int("n_paths", "10000"),
                    real("max_spread", "50"),
                ];
                P
            }
            Experiment::MgfCheck => {
                const P: &[Param] = &[
                    real("eps", "0.05"),
                    real("kappa", "0.05"),
                    real("alpha", "0.5"),
                    real("x1", "0.3"),
                    real("x2", "0.6"),
                    real("t", "0.25"),
                    int("nx", "32"),
                    int("nt", "250"),
                    int("n_paths", "10000"),
                    int("n_noise", "50"),
                    real("n_se", "3"),
                ];
                P
            }
            Experiment::DriftBound => {
                const P: &[Param] = &[
                    list("eps", "0.1,0.01,0.001"),
                    real("kappa", "0.05"),
                    real("alpha", "0.5"),
                    real("t", "0.25"),
                    int("nx", "32"),
                    real("steps_per_eps", "4"),
                    int("min_nt", "50"),
                    int("n_paths", "10000"),
                    real("max_rel_residual", "0.2"),
                ];
                P
            }
            Experiment::InvarianceEndtoend => {
                const P: &[Param] = &[
                    list("alpha", "0,2"),
                    real("t", "1"),
                    int("nx", "128"),
                    int("n_samples", "2000"),
                    real("n_se", "3"),
                    real("ks_level", "0.01"),
                    real("min_pass_rate", "0.9"),
                    real("variance_tolerance", "0.1"),
                ];
                P
            }
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment {s:?}")))
    }
}

pub(crate) fn dispatch(c: &RunConfig) -> Result<Outcome, CliError> {
    match c.experiment {
        Experiment::KernelIdentities => kernel_identities(c),
        Experiment::FkPdeDuality => fk_pde_duality(c),
        Experiment::SteinSbe => stein_sbe(c),
        Experiment::SteinPolymer => stein_polymer(c),
        Experiment::GammaCancellation => gamma_cancellation(c),
        Experiment::KeySymmetryDecay => key_symmetry_decay(c),
        Experiment::MomentBounds => moment_bounds(c),
        Experiment::MgfCheck => mgf_check(c),
        Experiment::DriftBound => drift_bound(c),
        Experiment::InvarianceEndtoend => invariance_endtoend(c),
    }
}

/// Steps for a time horizon so that `dt <= eps / steps_per_eps`.
fn steps_for(t: f64, eps: f64, steps_per_eps: f64, min_nt: usize) -> usize {
    ((t * steps_per_eps / eps).ceil() as usize).max(min_nt)
}

fn check_nonempty(key: &str, v: &[f64]) -> Result<(), CliError> {
    if v.len() < 2 {
        return Err(CliError::Config(format!("{key}: need at least two values")));
    }
    Ok(())
}

fn report_table(name: &str) -> Table {
    Table::new(name, ExperimentReport::CSV_HEADER)
}

const AE_GROUP: [&str; 4] = [
    "ae_bracket_identity",
    "ae_zigzag_altsign_identity",
    "half_zigzag_sign_agreement",
    "antiderivative_small_time_limit",
];

fn kernel_identities(c: &RunConfig) -> Result<Outcome, CliError> {
    let kc = KernelConfig::new(c.f64("tail_tolerance")?, c.usize("max_images")?)?;
    let mut all = selftest::kernel_identities(&kc, c.seed)?;
    all.extend(selftest::ae_identities(c.usize("n_samples")?, c.seed));
    let mut t = Table::new("", "identity_name,max_abs_residual,n_samples,tolerance,passed");
    for r in &all {
        t.push(&[&r.name, &r.max_abs_residual, &r.n_samples, &r.tolerance, &r.passed()]);
    }
    let verdict = |ae: bool, name: &str| {
        let group: Vec<_> = all.iter().filter(|r| AE_GROUP.contains(&r.name) == ae).collect();
        let failed: Vec<&str> = group.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
        let detail = if failed.is_empty() {
            format!("{} identities within tolerance", group.len())
        } else {
            format!("failed: {}", failed.join(" "))
        };
        Check::new(name, failed.is_empty(), detail)
    };
    Ok(Outcome {
        checks: vec![verdict(false, "kernel-identities"), verdict(true, "ae-identities")],
        tables: vec![t],
    })
}

fn fk_pde_duality(c: &RunConfig) -> Result<Outcome, CliError> {
    let kc = KernelConfig::default();
    let sp = SmoothingParams::new(c.f64("eps")?, c.f64("kappa")?)?;
    let bp = BoundaryParams::new(c.f64("alpha")?, c.f64("beta")?)?;
    let grid = GridSpec::new(c.usize("nx")?, c.usize("nt")?, c.f64("t")?)?;
    let (n_paths, n_cases, n_se) = (c.usize("n_paths")?, c.usize("n_cases")?, c.f64("n_se")?);
    let seed = c.seed;
    let cases: Result<Vec<(usize, f64, ExperimentReport)>, CliError> = (0..n_cases)
        .into_par_iter()
        .map(|k| {
            let kk = k as u64;
            let nr = sample_noise(&grid, &sp, derive_seed(seed, tag::NOISE, kk));
            let init = frozen_initial(&grid, &sp, &bp, derive_seed(seed, tag::INITIAL, kk));
            let pde = solve_smoothed_pde(&nr, &init, &sp, &bp, &grid, &kc)?;
            // Nodes spread across the interior, one per case.
            let i = (((k as f64 + 0.5) / n_cases as f64) * grid.nx as f64).round() as usize;
            let env = PolymerEnv::new(Some(&nr), init, &sp, &bp, &grid, &kc)?;
            let z = z_theta(grid.node(i), &env, n_paths, derive_seed(seed, tag::PATHS, kk))?;
            Ok((k, pde.z_values[i], z))
        })
        .collect();
    let cases = cases?;
    let mut t = Table::new("", "case,x,z_paths,stderr,ess,z_pde,z_score,agree");
    let mut agree = 0;
    for (k, pde, z) in &cases {
        let score = (z.estimate - pde) / z.stderr;
        let ok = score.abs() <= n_se;
        agree += ok as usize;
        t.push(&[k, &z.x[0], &z.estimate, &z.stderr, &z.ess, pde, &score, &ok]);
    }
    let need = c.usize("min_agree")?;
    Ok(Outcome {
        checks: vec![Check::new(
            "fk-pde-duality",
            agree >= need,
            format!("{agree}/{n_cases} cases within {n_se} SE (need {need})"),
        )],
        tables: vec![t],
    })
}

fn parse_battery(c: &RunConfig) -> Result<Battery, CliError> {
    match c.string("battery") {
        "primary" => Ok(Battery::primary()),
        "standard" => Ok(Battery::standard()),
        other => Err(CliError::Config(format!("battery: expected primary or standard, got {other:?}"))),
    }
}

const STEIN_HEADER: &str = "alpha,outer,test,lhs,rhs,residual,stderr,z,n_samples";

fn push_stein_rows(t: &mut Table, alpha: f64, report: &SteinReport) {
    for r in &report.rows {
        t.push(&[&alpha, &r.outer, &r.test, &r.lhs, &r.rhs, &r.residual, &r.stderr, &r.z(), &r.n_samples]);
    }
}

fn stein_check(name: String, report: &SteinReport, n_se: f64) -> Check {
    let worst = report.max_abs_z();
    Check::new(
        name,
        report.all_within(n_se),
        format!("{} rows, max |residual/SE| {worst:.2} (limit {n_se})", report.rows.len()),
    )
}

fn stein_sbe(c: &RunConfig) -> Result<Outcome, CliError> {
    let battery = parse_battery(c)?;
    let source = match c.string("source") {
        "flow" => SbeSource::Flow,
        "initial" => SbeSource::Initial,
        other => return Err(CliError::Config(format!("source: expected flow or initial, got {other:?}"))),
    };
    let grid = flow_grid(c.usize("nx")?, c.f64("t")?)?;
    let (n, n_se) = (c.usize("n_samples")?, c.f64("n_se")?);
    let mut t = Table::new("", STEIN_HEADER);
    let mut checks = Vec::new();
    for alpha in c.f64_list("alpha")? {
        let bp = BoundaryParams::stationary(alpha)?;
        let report = stein_residual_sbe(&grid, &bp, source, &battery, n, c.seed, &KernelConfig::default())?;
        push_stein_rows(&mut t, alpha, &report);
        checks.push(stein_check(format!("stein alpha={alpha}"), &report, n_se));
    }
    Ok(Outcome { tables: vec![t], checks })
}

fn stein_polymer(c: &RunConfig) -> Result<Outcome, CliError> {
    let battery = parse_battery(c)?;
    let sp = SmoothingParams::new(c.f64("eps")?, c.f64("kappa")?)?;
    let grid = GridSpec::new(c.usize("nx")?, c.usize("nt")?, c.f64("t")?)?;
    let source = SbeSource::Polymer { sp, n_paths: c.usize("n_paths")? };
    let (n, n_se) = (c.usize("n_samples")?, c.f64("n_se")?);
    let mut t = Table::new("", STEIN_HEADER);
    let mut checks = Vec::new();
    for alpha in c.f64_list("alpha")? {
        let bp = BoundaryParams::stationary(alpha)?;
        let report = stein_residual_sbe(&grid, &bp, source, &battery, n, c.seed, &KernelConfig::default())?;
        push_stein_rows(&mut t, alpha, &report);
        checks.push(stein_check(format!("stein alpha={alpha}"), &report, n_se));
    }
    Ok(Outcome { tables: vec![t], checks })
}

fn parse_outer(name: &str) -> Result<OuterFn, CliError> {
    OuterFn::ALL
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| CliError::Config(format!("outer: unknown function {name:?}")))
}

fn gamma_cancellation(c: &RunConfig) -> Result<Outcome, CliError> {
    let sp = SmoothingParams::new(c.f64("eps")?, c.f64("kappa")?)?;
    let grid = GridSpec::new(c.usize("nx")?, c.usize("nt")?, c.f64("t")?)?;
    let pair = TestFunctionPair {
        outer: parse_outer(c.string("outer"))?,
        test: TestFunction::new(c.f64("center")?, c.f64("width")?, Modulation::None)?,
    };
    let (n, m, n_se) = (c.usize("n_samples")?, c.usize("n_paths")?, c.f64("n_se")?);
    let mut t = Table::new("", "alpha,group,value,stderr,z");
    let mut checks = Vec::new();
    for alpha in c.f64_list("alpha")? {
        let bp = BoundaryParams::stationary(alpha)?;
        let r = gamma_terms(&grid, &sp, &bp, &pair, n, m, c.seed, &KernelConfig::default())?;
        let groups: [(&str, &Estimate); 5] = [
            ("pair", &r.pair_group),
            ("diagonal", &r.diagonal_group),
            ("single", &r.single_group),
            ("diagonal_plus_single", &r.diagonal_plus_single),
            ("total", &r.total),
        ];
        for (g, e) in groups {
            t.push(&[&alpha, &g, &e.value, &e.stderr, &(e.value / e.stderr)]);
        }
        for (name, e) in [("diagonal+single", &r.diagonal_plus_single), ("total", &r.total)] {
            let z = e.value / e.stderr;
            checks.push(Check::new(
                format!("{name} alpha={alpha}"),
                z.abs() <= n_se,
                format!("{:.3e} +- {:.1e} (z {z:.2})", e.value, e.stderr),
            ));
        }
    }
    Ok(Outcome { tables: vec![t], checks })
}

fn key_symmetry_decay(c: &RunConfig) -> Result<Outcome, CliError> {
    let kc = KernelConfig::default();
    let mut eps = c.f64_list("eps")?;
    check_nonempty("eps", &eps)?;
    eps.sort_by(|a, b| b.total_cmp(a));
    let bp = BoundaryParams::stationary(c.f64("alpha")?)?;
    let (t_final, nx, spe, min_nt) = (c.f64("t")?, c.usize("nx")?, c.f64("steps_per_eps")?, c.usize("min_nt")?);
    let (x1, x2) = (c.f64("x1")?, c.f64("x2")?);
    let (n_paths, n_noise, kappa) = (c.usize("n_paths")?, c.usize("n_noise")?, c.f64("kappa")?);
    let mut reports = Vec::new();
    for &e in &eps {
        let sp = SmoothingParams::new(e, kappa)?;
        let grid = GridSpec::new(nx, steps_for(t_final, e, spe, min_nt), t_final)?;
        reports.push(key_symmetry_estimator(x1, x2, &sp, &bp, &grid, n_paths, n_noise, c.seed, &kc)?);
    }
    let mut t = report_table("");
    for r in &reports {
        t.push_raw(r.csv_row());
    }
    let decreasing = reports.windows(2).all(|w| w[1].estimate < w[0].estimate);
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.estimate.ln()).collect();
    let ws: Vec<f64> = reports.iter().map(|r| (r.estimate / r.stderr).powi(2)).collect();
    let (a, b, se) = weighted_linear_fit(&xs, &ys, &ws);
    let mut fit = Table::new("fit", "intercept,slope,slope_stderr,strictly_decreasing");
    fit.push(&[&a, &b, &se, &decreasing]);
    let min_slope = c.f64("min_slope")?;
    let means: Vec<String> = reports.iter().map(|r| format!("{:.3e}", r.estimate)).collect();
    Ok(Outcome {
        checks: vec![
            Check::new("strictly-decreasing", decreasing, format!("means {}", means.join(" "))),
            Check::new("slope", b >= min_slope, format!("log-log slope {b:.3} +- {se:.3} (need >= {min_slope})")),
        ],
        tables: vec![t, fit],
    })
}

fn moment_bounds(c: &RunConfig) -> Result<Outcome, CliError> {
    let kc = KernelConfig::default();
    let eps = c.f64_list("eps")?;
    check_nonempty("eps", &eps)?;
    let (x, t_final, nx, spe, n_paths) =
        (c.f64("x")?, c.f64("t")?, c.usize("nx")?, c.f64("steps_per_eps")?, c.usize("n_paths")?);
    let mut t = Table::new(
        "",
        "eps,nt,fourth,fourth_stderr,fourth_ratio,squared_second,squared_second_stderr,second_ratio,ess",
    );
    let (mut r4, mut r2) = (Vec::new(), Vec::new());
    for &e in &eps {
        let nt = steps_for(t_final, e, spe, 8);
        let grid = GridSpec::new(nx, nt, t_final)?;
        let m = fourth_moment_experiment(x, e, &grid, n_paths, c.seed, &kc)?;
        let l = e.ln().abs();
        let a = m.fourth.estimate / (e * e * l.powi(4));
        let b = m.squared_second.estimate / (l * l);
        t.push(&[
            &e,
            &nt,
            &m.fourth.estimate,
            &m.fourth.stderr,
            &a,
            &m.squared_second.estimate,
            &m.squared_second.stderr,
            &b,
            &m.fourth.ess,
        ]);
        r4.push(a);
        r2.push(b);
    }
    let spread = |v: &[f64]| {
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let limit = c.f64("max_spread")?;
    let (s4, s2) = (spread(&r4), spread(&r2));
    Ok(Outcome {
        checks: vec![
            Check::new("fourth-moment", s4 < limit, format!("max/min ratio {s4:.2} (limit {limit})")),
            Check::new("second-moment", s2 < limit, format!("max/min ratio {s2:.2} (limit {limit})")),
        ],
        tables: vec![t],
    })
}

fn mgf_check(c: &RunConfig) -> Result<Outcome, CliError> {
    let sp = SmoothingParams::new(c.f64("eps")?, c.f64("kappa")?)?;
    let bp = BoundaryParams::stationary(c.f64("alpha")?)?;
    let grid = GridSpec::new(c.usize("nx")?, c.usize("nt")?, c.f64("t")?)?;
    let r = gaussian_mgf_check(
        c.f64("x1")?,
        c.f64("x2")?,
        &sp,
        &bp,
        &grid,
        c.usize("n_paths")?,
        c.usize("n_noise")?,
        c.seed,
        &KernelConfig::default(),
    )?;
    let mut t = report_table("");
    t.push_raw(r.noise_side.csv_row());
    t.push_raw(r.path_side.csv_row());
    let (z, n_se) = (r.z_score(), c.f64("n_se")?);
    Ok(Outcome {
        checks: vec![Check::new(
            "mgf-identity",
            z.abs() <= n_se,
            format!(
                "noise side {:.4e} +- {:.1e}, path side {:.4e} +- {:.1e}, z {z:.2}",
                r.noise_side.estimate, r.noise_side.stderr, r.path_side.estimate, r.path_side.stderr
            ),
        )],
        tables: vec![t],
    })
}

fn drift_bound(c: &RunConfig) -> Result<Outcome, CliError> {
    let kc = KernelConfig::default();
    let eps = c.f64_list("eps")?;
    check_nonempty("eps", &eps)?;
    let bp = BoundaryParams::stationary(c.f64("alpha")?)?;
    let (t_final, nx, spe, min_nt) = (c.f64("t")?, c.usize("nx")?, c.f64("steps_per_eps")?, c.usize("min_nt")?);
    let (n_paths, kappa) = (c.usize("n_paths")?, c.f64("kappa")?);
    let mut reports = Vec::new();
    for &e in &eps {
        let sp = SmoothingParams::new(e, kappa)?;
        let grid = GridSpec::new(nx, steps_for(t_final, e, spe, min_nt), t_final)?;
        reports.push(drift_bound_probe(&sp, &bp, &grid, n_paths, c.seed, DriftTerms::default(), &kc)?);
    }
    let ls: Vec<f64> = eps.iter().map(|e| e.ln().abs()).collect();
    let us: Vec<f64> = reports.iter().map(|r| r.u_max).collect();
    let (a, b, _) = linear_fit(&ls, &us);
    let mut t = Table::new("", "eps,abs_log_eps,z_max,z_min,u_max,u_max_stderr,min_ess,n_points,n_paths,fitted,rel_residual");
    let mut worst: f64 = 0.0;
    for (r, l) in reports.iter().zip(&ls) {
        let fitted = a + b * l;
        let rel = (fitted - r.u_max).abs() / r.u_max;
        worst = worst.max(rel);
        t.push(&[
            &r.eps,
            l,
            &r.z_max,
            &r.z_min,
            &r.u_max,
            &r.u_max_stderr,
            &r.min_ess,
            &r.n_points,
            &r.n_paths,
            &fitted,
            &rel,
        ]);
    }
    let limit = c.f64("max_rel_residual")?;
    Ok(Outcome {
        checks: vec![Check::new(
            "log-growth",
            worst < limit,
            format!("max|U| ~ {a:.3} + {b:.3}|log eps|, worst relative residual {worst:.3} (limit {limit})"),
        )],
        tables: vec![t],
    })
}

fn invariance_endtoend(c: &RunConfig) -> Result<Outcome, CliError> {
    let grid = flow_grid(c.usize("nx")?, c.f64("t")?)?;
    let battery = Battery::standard();
    let primary = Battery::primary();
    let j_primary = battery
        .tests
        .iter()
        .position(|f| *f == primary.tests[0])
        .expect("standard battery contains the primary bump");
    let (n, n_se, ks_level) = (c.usize("n_samples")?, c.f64("n_se")?, c.f64("ks_level")?);
    let (min_rate, var_tol) = (c.f64("min_pass_rate")?, c.f64("variance_tolerance")?);
    let mut stein = Table::new("stein", STEIN_HEADER);
    let mut gauss = Table::new("gaussianity", "alpha,test,n,mean,mean_z,variance,variance_z,ks_statistic,p_value,passed");
    let mut height = Table::new("height", "alpha,n,mean,variance");
    let mut checks = Vec::new();
    for alpha in c.f64_list("alpha")? {
        let bp = BoundaryParams::stationary(alpha)?;
        let ens = flow_ensemble(&grid, &bp, &battery.tests, n, c.seed)?;
        let report = SteinReport::from_samples(&primary, std::slice::from_ref(&ens.pairings[j_primary]));
        push_stein_rows(&mut stein, alpha, &report);
        checks.push(stein_check(format!("stein alpha={alpha}"), &report, n_se));

        let mut passed = 0;
        for (f, ys) in battery.tests.iter().zip(&ens.pairings) {
            let g = gaussianity_battery(ys, f.norm_sq())?;
            let ok = g.passed(n_se, ks_level);
            passed += ok as usize;
            gauss.push(&[
                &alpha, &f.name, &g.n, &g.mean, &g.mean_z, &g.variance, &g.variance_z, &g.ks.statistic, &g.ks.p_value,
                &ok,
            ]);
        }
        let rate = passed as f64 / battery.tests.len() as f64;
        checks.push(Check::new(
            format!("gaussianity alpha={alpha}"),
            rate >= min_rate,
            format!("{passed}/{} test functions pass (need rate >= {min_rate})", battery.tests.len()),
        ));

        let hd = &ens.height_differences;
        let var = sample_variance(hd);
        let mean = hd.iter().sum::<f64>() / hd.len() as f64;
        height.push(&[&alpha, &hd.len(), &mean, &var]);
        if alpha == 0.0 {
            checks.push(Check::new(
                "height-variance alpha=0",
                (var - 1.0).abs() <= var_tol,
                format!("Var(h(1) - h(0)) = {var:.4} (target 1 +- {var_tol})"),
            ));
        }
    }
    Ok(Outcome { tables: vec![stein, gauss, height], checks })
}
