//! Numerical diagnostics: kernel moments, Itô isometry, hypercontractivity
//! and the kernel-chaos moment bound.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wienerchaos::chaoscalc::{hypercontractivity_report, isometry_report, moment_bound_report, ChaosRule, Integrand};
use wienerchaos::kernelkit::{BandwidthedKernel, MomentKernel};
use wienerchaos::pathlab::TimeGrid;
use wienerchaos::seed::tagged_seed;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const MOMENT_TOLERANCE: f64 = 1e-10;
pub const MOMENT_QUAD_POINTS: usize = 10_000;
const STDERR_BAND: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// The configured kernel, with every coefficient shifted by the configured
/// perturbation.
pub fn check_kernel(cfg: &ExperimentConfig) -> Result<MomentKernel, CliError> {
    let k = MomentKernel::build(cfg.s_star_hi)?;
    let delta = cfg.check.kernel_perturbation;
    if delta == 0.0 {
        return Ok(k);
    }
    let coeffs = k.poly_coeffs().iter().map(|c| c + delta).collect();
    Ok(MomentKernel::from_coefficients(k.moment_order(), coeffs)?)
}

pub fn kernel_moment_checks(k: &MomentKernel) -> Vec<CheckResult> {
    k.moment_residuals(MOMENT_QUAD_POINTS)
        .into_iter()
        .enumerate()
        .map(|(s, r)| CheckResult {
            name: format!("kernel moment s={s} (m={})", k.moment_order()),
            passed: r.abs() <= MOMENT_TOLERANCE,
            measured: r,
            target: 0.0,
            tolerance: MOMENT_TOLERANCE,
            detail: if s == 0 {
                "∫k − 1".into()
            } else {
                format!("∫x^{s} k")
            },
        })
        .collect()
}

fn one(_: f64) -> f64 {
    1.0
}

fn identity(u: f64) -> f64 {
    u
}

pub fn run_checks(cfg: &ExperimentConfig) -> Result<CheckReport, CliError> {
    let kernel = Arc::new(check_kernel(cfg)?);
    let grid = TimeGrid::new(cfg.path_steps)?;
    let n_mc = cfg.check.n_mc;
    let seed = |tag: u64| tagged_seed(cfg.seed, 0x636b, tag);
    let rule = ChaosRule::default();
    let mut checks = kernel_moment_checks(&kernel);

    type Pair<'a> = (&'a str, Vec<&'a dyn Integrand>, Vec<&'a dyn Integrand>);
    let pairs: [Pair; 3] = [
        ("isometry E[I2(1)^2] = 2", vec![&one, &one], vec![&one, &one]),
        ("isometry E[I1(1) I2(1)] = 0", vec![&one], vec![&one, &one]),
        ("isometry E[I1(u)^2] = 1/3", vec![&identity], vec![&identity]),
    ];
    for (i, (name, a, b)) in pairs.iter().enumerate() {
        let r = isometry_report(a, b, n_mc, seed(i as u64), grid, rule)?;
        checks.push(CheckResult {
            name: name.to_string(),
            passed: r.within(STDERR_BAND),
            measured: r.empirical,
            target: r.theoretical,
            tolerance: STDERR_BAND * r.mc_stderr,
            detail: format!("n_mc = {n_mc}, mc_stderr = {:.3e}", r.mc_stderr),
        });
    }

    let h = (-2f64).exp();
    for (order, t) in [(1usize, vec![0.3]), (2, vec![0.3, 0.6])] {
        let kh = BandwidthedKernel::new(kernel.clone(), h, order)?;
        let slices = kh.slices(&t);
        let refs: Vec<&dyn Integrand> = slices.iter().map(|s| s as &dyn Integrand).collect();
        let r = hypercontractivity_report(&refs, 4.0, n_mc, seed(10 + order as u64), grid, ChaosRule::consistent())?;
        checks.push(CheckResult {
            name: format!("hypercontractivity l={order} q=4"),
            passed: r.holds(STDERR_BAND),
            measured: r.lhs,
            target: r.rhs,
            tolerance: STDERR_BAND * r.lhs_stderr,
            detail: "(E|I|^4)^(1/4) ≤ c(4) (E I^2)^(1/2)".into(),
        });
    }

    for order in [1usize, 2] {
        for k in [2u32, 3] {
            for r in [1.0, 2.0] {
                let h = (-(k as f64)).exp();
                let t: Vec<f64> = (0..order).map(|j| 0.3 + 0.3 * j as f64).collect();
                let rep = moment_bound_report(
                    kernel.clone(),
                    &t,
                    h,
                    r,
                    n_mc,
                    seed(100 + 10 * order as u64 + k as u64 + r as u64 * 1000),
                    grid,
                    ChaosRule::consistent(),
                )?;
                checks.push(CheckResult {
                    name: format!("moment bound l={order} h=e^-{k} r={r}"),
                    passed: rep.within,
                    measured: rep.empirical,
                    target: rep.bound,
                    tolerance: 0.0,
                    detail: format!(
                        "(E xi^(2r))^(1/r) ≤ b h^-l; E xi^2 by quadrature = {:.4}",
                        rep.second_moment_quadrature
                    ),
                });
            }
        }
    }

    Ok(CheckReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
