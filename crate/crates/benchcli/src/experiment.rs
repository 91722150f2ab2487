//! In-memory experiment pipeline shared by the commands and the acceptance
//! suite: synthesize, fit, score.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wienerchaos::chaosreg::{fit_model, risk_isometry, risk_monte_carlo, FittedModel, RiskMethod, Sample};
use wienerchaos::glselect::{adaptive_fit, SelectionTrace};
use wienerchaos::kernelkit::MomentKernel;
use wienerchaos::mappingzoo::{synthesize, MappingSpec};
use wienerchaos::pathlab::TimeGrid;
use wienerchaos::seed::tagged_seed;

use crate::config::{BandwidthMode, ExperimentConfig};
use crate::CliError;

const TAG_EVAL: u64 = 0x6576_616c;

/// One `(n, r)` cell of a campaign with its derived seed
/// `tagged_seed(master, n, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replication {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
}

pub fn replication_seed(master: u64, n: usize, replication: usize) -> u64 {
    tagged_seed(master, n as u64, replication as u64)
}

/// Seed for fresh evaluation paths of one replication.
pub fn evaluation_seed(rep_seed: u64) -> u64 {
    tagged_seed(rep_seed, TAG_EVAL, 0)
}

pub fn replications(cfg: &ExperimentConfig) -> Vec<Replication> {
    cfg.n_list
        .iter()
        .flat_map(|&n| {
            (0..cfg.replications).map(move |r| Replication {
                n,
                replication: r,
                seed: replication_seed(cfg.seed, n, r),
            })
        })
        .collect()
}

/// `h̃ = (1/(Λ² n))^{1/(2s+ℓ)}`.
pub fn theoretical_bandwidth(n: usize, order: usize, s: f64, lambda: f64) -> f64 {
    (1.0 / (lambda * lambda * n as f64)).powf(1.0 / (2.0 * s + order as f64))
}

/// `L_n = ⌊√ln n⌋`.
pub fn truncation_order(n: usize) -> usize {
    ((n as f64).ln().sqrt() + 1e-12).floor() as usize
}

/// Orders and bandwidths of the infinite-chaos rule.
pub fn infinite_chaos_bandwidths(
    n: usize,
    s: f64,
    lambda: f64,
    p: f64,
    kernel_l2: f64,
    practical: bool,
) -> Result<Vec<(usize, f64)>, CliError> {
    let l_n = truncation_order(n);
    if l_n == 0 {
        return Err(CliError::Validation(format!("n = {n} gives truncation order 0")));
    }
    let c2 = (6.0 * (p - 1.0)).sqrt() * kernel_l2;
    let factor = if practical { 1.0 } else { c2.powi(2 * l_n as i32) };
    (1..=l_n)
        .map(|l| {
            let h = (factor / (lambda * lambda * n as f64)).powf(1.0 / (2.0 * s + l as f64));
            if h >= 1.0 {
                Err(CliError::Runtime(format!(
                    "infinite-chaos bandwidth for n = {n}, order {l} is {h:.4} ≥ 1; \
                     the C₂^(2L_n) factor dominates at this sample size (use practical = true)"
                )))
            } else {
                Ok((l, h))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub traces: Vec<SelectionTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub method: RiskMethod,
    pub p: f64,
    pub risk: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub mean_risk: f64,
    pub std_risk: f64,
    pub replications: usize,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub truth: MappingSpec,
    pub kernel: Arc<MomentKernel>,
    pub grid: TimeGrid,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let truth = cfg.truth()?;
        let kernel = Arc::new(MomentKernel::build(cfg.s_star_hi)?);
        let grid = TimeGrid::new(cfg.path_steps)?;
        Ok(Self {
            cfg,
            truth,
            kernel,
            grid,
        })
    }

    pub fn sample(&self, rep: &Replication) -> Result<Sample, CliError> {
        Ok(synthesize(&self.truth, rep.n, self.grid, rep.seed)?)
    }

    /// Non-adaptive `(order, h)` pairs for sample size `n`.
    pub fn bandwidths(&self, n: usize) -> Result<Vec<(usize, f64)>, CliError> {
        match &self.cfg.bandwidth {
            BandwidthMode::Fixed { values } => Ok(values.iter().map(|v| (v.order, v.h)).collect()),
            BandwidthMode::Theoretical { orders } => Ok(orders
                .iter()
                .map(|o| (o.order, theoretical_bandwidth(n, o.order, o.s, o.lambda)))
                .collect()),
            BandwidthMode::InfiniteChaos { s, lambda, practical } => {
                infinite_chaos_bandwidths(n, *s, *lambda, self.cfg.p, self.kernel.l2_norm(), *practical)
            }
            BandwidthMode::Adaptive => Err(CliError::Validation(
                "bandwidth: adaptive mode has no fixed bandwidths (use `adapt`)".into(),
            )),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self.cfg.bandwidth, BandwidthMode::Adaptive)
    }

    pub fn fit(&self, sample: &Sample) -> Result<FitOutcome, CliError> {
        if self.is_adaptive() {
            let params = self.cfg.majorant_params(self.kernel.l2_norm())?;
            let a = adaptive_fit(
                sample,
                &self.kernel,
                self.cfg.max_order,
                &params,
                self.cfg.s_star_lo,
                self.cfg.grid_size,
            )?;
            Ok(FitOutcome {
                model: a.model,
                traces: a.traces,
            })
        } else {
            let bw = self.bandwidths(sample.n())?;
            Ok(FitOutcome {
                model: fit_model(sample, &self.kernel, &bw, self.cfg.grid_size)?,
                traces: Vec::new(),
            })
        }
    }

    /// Conditional risks of one fitted model: isometry for `p = 2` (plus
    /// Monte Carlo if requested), Monte Carlo otherwise.
    pub fn risk(&self, model: &FittedModel, rep: &Replication) -> Result<Vec<RiskRow>, CliError> {
        let p = self.cfg.p;
        let row = |r: wienerchaos::chaosreg::RiskReport| RiskRow {
            n: rep.n,
            replication: rep.replication,
            seed: rep.seed,
            method: r.method,
            p,
            risk: r.value,
            mc_stderr: r.mc_stderr,
        };
        let mut rows = Vec::new();
        if p == 2.0 {
            rows.push(row(risk_isometry(model, &self.truth, p)?));
        }
        if p != 2.0 || self.cfg.risk.monte_carlo {
            if matches!(self.cfg.bandwidth, BandwidthMode::InfiniteChaos { .. }) {
                return Err(CliError::Validation(
                    "risk: infinite_chaos mode supports isometry risk (p = 2) only".into(),
                ));
            }
            let mc = risk_monte_carlo(
                model,
                &self.truth,
                p,
                self.cfg.risk.n_mc,
                evaluation_seed(rep.seed),
                self.grid,
            )?;
            rows.push(row(mc));
        }
        Ok(rows)
    }

    pub fn run(&self, rep: &Replication) -> Result<(FitOutcome, Vec<RiskRow>), CliError> {
        let sample = self.sample(rep)?;
        let fit = self.fit(&sample)?;
        let risk = self.risk(&fit.model, rep)?;
        Ok((fit, risk))
    }

    /// Every replication in campaign order.
    pub fn campaign(&self) -> Result<Vec<RiskRow>, CliError> {
        let mut rows = Vec::new();
        for rep in replications(&self.cfg) {
            rows.extend(self.run(&rep)?.1);
        }
        Ok(rows)
    }

    pub fn primary_method(&self) -> RiskMethod {
        if self.cfg.p == 2.0 {
            RiskMethod::Isometry
        } else {
            RiskMethod::MonteCarlo
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Per-`n` aggregates of one method, folded in row order.
pub fn summarize(rows: &[RiskRow], method: RiskMethod) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut ns: Vec<usize> = rows.iter().filter(|r| r.method == method).map(|r| r.n).collect();
    ns.dedup();
    for n in ns {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .map(|r| r.risk)
            .collect();
        let (mean_risk, std_risk) = mean_std(&vals);
        out.push(SummaryRow {
            n,
            mean_risk,
            std_risk,
            replications: vals.len(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Least-squares fit of `ln y = a + b ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit, CliError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(CliError::Validation("slope fit needs at least three points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(CliError::Runtime("log-log slope needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        stderr: (ssr / (k - 2.0) / sxx).sqrt(),
        intercept,
    })
}

/// `−min_ℓ s_ℓ/(2s_ℓ + ℓ)`: the slowest order dominates the rate.
pub fn theoretical_exponent(cfg: &ExperimentConfig) -> Option<f64> {
    let list = match (&cfg.rate, &cfg.bandwidth) {
        (Some(r), _) => r.smoothness.clone(),
        (None, BandwidthMode::Theoretical { orders }) => orders.clone(),
        _ => return None,
    };
    list.iter()
        .map(|o| o.s / (2.0 * o.s + o.order as f64))
        .min_by(f64::total_cmp)
        .map(|e| -e)
}
