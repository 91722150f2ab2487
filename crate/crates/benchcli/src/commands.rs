//! Subcommand implementations. Every command writes into one output
//! directory and records a manifest of what it produced.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wienerchaos::chaosreg::FittedModel;
use wienerchaos::glselect::write_traces_csv;

use crate::checks::{run_checks, CheckReport};
use crate::config::{BandwidthMode, ExperimentConfig};
use crate::dataset::{read_dataset, replication_dir, write_dataset, write_risk_csv, write_summary_csv};
use crate::experiment::{log_log_slope, replications, summarize, theoretical_exponent, Pipeline, Replication, RiskRow};
use crate::manifest::{digests, RunManifest};
use crate::plot::chart_for_csv;
use crate::CliError;

fn finish(
    command: &str,
    cfg: &ExperimentConfig,
    out: &Path,
    seeds: Vec<Replication>,
    files: &[PathBuf],
    started: Instant,
) -> Result<RunManifest, CliError> {
    let manifest = RunManifest {
        command: command.to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: digests(out, files)?,
    };
    manifest.write(out)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes one dataset per replication under `data/`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let pipeline = Pipeline::new(cfg.clone())?;
    let reps = replications(cfg);
    let files: Vec<Vec<PathBuf>> = reps
        .par_iter()
        .map(|rep| {
            let sample = pipeline.sample(rep)?;
            Ok(write_dataset(
                &replication_dir(out, "data", rep.n, rep.replication),
                &sample,
            )?)
        })
        .collect::<Result<_, CliError>>()?;
    finish("simulate", cfg, out, reps, &files.concat(), started)
}

fn load_dataset(out: &Path, rep: &Replication) -> Result<wienerchaos::chaosreg::Sample, CliError> {
    let dir = replication_dir(out, "data", rep.n, rep.replication);
    if !dir.join("paths.csv").exists() {
        return Err(CliError::Runtime(format!(
            "dataset {} is missing; run `simulate` first",
            dir.display()
        )));
    }
    Ok(read_dataset(&dir)?)
}

fn fit_all(cfg: &ExperimentConfig, out: &Path, command: &str) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let pipeline = Pipeline::new(cfg.clone())?;
    let reps = replications(cfg);
    let files: Vec<Vec<PathBuf>> = reps
        .par_iter()
        .map(|rep| {
            let sample = load_dataset(out, rep)?;
            let fit = pipeline.fit(&sample)?;
            let dir = replication_dir(out, "models", rep.n, rep.replication);
            fs::create_dir_all(&dir)?;
            let model = dir.join("model.json");
            fs::write(&model, fit.model.to_json()?)?;
            let mut written = vec![model];
            if !fit.traces.is_empty() {
                let trace = dir.join("trace.csv");
                write_traces_csv(&fit.traces, fs::File::create(&trace)?)?;
                written.push(trace);
            }
            Ok(written)
        })
        .collect::<Result<_, CliError>>()?;
    finish(command, cfg, out, reps, &files.concat(), started)
}

/// Fixed, theoretical or infinite-chaos bandwidths.
pub fn cmd_fit(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    if matches!(cfg.bandwidth, BandwidthMode::Adaptive) {
        return Err(CliError::Validation(
            "bandwidth.mode: adaptive configs are fitted with `adapt`".into(),
        ));
    }
    fit_all(cfg, out, "fit")
}

/// Data-driven bandwidths; writes a selection trace per replication.
pub fn cmd_adapt(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let mut cfg = cfg.clone();
    cfg.bandwidth = BandwidthMode::Adaptive;
    cfg.validate()?;
    fit_all(&cfg, out, "adapt")
}

fn write_tables(
    cfg: &ExperimentConfig,
    pipeline: &Pipeline,
    out: &Path,
    rows: &[RiskRow],
) -> Result<Vec<PathBuf>, CliError> {
    let _ = cfg;
    let risk = out.join("risk.csv");
    write_risk_csv(rows, fs::File::create(&risk)?)?;
    let summary = out.join("risk_summary.csv");
    write_summary_csv(&summarize(rows, pipeline.primary_method()), fs::File::create(&summary)?)?;
    Ok(vec![risk, summary])
}

/// Conditional risks of every stored model.
pub fn cmd_risk(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let pipeline = Pipeline::new(cfg.clone())?;
    let reps = replications(cfg);
    let rows: Vec<Vec<RiskRow>> = reps
        .par_iter()
        .map(|rep| {
            let path = replication_dir(out, "models", rep.n, rep.replication).join("model.json");
            let text = fs::read_to_string(&path).map_err(|e| {
                CliError::Runtime(format!(
                    "cannot read {}: {e}; run `fit` or `adapt` first",
                    path.display()
                ))
            })?;
            let model = FittedModel::from_json(&text)?;
            pipeline.risk(&model, rep)
        })
        .collect::<Result<_, CliError>>()?;
    let files = write_tables(cfg, &pipeline, out, &rows.concat())?;
    finish("risk", cfg, out, reps, &files, started)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub n: Vec<usize>,
    pub mean_risk: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub theoretical_slope: Option<f64>,
}

/// Whole campaign in memory, then a log-log slope of mean risk against `n`.
pub fn cmd_rate(cfg: &ExperimentConfig, out: &Path) -> Result<RateReport, CliError> {
    let started = Instant::now();
    if cfg.n_list.len() < 4 {
        return Err(CliError::Validation(
            "n_list: rate needs at least four sample sizes".into(),
        ));
    }
    if (cfg.n_list[cfg.n_list.len() - 1] as f64) < 10.0 * cfg.n_list[0] as f64 {
        return Err(CliError::Validation(
            "n_list: rate needs sample sizes spanning a decade".into(),
        ));
    }
    let pipeline = Pipeline::new(cfg.clone())?;
    let reps = replications(cfg);
    let rows: Vec<Vec<RiskRow>> = reps
        .par_iter()
        .map(|rep| Ok(pipeline.run(rep)?.1))
        .collect::<Result<_, CliError>>()?;
    let rows = rows.concat();
    let mut files = write_tables(cfg, &pipeline, out, &rows)?;
    let summary = summarize(&rows, pipeline.primary_method());
    let xs: Vec<f64> = summary.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = summary.iter().map(|r| r.mean_risk).collect();
    let fit = log_log_slope(&xs, &ys)?;
    let report = RateReport {
        n: summary.iter().map(|r| r.n).collect(),
        mean_risk: ys,
        slope: fit.slope,
        slope_stderr: fit.stderr,
        theoretical_slope: theoretical_exponent(cfg),
    };
    let path = out.join("rate.json");
    write_json(&path, &report)?;
    files.push(path);
    finish("rate", cfg, out, reps, &files, started)?;
    Ok(report)
}

/// Writes `check.json`; any failed check becomes a [`CliError::CheckFailed`].
pub fn cmd_check(cfg: &ExperimentConfig, out: &Path) -> Result<CheckReport, CliError> {
    let started = Instant::now();
    let report = run_checks(cfg)?;
    let path = out.join("check.json");
    write_json(&path, &report)?;
    finish("check", cfg, out, Vec::new(), &[path], started)?;
    if !report.passed {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::CheckFailed(failed.join("; ")));
    }
    Ok(report)
}

/// Renders a risk or trace CSV to `<out>/<stem>.svg`.
pub fn cmd_plot(input: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::Validation(format!("plot: cannot read {}: {e}", input.display())))?;
    let svg = chart_for_csv(&text)?;
    let stem = input
        .file_stem()
        .map_or("plot".into(), |s| s.to_string_lossy().into_owned());
    let path = out.join(format!("{stem}.svg"));
    fs::write(&path, svg)?;
    Ok(path)
}
