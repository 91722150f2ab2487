//! On-disk datasets, models and risk tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use wienerchaos::chaosreg::{RiskMethod, Sample};
use wienerchaos::pathlab::{BrownianPath, TimeGrid};
use wienerchaos::{Error, Result};

use crate::experiment::{RiskRow, SummaryRow};

pub fn replication_dir(root: &Path, kind: &str, n: usize, replication: usize) -> PathBuf {
    root.join(kind).join(format!("n{n}")).join(format!("rep{replication}"))
}

/// One row per path: `path,w0,…,wN`.
pub fn write_paths_csv<W: Write>(paths: &[BrownianPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let steps = paths.first().map_or(0, |p| p.grid().n_steps());
    let mut header = vec!["path".to_string()];
    header.extend((0..=steps).map(|j| format!("w{j}")));
    w.write_record(&header)?;
    for (i, p) in paths.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.values().iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_paths_csv(text: &str) -> Result<Vec<BrownianPath>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "path" {
        return Err(Error::Parse("paths header must be path,w0,…,wN with N ≥ 1".into()));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("w{j}") {
            return Err(Error::Parse(format!("paths header column {} should be w{j}", j + 1)));
        }
    }
    let grid = TimeGrid::new(header.len() - 2)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec[0].parse::<usize>().ok() != Some(i) {
            return Err(Error::Parse(format!("row {}: path index must be {i}", i + 1)));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {v:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(BrownianPath::from_values(grid, values)?);
    }
    if out.is_empty() {
        return Err(Error::Parse("paths file has no rows".into()));
    }
    Ok(out)
}

pub fn write_responses_csv<W: Write>(ys: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "y"])?;
    for (i, y) in ys.iter().enumerate() {
        w.write_record([i.to_string(), format!("{y:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_responses_csv(text: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    if rdr.headers()?.iter().ne(["path", "y"]) {
        return Err(Error::Parse("responses header must be path,y".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 || rec[0].parse::<usize>().ok() != Some(i) {
            return Err(Error::Parse(format!(
                "row {}: expected path index {i} and one value",
                i + 1
            )));
        }
        let y: f64 = rec[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad response {:?}", i + 1, &rec[1])))?;
        if !y.is_finite() {
            return Err(Error::Parse(format!("row {}: response must be finite", i + 1)));
        }
        out.push(y);
    }
    Ok(out)
}

pub fn write_dataset(dir: &Path, sample: &Sample) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = dir.join("paths.csv");
    let responses = dir.join("responses.csv");
    write_paths_csv(sample.paths(), fs::File::create(&paths)?)?;
    write_responses_csv(sample.responses(), fs::File::create(&responses)?)?;
    Ok(vec![paths, responses])
}

pub fn read_dataset(dir: &Path) -> Result<Sample> {
    let paths = parse_paths_csv(&fs::read_to_string(dir.join("paths.csv"))?)?;
    let ys = parse_responses_csv(&fs::read_to_string(dir.join("responses.csv"))?)?;
    Sample::new(ys, paths)
}

pub const RISK_HEADER: [&str; 7] = ["n", "replication", "seed", "method", "p", "risk", "mc_stderr"];
pub const SUMMARY_HEADER: [&str; 4] = ["n", "mean_risk", "std_risk", "replications"];

fn method_name(m: RiskMethod) -> &'static str {
    match m {
        RiskMethod::Isometry => "isometry",
        RiskMethod::MonteCarlo => "monte_carlo",
    }
}

pub fn write_risk_csv<W: Write>(rows: &[RiskRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RISK_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            method_name(r.method).to_string(),
            format!("{}", r.p),
            format!("{:e}", r.risk),
            format!("{:e}", r.mc_stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn num<T: std::str::FromStr>(s: &str, what: &str, row: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: bad {what} {s:?}")))
}

pub fn parse_risk_csv(text: &str) -> Result<Vec<RiskRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    if rdr.headers()?.iter().ne(RISK_HEADER) {
        return Err(Error::Parse(format!("risk header must be {}", RISK_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let method = match &rec[3] {
            "isometry" => RiskMethod::Isometry,
            "monte_carlo" => RiskMethod::MonteCarlo,
            other => return Err(Error::Parse(format!("row {row}: unknown method {other:?}"))),
        };
        let r = RiskRow {
            n: num(&rec[0], "n", row)?,
            replication: num(&rec[1], "replication", row)?,
            seed: num(&rec[2], "seed", row)?,
            method,
            p: num(&rec[4], "p", row)?,
            risk: num(&rec[5], "risk", row)?,
            mc_stderr: num(&rec[6], "mc_stderr", row)?,
        };
        if !(r.risk >= 0.0 && r.risk.is_finite()) || !r.p.is_finite() || r.mc_stderr.is_nan() {
            return Err(Error::Parse(format!(
                "row {row}: risk values must be finite and non-negative"
            )));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:e}", r.mean_risk),
            format!("{:e}", r.std_risk),
            r.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    if rdr.headers()?.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Parse(format!(
            "summary header must be {}",
            SUMMARY_HEADER.join(",")
        )));
    }
    let mut out: Vec<SummaryRow> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let r = SummaryRow {
            n: num(&rec[0], "n", row)?,
            mean_risk: num(&rec[1], "mean_risk", row)?,
            std_risk: num(&rec[2], "std_risk", row)?,
            replications: num(&rec[3], "replications", row)?,
        };
        if r.n == 0 || !(r.mean_risk > 0.0 && r.mean_risk.is_finite()) || !r.std_risk.is_finite() {
            return Err(Error::Parse(format!(
                "row {row}: need n ≥ 1 and a finite positive mean risk"
            )));
        }
        if out.last().is_some_and(|p| p.n >= r.n) {
            return Err(Error::Parse(format!("row {row}: n must be strictly increasing")));
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Parse("summary has no rows".into()));
    }
    Ok(out)
}
