//! Data-driven bandwidth choice by pairwise comparison of estimates over a
//! geometric grid (Goldenshluger–Lepski).

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chaoscalc::moment_bound_constant;
use crate::chaosreg::{estimate_mean, BandwidthFit, ChaosKernelEstimate, FittedModel, Sample};
use crate::error::{invalid, Error, Result};
use crate::kernelkit::MomentKernel;

const BRACKET_EPS: f64 = 1e-12;

/// `{e^{-k}} ∩ [n^{-1/(2s_*+ℓ)}, 1/ln n]`, decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    pub order: usize,
    pub n: usize,
    pub s_star_lo: f64,
    pub exponents: Vec<u32>,
    pub values: Vec<f64>,
}

impl BandwidthGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn smallest(&self) -> f64 {
        *self.values.last().expect("grids are non-empty")
    }

    pub fn contains(&self, h: f64) -> bool {
        self.values.contains(&h)
    }
}

pub fn bandwidth_bracket(n: usize, order: usize, s_star_lo: f64) -> (f64, f64) {
    let nf = n as f64;
    (nf.powf(-1.0 / (2.0 * s_star_lo + order as f64)), 1.0 / nf.ln())
}

pub fn bandwidth_grid(n: usize, order: usize, s_star_lo: f64) -> Result<BandwidthGrid> {
    if n < 3 {
        return Err(invalid(format!("bandwidth grid needs n ≥ 3, got {n}")));
    }
    if order == 0 {
        return Err(invalid("chaos order must be at least 1"));
    }
    if !(s_star_lo > 0.0) || !s_star_lo.is_finite() {
        return Err(invalid(format!("s_* must be positive, got {s_star_lo}")));
    }
    let (lower, upper) = bandwidth_bracket(n, order, s_star_lo);
    let ln_n = (n as f64).ln();
    // e^{-k} ≤ 1/ln n ⟺ k ≥ ln ln n; e^{-k} ≥ n^{-1/(2s+ℓ)} ⟺ k ≤ ln n/(2s+ℓ).
    let k_min = (ln_n.ln() - BRACKET_EPS).ceil().max(1.0) as u32;
    let k_max = (ln_n / (2.0 * s_star_lo + order as f64) + BRACKET_EPS).floor();
    let exponents: Vec<u32> = if k_max >= k_min as f64 {
        (k_min..=k_max as u32).collect()
    } else {
        Vec::new()
    };
    if exponents.is_empty() {
        return Err(Error::EmptyGrid {
            n,
            order,
            s_star_lo,
            lower,
            upper,
        });
    }
    let values = exponents.iter().map(|&k| (-(k as f64)).exp()).collect();
    Ok(BandwidthGrid {
        order,
        n,
        s_star_lo,
        exponents,
        values,
    })
}

/// Oracle constants entering the majorant: noise moment `μ₄`, class bound
/// `M`, top order `L` and `‖k‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorantParams {
    pub mu4: f64,
    pub m: f64,
    pub max_order: usize,
    pub kernel_l2: f64,
}

impl MajorantParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.mu4) || !ok(self.m) || !ok(self.kernel_l2) || self.max_order == 0 {
            return Err(invalid(format!(
                "majorant parameters must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `ν(ℓ) = (μ₄ + Σ_{k=1..L} c_k(4) M) √b_{ℓ,2} / 2`.
pub fn nu(order: usize, params: &MajorantParams) -> Result<f64> {
    params.validate()?;
    let growth: f64 = (1..=params.max_order).map(|k| 3f64.powf(k as f64 / 2.0)).sum();
    let b = moment_bound_constant(order, 2.0, params.kernel_l2)?;
    Ok((params.mu4 + growth * params.m) * b.sqrt() / 2.0)
}

/// `ν (1 + 4 √ln(h^{-ℓ})) / √(n h^ℓ)` for a given `ν`.
pub fn majorant_with_nu(nu: f64, order: usize, h: f64, n: usize) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid(format!("majorant needs h in (0, 1), got {h}")));
    }
    let hl = h.powi(order as i32);
    Ok(nu * (1.0 + 4.0 * (1.0 / hl).ln().sqrt()) / (n as f64 * hl).sqrt())
}

pub fn majorant(order: usize, h: f64, n: usize, params: &MajorantParams) -> Result<f64> {
    majorant_with_nu(nu(order, params)?, order, h, n)
}

/// `B(ℓ, h_i) = max_j {‖f̂_j − f̂_{max(h_i,h_j)}‖ − M_j − M_{max(h_i,h_j)}}₊`
/// with `fits` and `majorants` indexed like `grid.values`.
pub fn bias_proxy(grid: &BandwidthGrid, index: usize, fits: &[ChaosKernelEstimate], majorants: &[f64]) -> Result<f64> {
    if fits.len() != grid.len() || majorants.len() != grid.len() {
        return Err(Error::IncompleteInput(format!(
            "{} fits and {} majorants for a grid of {} bandwidths",
            fits.len(),
            majorants.len(),
            grid.len()
        )));
    }
    for (f, &h) in fits.iter().zip(&grid.values) {
        if f.bandwidth() != h || f.order() != grid.order {
            return Err(Error::IncompleteInput(format!(
                "missing order-{} fit at h = {h}",
                grid.order
            )));
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..grid.len() {
        // Decreasing grid: the larger bandwidth has the smaller index.
        let joint = index.min(j);
        if joint == j {
            continue;
        }
        let d = fits[j].values().l2_distance(fits[joint].values())?;
        worst = worst.max(d - majorants[j] - majorants[joint]);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub h: f64,
    pub majorant: f64,
    pub bias_proxy: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub order: usize,
    pub records: Vec<TraceRecord>,
    pub chosen: usize,
}

impl SelectionTrace {
    pub fn chosen_h(&self) -> f64 {
        self.records[self.chosen].h
    }

    /// Index of the minimal objective, earliest (largest `h`) on ties.
    pub fn argmin(records: &[TraceRecord]) -> usize {
        let mut best = 0;
        for (i, r) in records.iter().enumerate().skip(1) {
            if r.objective < records[best].objective {
                best = i;
            }
        }
        best
    }
}

pub const TRACE_HEADER: [&str; 6] = ["ell", "h", "majorant", "bias_proxy", "objective", "chosen"];

pub fn write_traces_csv<W: Write>(traces: &[SelectionTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for t in traces {
        for (i, r) in t.records.iter().enumerate() {
            w.write_record([
                t.order.to_string(),
                format!("{:.17e}", r.h),
                format!("{:.17e}", r.majorant),
                format!("{:.17e}", r.bias_proxy),
                format!("{:.17e}", r.objective),
                u8::from(i == t.chosen).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn parse_traces_csv(text: &str) -> Result<Vec<SelectionTrace>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Parse(format!("trace header must be {}", TRACE_HEADER.join(","))));
    }
    let mut by_order: BTreeMap<usize, (Vec<TraceRecord>, Vec<usize>)> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: column {} is not a number", line + 1, TRACE_HEADER[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!(
                    "row {}: non-finite {}",
                    line + 1,
                    TRACE_HEADER[i]
                )))
            }
        };
        let order: usize = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad order", line + 1)))?;
        let chosen = match &rec[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse(format!(
                    "row {}: chosen must be 0 or 1, got {other}",
                    line + 1
                )))
            }
        };
        let entry = by_order.entry(order).or_default();
        if chosen {
            entry.1.push(entry.0.len());
        }
        entry.0.push(TraceRecord {
            h: field(1)?,
            majorant: field(2)?,
            bias_proxy: field(3)?,
            objective: field(4)?,
        });
    }
    if by_order.is_empty() {
        return Err(Error::Parse("trace CSV has no rows".into()));
    }
    by_order
        .into_iter()
        .map(|(order, (records, chosen))| match chosen.as_slice() {
            [c] => Ok(SelectionTrace {
                order,
                records,
                chosen: *c,
            }),
            _ => Err(Error::Parse(format!("order {order} must have exactly one chosen row"))),
        })
        .collect()
}

fn select_from_fits(
    grid: &BandwidthGrid,
    fits: Vec<ChaosKernelEstimate>,
    n: usize,
    params: &MajorantParams,
) -> Result<(SelectionTrace, ChaosKernelEstimate)> {
    let nu = nu(grid.order, params)?;
    let majorants = grid
        .values
        .iter()
        .map(|&h| majorant_with_nu(nu, grid.order, h, n))
        .collect::<Result<Vec<_>>>()?;
    let records = (0..grid.len())
        .map(|i| {
            let b = bias_proxy(grid, i, &fits, &majorants)?;
            Ok(TraceRecord {
                h: grid.values[i],
                majorant: majorants[i],
                bias_proxy: b,
                objective: b + majorants[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = SelectionTrace::argmin(&records);
    let estimate = fits.into_iter().nth(chosen).expect("chosen index is in range");
    Ok((
        SelectionTrace {
            order: grid.order,
            records,
            chosen,
        },
        estimate,
    ))
}

/// Fits every grid bandwidth once and returns the trace of `B + M`.
pub fn select_bandwidth(
    sample: &Sample,
    kernel: &Arc<MomentKernel>,
    grid: &BandwidthGrid,
    params: &MajorantParams,
    grid_size: usize,
) -> Result<SelectionTrace> {
    if grid.is_empty() {
        return Err(invalid("selection needs a non-empty bandwidth grid"));
    }
    let fits = grid
        .values
        .iter()
        .map(|&h| BandwidthFit::new(sample, kernel, h, grid_size)?.estimate(sample.responses(), grid.order))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_from_fits(grid, fits, sample.n(), params)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFit {
    pub model: FittedModel,
    pub traces: Vec<SelectionTrace>,
    pub grids: Vec<BandwidthGrid>,
}

/// Per-order selection for `ℓ = 1..=L`, then plug-in assembly.
pub fn adaptive_fit(
    sample: &Sample,
    kernel: &Arc<MomentKernel>,
    max_order: usize,
    params: &MajorantParams,
    s_star_lo: f64,
    grid_size: usize,
) -> Result<AdaptiveFit> {
    if max_order == 0 {
        return Err(invalid("adaptive fit needs L ≥ 1"));
    }
    let grids = (1..=max_order)
        .map(|l| bandwidth_grid(sample.n(), l, s_star_lo))
        .collect::<Result<Vec<_>>>()?;
    let mut cache: BTreeMap<u32, BandwidthFit> = BTreeMap::new();
    let mut traces = Vec::with_capacity(max_order);
    let mut estimates = Vec::with_capacity(max_order);
    for grid in &grids {
        let mut fits = Vec::with_capacity(grid.len());
        for (&k, &h) in grid.exponents.iter().zip(&grid.values) {
            let fit = match cache.get(&k) {
                Some(f) => f,
                None => {
                    let f = BandwidthFit::new(sample, kernel, h, grid_size)?;
                    cache.entry(k).or_insert(f)
                }
            };
            fits.push(fit.estimate(sample.responses(), grid.order)?);
        }
        let (trace, estimate) = select_from_fits(grid, fits, sample.n(), params)?;
        traces.push(trace);
        estimates.push(estimate);
    }
    Ok(AdaptiveFit {
        model: FittedModel::new(estimate_mean(sample), estimates)?,
        traces,
        grids,
    })
}
