//! Chaos-kernel estimators, the plug-in regression, prediction and risk.
//!
//! For a sample `(Y_i, W_i)` and bandwidth `h` the order-`ℓ` estimate at a
//! node `t` is `f̂(t) = n⁻¹ Σ_i Y_i I_ℓ(K_h(t, ·))(W_i)`. Multiple integrals
//! of the product kernel are Wick products of the single integrals of its
//! slices, so a fit tabulates `ξ_{a,i} = I₁(slice_a)(W_i)` once per
//! coordinate and combines them node by node.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaoscalc::{
    cell_center, coarse_increments, distinct_permutations, factorial, moment_root, monte_carlo, off_diagonal_sum,
    ravel, wick_product, Discretization, GriddedFunction, Integrand, Projected, BRUTE_MAX_ORDER,
};
use crate::error::{invalid, Error, Result};
use crate::kernelkit::{KernelSlice, MomentKernel};
use crate::mappingzoo::{MappingSpec, PreparedMapping, Representation};
use crate::pathlab::{BrownianPath, TimeGrid};
use crate::quad::GaussRule;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Independent pairs `(Y_i, W_i)` on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    grid: TimeGrid,
    responses: Vec<f64>,
    paths: Vec<BrownianPath>,
}

impl Sample {
    pub fn new(responses: Vec<f64>, paths: Vec<BrownianPath>) -> Result<Self> {
        if responses.len() != paths.len() {
            return Err(invalid(format!(
                "{} responses for {} paths",
                responses.len(),
                paths.len()
            )));
        }
        if responses.len() < 2 {
            return Err(invalid("a sample needs at least two observations"));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(invalid("responses must be finite"));
        }
        let grid = paths[0].grid();
        if paths.iter().any(|w| w.grid() != grid) {
            return Err(Error::Alignment("sample paths must share one time grid".into()));
        }
        Ok(Self { grid, responses, paths })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn paths(&self) -> &[BrownianPath] {
        &self.paths
    }

    /// The same paths with different responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        Self::new(responses, self.paths.clone())
    }
}

pub fn mean_of(ys: &[f64]) -> Result<f64> {
    if ys.is_empty() {
        return Err(invalid("mean of an empty sample"));
    }
    Ok(ys.iter().sum::<f64>() / ys.len() as f64)
}

/// `Ȳ_n`.
pub fn estimate_mean(sample: &Sample) -> f64 {
    mean_of(sample.responses()).expect("samples are non-empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosKernelEstimate {
    order: usize,
    h: f64,
    values: GriddedFunction,
}

impl ChaosKernelEstimate {
    pub fn new(order: usize, h: f64, values: GriddedFunction) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(invalid(format!("bandwidth must lie in (0, 1), got {h}")));
        }
        if values.dim() != order {
            return Err(invalid(format!(
                "order-{order} estimate with a {}-dimensional tensor",
                values.dim()
            )));
        }
        if !values.is_symmetric(1e-10) {
            return Err(Error::Symmetry(format!(
                "order-{order} estimate deviates from symmetry by {:.3e}",
                values.max_asymmetry()
            )));
        }
        Ok(Self { order, h, values })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn grid_size(&self) -> usize {
        self.values.grid_size()
    }

    pub fn values(&self) -> &GriddedFunction {
        &self.values
    }
}

/// Kernel slices for every evaluation coordinate, projected onto one path
/// grid, with their discrete Gram matrix.
#[derive(Debug, Clone)]
pub struct SliceTable {
    h: f64,
    grid_size: usize,
    grid: TimeGrid,
    slices: Vec<Projected>,
    gram: Vec<f64>,
}

impl SliceTable {
    pub fn new(kernel: &Arc<MomentKernel>, h: f64, grid_size: usize, grid: TimeGrid) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(invalid(format!("bandwidth must lie in (0, 1), got {h}")));
        }
        if grid_size < 2 {
            return Err(invalid(format!("evaluation grid needs G ≥ 2, got {grid_size}")));
        }
        let slices: Vec<Projected> = (0..grid_size)
            .map(|a| {
                let s = KernelSlice::new(kernel.clone(), cell_center(a, grid_size), h);
                Projected::new(&s, grid, Discretization::CellAverage)
            })
            .collect();
        let dt = grid.dt();
        let rows: Vec<Vec<f64>> = (0..grid_size)
            .into_par_iter()
            .map(|a| {
                (0..grid_size)
                    .map(|b| slices[a].discrete_inner(&slices[b], dt))
                    .collect()
            })
            .collect();
        Ok(Self {
            h,
            grid_size,
            grid,
            slices,
            gram: rows.concat(),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn gram(&self, a: usize, b: usize) -> f64 {
        self.gram[a * self.grid_size + b]
    }

    /// `ξ_{a,i}`, coordinate-major (`G × n`).
    pub fn single_integrals(&self, sample: &Sample) -> Result<Vec<f64>> {
        if sample.grid() != self.grid {
            return Err(Error::Alignment("sample grid differs from the slice table grid".into()));
        }
        let increments: Vec<Vec<f64>> = sample.paths().par_iter().map(|w| w.increments()).collect();
        let rows: Vec<Vec<f64>> = self
            .slices
            .par_iter()
            .map(|p| increments.iter().map(|dw| p.integrate(dw)).collect())
            .collect();
        Ok(rows.concat())
    }
}

/// One bandwidth's single-integral table over a sample, reusable across
/// orders and response vectors.
#[derive(Debug, Clone)]
pub struct BandwidthFit {
    table: SliceTable,
    xi: Vec<f64>,
    n: usize,
}

impl BandwidthFit {
    pub fn new(sample: &Sample, kernel: &Arc<MomentKernel>, h: f64, grid_size: usize) -> Result<Self> {
        let table = SliceTable::new(kernel, h, grid_size, sample.grid())?;
        let xi = table.single_integrals(sample)?;
        Ok(Self {
            table,
            xi,
            n: sample.n(),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.table.h
    }

    pub fn grid_size(&self) -> usize {
        self.table.grid_size
    }

    fn row(&self, a: usize) -> &[f64] {
        &self.xi[a * self.n..(a + 1) * self.n]
    }

    pub fn estimate(&self, responses: &[f64], order: usize) -> Result<ChaosKernelEstimate> {
        if order == 0 {
            return Err(invalid("chaos order must be at least 1"));
        }
        if responses.len() != self.n {
            return Err(invalid(format!(
                "{} responses for a fit over {} paths",
                responses.len(),
                self.n
            )));
        }
        let g = self.grid_size();
        let n = self.n as f64;
        let ybar = responses.iter().sum::<f64>() / n;
        // First-order weighted moments, reused by the Wick corrections.
        let weighted: Vec<Vec<f64>> = (0..g)
            .into_par_iter()
            .map(|a| self.row(a).iter().zip(responses).map(|(x, y)| x * y).collect())
            .collect();
        let s1: Vec<f64> = weighted.iter().map(|r| r.iter().sum::<f64>() / n).collect();
        let nodes = ordered_nodes(order, g);
        let ordered: Vec<f64> = nodes
            .par_iter()
            .map(|node| match order {
                1 => s1[node[0]],
                2 => {
                    let (a, b) = (node[0], node[1]);
                    dot(&weighted[a], self.row(b)) / n - ybar * self.table.gram(a, b)
                }
                3 => {
                    let (a, b, c) = (node[0], node[1], node[2]);
                    let (xb, xc) = (self.row(b), self.row(c));
                    let m3: f64 = weighted[a].iter().zip(xb).zip(xc).map(|((w, x), z)| w * x * z).sum();
                    m3 / n
                        - self.table.gram(a, b) * s1[c]
                        - self.table.gram(a, c) * s1[b]
                        - self.table.gram(b, c) * s1[a]
                }
                l => {
                    let mut gram = vec![0.0; l * l];
                    for (p, &a) in node.iter().enumerate() {
                        for (q, &b) in node.iter().enumerate() {
                            gram[p * l + q] = self.table.gram(a, b);
                        }
                    }
                    let mut xi = vec![0.0; l];
                    (0..self.n)
                        .map(|i| {
                            for (x, &a) in xi.iter_mut().zip(node) {
                                *x = self.xi[a * self.n + i];
                            }
                            responses[i] * wick_product(&xi, &gram)
                        })
                        .sum::<f64>()
                        / n
                }
            })
            .collect();
        let values = mirror(&nodes, &ordered, order, g)?;
        ChaosKernelEstimate::new(order, self.bandwidth(), values)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodes with `t₁ ≤ … ≤ t_ℓ`.
fn ordered_nodes(order: usize, grid_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; order];
    loop {
        out.push(cur.clone());
        let Some(k) = (0..order).rev().find(|&k| cur[k] + 1 < grid_size) else {
            return out;
        };
        let v = cur[k] + 1;
        for slot in &mut cur[k..] {
            *slot = v;
        }
    }
}

fn mirror(nodes: &[Vec<usize>], values: &[f64], order: usize, grid_size: usize) -> Result<GriddedFunction> {
    let mut f = GriddedFunction::zeros(order, grid_size)?;
    let out = f.values_mut();
    for (node, &v) in nodes.iter().zip(values) {
        for p in distinct_permutations(node) {
            out[ravel(&p, grid_size)] = v;
        }
    }
    Ok(f)
}

/// `f̂_h^(ℓ)` on the `G^ℓ` midpoint grid.
pub fn fit_chaos_kernel(
    sample: &Sample,
    kernel: &Arc<MomentKernel>,
    order: usize,
    h: f64,
    grid_size: usize,
) -> Result<ChaosKernelEstimate> {
    BandwidthFit::new(sample, kernel, h, grid_size)?.estimate(sample.responses(), order)
}

/// The plug-in regression `Ȳ + Σ_ℓ I_ℓ(f̂_ℓ)/ℓ!`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct FittedModel {
    mean_hat: f64,
    estimates: Vec<ChaosKernelEstimate>,
}

impl FittedModel {
    pub fn new(mean_hat: f64, mut estimates: Vec<ChaosKernelEstimate>) -> Result<Self> {
        if !mean_hat.is_finite() {
            return Err(invalid("mean estimate must be finite"));
        }
        estimates.sort_by_key(|e| e.order);
        if estimates.windows(2).any(|w| w[0].order == w[1].order) {
            return Err(invalid("a model carries at most one estimate per order"));
        }
        Ok(Self { mean_hat, estimates })
    }

    pub fn mean_hat(&self) -> f64 {
        self.mean_hat
    }

    pub fn estimates(&self) -> &[ChaosKernelEstimate] {
        &self.estimates
    }

    pub fn orders(&self) -> Vec<usize> {
        self.estimates.iter().map(|e| e.order).collect()
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.h).collect()
    }

    pub fn estimate(&self, order: usize) -> Option<&ChaosKernelEstimate> {
        self.estimates.iter().find(|e| e.order == order)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub mean_hat: f64,
    pub orders: Vec<usize>,
    pub estimates: Vec<EstimateDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateDocument {
    pub ell: usize,
    pub h: f64,
    #[serde(rename = "G")]
    pub grid_size: usize,
    pub values: Vec<f64>,
}

impl TryFrom<ModelDocument> for FittedModel {
    type Error = Error;
    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let listed: Vec<usize> = doc.estimates.iter().map(|e| e.ell).collect();
        if listed != doc.orders {
            return Err(Error::Parse(format!(
                "orders {:?} do not match the estimates {listed:?}",
                doc.orders
            )));
        }
        let estimates = doc
            .estimates
            .into_iter()
            .map(|e| {
                let values = GriddedFunction::new(e.ell, e.grid_size, e.values)?;
                ChaosKernelEstimate::new(e.ell, e.h, values)
            })
            .collect::<Result<Vec<_>>>()?;
        FittedModel::new(doc.mean_hat, estimates)
    }
}

impl From<FittedModel> for ModelDocument {
    fn from(m: FittedModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            mean_hat: m.mean_hat,
            orders: m.orders(),
            estimates: m
                .estimates
                .into_iter()
                .map(|e| EstimateDocument {
                    ell: e.order,
                    h: e.h,
                    grid_size: e.values.grid_size(),
                    values: e.values.into_values(),
                })
                .collect(),
        }
    }
}

/// Fits one estimate per `(order, h)` pair, sharing work between orders that
/// use the same bandwidth.
pub fn fit_model(
    sample: &Sample,
    kernel: &Arc<MomentKernel>,
    bandwidths: &[(usize, f64)],
    grid_size: usize,
) -> Result<FittedModel> {
    let mut by_h: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &(order, h) in bandwidths {
        by_h.entry(h.to_bits()).or_default().push(order);
    }
    let mut estimates = Vec::with_capacity(bandwidths.len());
    for (bits, orders) in by_h {
        let fit = BandwidthFit::new(sample, kernel, f64::from_bits(bits), grid_size)?;
        for order in orders {
            estimates.push(fit.estimate(sample.responses(), order)?);
        }
    }
    FittedModel::new(estimate_mean(sample), estimates)
}

/// `E f̂(t) = ∫ f_ℓ(u) K_h(t, u) du` on the `G^ℓ` midpoint grid.
pub fn smoothed_truth(
    kernel: &Arc<MomentKernel>,
    order: usize,
    h: f64,
    truth: &Representation,
    grid_size: usize,
) -> Result<GriddedFunction> {
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid(format!("bandwidth must lie in (0, 1), got {h}")));
    }
    let slices: Vec<KernelSlice> = (0..grid_size)
        .map(|a| KernelSlice::new(kernel.clone(), cell_center(a, grid_size), h))
        .collect();
    let clipped = |s: &KernelSlice| {
        let (lo, hi) = Integrand::support(s);
        (lo.max(0.0), hi.min(1.0))
    };
    match truth {
        Representation::Constant { value } => {
            let mass: Vec<f64> = slices
                .iter()
                .map(|s| {
                    let (lo, hi) = clipped(s);
                    s.integral(lo, hi)
                })
                .collect();
            separable(order, grid_size, &mass, *value)
        }
        Representation::EqualFactor { profile } => {
            let rule = GaussRule::new(10);
            let v: Vec<f64> = slices
                .iter()
                .map(|s| {
                    let (lo, hi) = clipped(s);
                    rule.integrate_composite(|u| profile.eval(u) * s.eval(u), lo, hi, 16)
                })
                .collect();
            separable(order, grid_size, &v, 1.0)
        }
        Representation::Gridded { tensor } => {
            if tensor.dim() != order {
                return Err(invalid(format!("tensor has dim {} for order {order}", tensor.dim())));
            }
            // Cell masses C[a][c] = ∫_{cell c} slice_a, contracted along each axis.
            let gc = tensor.grid_size();
            let cells: Vec<f64> = slices
                .iter()
                .flat_map(|s| {
                    let (lo, hi) = clipped(s);
                    (0..gc).map(move |c| {
                        let a = (c as f64 / gc as f64).max(lo);
                        let b = ((c + 1) as f64 / gc as f64).min(hi);
                        if b > a {
                            s.integral(a, b)
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            let mut cur = tensor.values().to_vec();
            let mut shape = vec![gc; order];
            for axis in 0..order {
                cur = mode_product(&cur, &shape, axis, &cells, grid_size);
                shape[axis] = grid_size;
            }
            GriddedFunction::new(order, grid_size, cur)
        }
    }
}

fn separable(order: usize, grid_size: usize, factor: &[f64], scale: f64) -> Result<GriddedFunction> {
    let mut f = GriddedFunction::zeros(order, grid_size)?;
    let mut idx = vec![0usize; order];
    for (flat, v) in f.values_mut().iter_mut().enumerate() {
        crate::chaoscalc::unravel(flat, grid_size, &mut idx);
        *v = scale * idx.iter().map(|&i| factor[i]).product::<f64>();
    }
    Ok(f)
}

/// Contracts `axis` of a row-major tensor with the `rows × shape[axis]`
/// matrix `m`.
fn mode_product(t: &[f64], shape: &[usize], axis: usize, m: &[f64], rows: usize) -> Vec<f64> {
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let k = shape[axis];
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            let mrow = &m[r * k..(r + 1) * k];
            let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
            for (c, &w) in mrow.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &t[(o * k + c) * inner..(o * k + c + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

fn check_predictable(model: &FittedModel, grid: TimeGrid) -> Result<()> {
    for e in &model.estimates {
        if e.order > BRUTE_MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                order: e.order,
                max: BRUTE_MAX_ORDER,
            });
        }
        if !grid.n_steps().is_multiple_of(e.grid_size()) {
            return Err(Error::Alignment(format!(
                "grid size {} does not divide the path resolution N = {}",
                e.grid_size(),
                grid.n_steps()
            )));
        }
    }
    Ok(())
}

fn predict_increments(model: &FittedModel, dw: &[f64]) -> f64 {
    model.mean_hat
        + model
            .estimates
            .iter()
            .map(|e| {
                let step = dw.len() / e.grid_size();
                let x: Vec<f64> = dw.chunks(step).map(|c| c.iter().sum()).collect();
                off_diagonal_sum(&e.values, &x) / factorial(e.order)
            })
            .sum::<f64>()
}

/// `m̂(w) = Ȳ + Σ_ℓ I_ℓ(f̂_ℓ)(w)/ℓ!` with multiple integrals as off-diagonal
/// coarse-cell sums.
pub fn predict(model: &FittedModel, w: &BrownianPath) -> Result<f64> {
    check_predictable(model, w.grid())?;
    for e in &model.estimates {
        coarse_increments(w, e.grid_size())?;
    }
    Ok(predict_increments(model, &w.increments()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    Isometry,
    MonteCarlo,
}

/// One term of the isometry decomposition; order 0 is the mean term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTerm {
    pub order: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub p: f64,
    pub value: f64,
    pub method: RiskMethod,
    pub mc_stderr: f64,
    pub breakdown: Vec<RiskTerm>,
}

/// Conditional `R₂ = ((Ȳ − a)² + Σ_ℓ ‖f̂_ℓ − f_ℓ‖²/ℓ!)^{1/2}`.
pub fn risk_isometry(model: &FittedModel, truth: &MappingSpec, p: f64) -> Result<RiskReport> {
    if p != 2.0 {
        return Err(Error::UnsupportedMethod(format!(
            "the isometry decomposition gives R_p only for p = 2, got p = {p}"
        )));
    }
    let mut breakdown = vec![RiskTerm {
        order: 0,
        value: (model.mean_hat - truth.a).powi(2),
    }];
    let mut orders: Vec<usize> = model.orders();
    orders.extend(truth.components.iter().map(|c| c.order));
    orders.sort_unstable();
    orders.dedup();
    for order in orders {
        let norm_sq = match (model.estimate(order), truth.component(order)) {
            (Some(e), Some(rep)) => {
                let f = rep.on_grid(order, e.grid_size())?;
                e.values.l2_distance(&f)?.powi(2)
            }
            (Some(e), None) => e.values.l2_norm_sq(),
            (None, Some(rep)) => rep.l2_norm_sq(order),
            (None, None) => unreachable!(),
        };
        breakdown.push(RiskTerm {
            order,
            value: norm_sq / factorial(order),
        });
    }
    let total: f64 = breakdown.iter().map(|t| t.value).sum();
    Ok(RiskReport {
        p,
        value: total.sqrt(),
        method: RiskMethod::Isometry,
        mc_stderr: 0.0,
        breakdown,
    })
}

/// `((1/n_mc) Σ_j |m̂(W_j) − m(W_j)|^p)^{1/p}` over fresh paths on `grid`.
pub fn risk_monte_carlo(
    model: &FittedModel,
    truth: &MappingSpec,
    p: f64,
    n_mc: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<RiskReport> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(invalid(format!("risk exponent must be ≥ 2, got {p}")));
    }
    if n_mc < 100 {
        return Err(invalid(format!("Monte Carlo risk needs n_mc ≥ 100, got {n_mc}")));
    }
    check_predictable(model, grid)?;
    let truth = PreparedMapping::new(truth, grid)?;
    let diffs = monte_carlo(grid, n_mc, seed, |dw| {
        predict_increments(model, dw) - truth.evaluate_increments(dw)
    });
    let (value, mc_stderr) = moment_root(&diffs, p);
    Ok(RiskReport {
        p,
        value,
        method: RiskMethod::MonteCarlo,
        mc_stderr,
        breakdown: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelkit::build_kernel;
    use crate::mappingzoo::{quadratic_terminal, synthesize, NoiseSpec, Profile};
    use crate::pathlab::{make_grid, sample_brownian};
    use proptest::prelude::*;

    fn kernel(s: f64) -> Arc<MomentKernel> {
        Arc::new(build_kernel(s).unwrap())
    }

    fn small_sample(n: usize, seed: u64) -> Sample {
        let spec = quadratic_terminal().with_noise(NoiseSpec::Gaussian { sigma: 0.5 });
        synthesize(&spec, n, make_grid(64).unwrap(), seed).unwrap()
    }

    #[test]
    fn means() {
        assert_eq!(mean_of(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mean_of(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(mean_of(&[]).is_err());
    }

    #[test]
    fn sample_validation() {
        let g = make_grid(8).unwrap();
        let w = sample_brownian(g, 1);
        assert!(Sample::new(vec![1.0], vec![w.clone()]).is_err());
        assert!(Sample::new(vec![1.0, 2.0], vec![w.clone()]).is_err());
        let other = sample_brownian(make_grid(16).unwrap(), 2);
        assert!(matches!(
            Sample::new(vec![1.0, 2.0], vec![w, other]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn ordered_node_counts() {
        assert_eq!(ordered_nodes(1, 5).len(), 5);
        assert_eq!(ordered_nodes(2, 5).len(), 15);
        assert_eq!(ordered_nodes(3, 4).len(), 20);
        assert!(ordered_nodes(3, 4).iter().all(|n| n.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn zero_responses_give_zero_estimates() {
        let s = small_sample(20, 1);
        let z = s.with_responses(vec![0.0; 20]).unwrap();
        for order in 1..=3 {
            let e = fit_chaos_kernel(&z, &kernel(2.0), order, 0.25, 8).unwrap();
            assert!(e.values().values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn general_order_path_matches_fast_paths() {
        // The Wick table route must agree with the closed-form orders.
        let s = small_sample(15, 2);
        let fit = BandwidthFit::new(&s, &kernel(2.0), 0.3, 5).unwrap();
        for order in 1..=3 {
            let fast = fit.estimate(s.responses(), order).unwrap();
            let nodes = ordered_nodes(order, 5);
            for node in nodes {
                let mut gram = vec![0.0; order * order];
                for (p, &a) in node.iter().enumerate() {
                    for (q, &b) in node.iter().enumerate() {
                        gram[p * order + q] = fit.table.gram(a, b);
                    }
                }
                let slow: f64 = (0..s.n())
                    .map(|i| {
                        let xi: Vec<f64> = node.iter().map(|&a| fit.row(a)[i]).collect();
                        s.responses()[i] * wick_product(&xi, &gram)
                    })
                    .sum::<f64>()
                    / s.n() as f64;
                assert!((fast.values().get(&node) - slow).abs() < 1e-10);
            }
        }
        assert!(fit.estimate(s.responses(), 4).unwrap().values().is_symmetric(1e-10));
    }

    #[test]
    fn estimate_matches_direct_tensor_chaos() {
        let s = small_sample(6, 3);
        let k = kernel(2.0);
        let e = fit_chaos_kernel(&s, &k, 2, 0.25, 4).unwrap();
        let kh = crate::kernelkit::BandwidthedKernel::new(k, 0.25, 2).unwrap();
        let t = [cell_center(1, 4), cell_center(3, 4)];
        let slices = kh.slices(&t);
        let refs: Vec<&dyn Integrand> = slices.iter().map(|x| x as &dyn Integrand).collect();
        let direct: f64 = s
            .responses()
            .iter()
            .zip(s.paths())
            .map(|(y, w)| {
                y * crate::chaoscalc::tensor_chaos(&refs, w, crate::chaoscalc::ChaosRule::consistent()).unwrap()
            })
            .sum::<f64>()
            / 6.0;
        assert!((e.values().get(&[1, 3]) - direct).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_bandwidth() {
        let s = small_sample(5, 1);
        for h in [0.0, 1.0, -0.1, 1.5] {
            assert!(fit_chaos_kernel(&s, &kernel(2.0), 1, h, 8).is_err());
        }
    }

    #[test]
    fn predict_with_trivial_models() {
        let g = make_grid(64).unwrap();
        let w = sample_brownian(g, 9);
        let zero = ChaosKernelEstimate::new(2, 0.2, GriddedFunction::zeros(2, 16).unwrap()).unwrap();
        let m = FittedModel::new(1.5, vec![zero]).unwrap();
        assert_eq!(predict(&m, &w).unwrap(), 1.5);
        let one = ChaosKernelEstimate::new(1, 0.2, GriddedFunction::from_fn(1, 16, |_| 1.0).unwrap()).unwrap();
        let m = FittedModel::new(0.5, vec![one]).unwrap();
        assert!((predict(&m, &w).unwrap() - (0.5 + w.terminal())).abs() < 1e-10);
        let two = ChaosKernelEstimate::new(2, 0.2, GriddedFunction::from_fn(2, 16, |_| 1.0).unwrap()).unwrap();
        let m = FittedModel::new(0.5, vec![two]).unwrap();
        let x = coarse_increments(&w, 16).unwrap();
        let qv: f64 = x.iter().map(|d| d * d).sum();
        assert!((predict(&m, &w).unwrap() - (0.5 + (w.terminal().powi(2) - qv) / 2.0)).abs() < 1e-12);
        let four = ChaosKernelEstimate::new(4, 0.2, GriddedFunction::zeros(4, 4).unwrap()).unwrap();
        let m = FittedModel::new(0.0, vec![four]).unwrap();
        assert!(matches!(predict(&m, &w), Err(Error::UnsupportedOrder { .. })));
        let odd = ChaosKernelEstimate::new(1, 0.2, GriddedFunction::zeros(1, 7).unwrap()).unwrap();
        assert!(matches!(
            predict(&FittedModel::new(0.0, vec![odd]).unwrap(), &w),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn isometry_risk_terms() {
        let truth = quadratic_terminal();
        let exact = ChaosKernelEstimate::new(2, 0.2, GriddedFunction::from_fn(2, 8, |_| 1.0).unwrap()).unwrap();
        let m = FittedModel::new(1.0, vec![exact]).unwrap();
        let r = risk_isometry(&m, &truth, 2.0).unwrap();
        assert_eq!(r.value, 0.0);
        let missing = FittedModel::new(1.0, vec![]).unwrap();
        let r = risk_isometry(&missing, &truth, 2.0).unwrap();
        assert_eq!(r.breakdown[1], RiskTerm { order: 2, value: 0.5 });
        assert!(matches!(
            risk_isometry(&m, &truth, 4.0),
            Err(Error::UnsupportedMethod(_))
        ));
    }

    #[test]
    fn smoothed_truth_examples() {
        let k = kernel(2.0);
        let c = smoothed_truth(&k, 2, 0.2, &Representation::Constant { value: 3.0 }, 16).unwrap();
        assert!(c.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
        // Flat kernel, f(u) = u: one-sided window average t ± h/2.
        let flat = kernel(0.5);
        let h = 0.1;
        let f = Representation::EqualFactor {
            profile: Profile::Polynomial { coeffs: vec![0.0, 1.0] },
        };
        let st = smoothed_truth(&flat, 1, h, &f, 10).unwrap();
        for a in 0..10 {
            let t = cell_center(a, 10);
            let want = if t > 0.5 { t - h / 2.0 } else { t + h / 2.0 };
            assert!((st.values()[a] - want).abs() < 1e-12);
        }
        // Linear truth is reproduced exactly by the first-moment kernel.
        let lin = smoothed_truth(&k, 1, h, &f, 10).unwrap();
        for a in 0..10 {
            assert!((lin.values()[a] - cell_center(a, 10)).abs() < 1e-12);
        }
        // Gridded route against direct quadrature of a separable step function.
        let g = GriddedFunction::from_fn(2, 8, |u| (u[0] + 1.0) * (u[1] + 1.0)).unwrap();
        let gs = smoothed_truth(&k, 2, 0.25, &Representation::Gridded { tensor: g }, 4).unwrap();
        let rule = GaussRule::new(6);
        let one_d: Vec<f64> = (0..4)
            .map(|a| {
                let s = KernelSlice::new(k.clone(), cell_center(a, 4), 0.25);
                (0..8)
                    .map(|c| {
                        let level = cell_center(c, 8) + 1.0;
                        let (lo, hi) = (c as f64 / 8.0, (c + 1) as f64 / 8.0);
                        level * rule.integrate(|u| s.eval(u), lo, hi)
                    })
                    .sum()
            })
            .collect();
        for a in 0..4 {
            for b in 0..4 {
                assert!((gs.get(&[a, b]) - one_d[a] * one_d[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn model_json_roundtrip_and_validation() {
        let s = small_sample(10, 4);
        let m = fit_model(&s, &kernel(2.0), &[(1, 0.3), (2, 0.3)], 6).unwrap();
        let text = m.to_json().unwrap();
        let back = FittedModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["format_version"] = 9.into();
        assert!(FittedModel::from_json(&doc.to_string()).is_err());
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["estimates"][1]["values"][1] = 123.0.into();
        assert!(matches!(FittedModel::from_json(&doc.to_string()), Err(Error::Json(_))));
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["orders"] = serde_json::json!([2, 1]);
        assert!(FittedModel::from_json(&doc.to_string()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn fit_is_linear_in_responses(c in -5.0f64..5.0, seed in 0u64..1000) {
            let s = small_sample(8, seed);
            let scaled = s.with_responses(s.responses().iter().map(|y| c * y).collect()).unwrap();
            let k = kernel(2.0);
            for order in 1..=2 {
                let a = fit_chaos_kernel(&s, &k, order, 0.3, 6).unwrap();
                let b = fit_chaos_kernel(&scaled, &k, order, 0.3, 6).unwrap();
                for (x, y) in a.values().values().iter().zip(b.values().values()) {
                    prop_assert!((c * x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
        }

        #[test]
        fn fit_is_symmetric(seed in 0u64..1000, h in 0.05f64..0.6) {
            let s = small_sample(6, seed);
            let e = fit_chaos_kernel(&s, &kernel(3.0), 3, h, 5).unwrap();
            prop_assert!(e.values().is_symmetric(1e-10));
        }
    }
}
