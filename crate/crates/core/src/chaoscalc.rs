//! Single and multiple Wiener–Itô integrals on discretized Brownian paths.
//!
//! Two independent evaluators are provided:
//!
//! - [`tensor_chaos`] evaluates `I_ℓ(g₁ ⊗ … ⊗ g_ℓ)` from single integrals and
//!   inner products through the product-formula recursion
//!   `I_{p+1} = I_p · I₁(g_{p+1}) − Σ_j ⟨g_j, g_{p+1}⟩ I_{p−1}(⊗_{i≠j} g_i)`.
//! - [`brute_multiple_integral`] sums a gridded kernel over off-diagonal
//!   coarse cells.
//!
//! Monte Carlo validators for the Itô isometry, hypercontractivity and the
//! kernel moment bound live at the bottom of the module.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernelkit::{BandwidthedKernel, MomentKernel};
use crate::pathlab::{sample_increments, BrownianPath, TimeGrid};
use crate::quad::midpoint;
use crate::seed::derive_seed;

/// A deterministic univariate integrand on `[0, 1]`.
pub trait Integrand: Sync {
    fn eval(&self, u: f64) -> f64;

    /// `∫_a^b`; the default is a 4-point Gauss–Legendre rule.
    fn integral(&self, a: f64, b: f64) -> f64 {
        const X: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const W: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        X.iter().zip(W).map(|(x, w)| w * self.eval(mid + half * x)).sum::<f64>() * half
    }

    /// An interval outside of which the integrand vanishes.
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

impl<F: Fn(f64) -> f64 + Sync> Integrand for F {
    fn eval(&self, u: f64) -> f64 {
        self(u)
    }
}

/// How an integrand is turned into coefficients against path increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `Σ_j g(t_j) ΔW_j`.
    LeftPoint,
    /// `Σ_j ḡ_j ΔW_j` with `ḡ_j` the exact average of `g` over cell `j`,
    /// i.e. the Wiener integral of the step-function projection of `g`.
    CellAverage,
}

/// Inner products used inside the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerRule {
    /// Composite midpoint rule on `[0, 1]`.
    Midpoint { points: usize },
    /// `Σ_j a_j b_j Δt` over the discretized coefficients, which is the exact
    /// covariance of the discrete single integrals.
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaosRule {
    pub discretization: Discretization,
    pub inner: InnerRule,
}

impl Default for ChaosRule {
    fn default() -> Self {
        Self {
            discretization: Discretization::LeftPoint,
            inner: InnerRule::Midpoint { points: 10_000 },
        }
    }
}

impl ChaosRule {
    /// Cell averages with matching discrete inner products: the discrete
    /// chaos is then exact, `E I_ℓ = 0` and the isometry holds on the grid.
    pub fn consistent() -> Self {
        Self {
            discretization: Discretization::CellAverage,
            inner: InnerRule::Discrete,
        }
    }
}

/// Coefficients of an integrand against the increments of one path grid,
/// stored over the cells that meet its support.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    start: usize,
    coeffs: Vec<f64>,
}

impl Projected {
    pub fn new<G: Integrand + ?Sized>(g: &G, grid: TimeGrid, disc: Discretization) -> Self {
        let n = grid.n_steps();
        let nf = n as f64;
        let (lo, hi) = g.support();
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        let start = ((lo * nf).floor() as usize).saturating_sub(1).min(n);
        let end = (((hi * nf).ceil() as usize) + 1).min(n);
        let dt = grid.dt();
        let coeffs = (start..end.max(start))
            .map(|j| match disc {
                Discretization::LeftPoint => g.eval(grid.point(j)),
                Discretization::CellAverage => g.integral(grid.point(j), grid.point(j + 1)) / dt,
            })
            .collect();
        Self { start, coeffs }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `Σ_j c_j ΔW_j`.
    pub fn integrate(&self, increments: &[f64]) -> f64 {
        let dw = &increments[self.start..self.start + self.coeffs.len()];
        self.coeffs.iter().zip(dw).map(|(c, d)| c * d).sum()
    }

    /// `Σ_j a_j b_j Δt` over shared cells.
    pub fn discrete_inner(&self, other: &Projected, dt: f64) -> f64 {
        let lo = self.start.max(other.start);
        let hi = (self.start + self.coeffs.len()).min(other.start + other.coeffs.len());
        (lo..hi)
            .map(|j| self.coeffs[j - self.start] * other.coeffs[j - other.start])
            .sum::<f64>()
            * dt
    }

    /// `Σ_j c_j Δt`, the discrete mass.
    pub fn mass(&self, dt: f64) -> f64 {
        self.coeffs.iter().sum::<f64>() * dt
    }
}

pub fn wiener_integral<G: Integrand + ?Sized>(g: &G, w: &BrownianPath, disc: Discretization) -> f64 {
    Projected::new(g, w.grid(), disc).integrate(&w.increments())
}

/// Left-point Itô sum `Σ_j g(t_j)(W_{j+1} − W_j)`.
pub fn ito_integral_1<G: Integrand + ?Sized>(g: &G, w: &BrownianPath) -> f64 {
    wiener_integral(g, w, Discretization::LeftPoint)
}

/// `∫₀¹ g g'` by the composite midpoint rule.
pub fn l2_inner<A: Integrand + ?Sized, B: Integrand + ?Sized>(g: &A, g2: &B, quad_points: usize) -> Result<f64> {
    if quad_points < 2 {
        return Err(invalid("l2_inner needs at least two quadrature points"));
    }
    Ok(midpoint(|u| g.eval(u) * g2.eval(u), 0.0, 1.0, quad_points))
}

/// Wick product of a centred Gaussian family: the multiple integral of
/// `g₁ ⊗ … ⊗ g_ℓ` given `ξ_k = I₁(g_k)` and the `ℓ × ℓ` row-major Gram matrix
/// `⟨g_j, g_k⟩`.
pub fn wick_product(xi: &[f64], gram: &[f64]) -> f64 {
    let l = xi.len();
    debug_assert_eq!(gram.len(), l * l);
    match l {
        0 => 1.0,
        1 => xi[0],
        2 => xi[0] * xi[1] - gram[1],
        3 => xi[0] * xi[1] * xi[2] - gram[1] * xi[2] - gram[2] * xi[1] - gram[l + 2] * xi[0],
        _ => {
            assert!(l <= 20, "wick_product supports up to 20 factors");
            let mut table = vec![0.0; 1 << l];
            table[0] = 1.0;
            for mask in 1usize..(1 << l) {
                let k = (usize::BITS - 1 - mask.leading_zeros()) as usize;
                let rest = mask ^ (1 << k);
                let mut v = table[rest] * xi[k];
                let mut bits = rest;
                while bits != 0 {
                    let j = bits.trailing_zeros() as usize;
                    v -= gram[j * l + k] * table[rest ^ (1 << j)];
                    bits &= bits - 1;
                }
                table[mask] = v;
            }
            table[(1 << l) - 1]
        }
    }
}

/// A tensor integrand `g₁ ⊗ … ⊗ g_ℓ` prepared for repeated evaluation on
/// paths sharing one grid.
#[derive(Debug, Clone)]
pub struct TensorIntegrand {
    grid: TimeGrid,
    factors: Vec<Projected>,
    gram: Vec<f64>,
}

impl TensorIntegrand {
    pub fn prepare(gs: &[&dyn Integrand], grid: TimeGrid, rule: ChaosRule) -> Result<Self> {
        if gs.is_empty() {
            return Err(invalid("tensor integrand needs at least one factor"));
        }
        let l = gs.len();
        let factors: Vec<Projected> = gs
            .iter()
            .map(|g| Projected::new(*g, grid, rule.discretization))
            .collect();
        let mut gram = vec![0.0; l * l];
        for a in 0..l {
            for b in a..l {
                let v = match rule.inner {
                    InnerRule::Discrete => factors[a].discrete_inner(&factors[b], grid.dt()),
                    InnerRule::Midpoint { points } => l2_inner(gs[a], gs[b], points)?,
                };
                gram[a * l + b] = v;
                gram[b * l + a] = v;
            }
        }
        Ok(Self { grid, factors, gram })
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn evaluate_increments(&self, increments: &[f64]) -> f64 {
        let mut xi = [0.0; 20];
        let xi = &mut xi[..self.factors.len()];
        for (x, f) in xi.iter_mut().zip(&self.factors) {
            *x = f.integrate(increments);
        }
        wick_product(xi, &self.gram)
    }

    pub fn evaluate(&self, w: &BrownianPath) -> Result<f64> {
        if w.grid() != self.grid {
            return Err(Error::Alignment(format!(
                "integrand prepared for N = {}, path has N = {}",
                self.grid.n_steps(),
                w.grid().n_steps()
            )));
        }
        Ok(self.evaluate_increments(&w.increments()))
    }
}

/// `I_ℓ(g₁ ⊗ … ⊗ g_ℓ)(W)` via the product-formula recursion.
pub fn tensor_chaos(gs: &[&dyn Integrand], w: &BrownianPath, rule: ChaosRule) -> Result<f64> {
    TensorIntegrand::prepare(gs, w.grid(), rule)?.evaluate(w)
}

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite_polynomial(n: usize, x: f64) -> f64 {
    scaled_hermite(n, x, 1.0)
}

/// `σ^n He_n(x/σ)` via `p_{k+1} = x p_k − k σ² p_{k−1}`.
fn scaled_hermite(n: usize, x: f64, var: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for k in 1..n {
        let p2 = x * p1 - k as f64 * var * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `I_ℓ(g^{⊗ℓ}) = ‖g‖^ℓ He_ℓ(ξ/‖g‖)` with `ξ = I₁(g)`.
pub fn hermite_chaos<G: Integrand + ?Sized>(g: &G, order: usize, w: &BrownianPath, rule: ChaosRule) -> Result<f64> {
    let proj = Projected::new(g, w.grid(), rule.discretization);
    let norm_sq = match rule.inner {
        InnerRule::Discrete => proj.discrete_inner(&proj, w.grid().dt()),
        InnerRule::Midpoint { points } => l2_inner(g, g, points)?,
    };
    if norm_sq <= 0.0 {
        return Err(Error::DegenerateIntegrand);
    }
    let xi = proj.integrate(&w.increments());
    Ok(scaled_hermite(order, xi, norm_sq))
}

/// A tensor on the midpoint grid `((i + 1/2)/G)` of `[0, 1]^ℓ`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GriddedRepr", into = "GriddedRepr")]
pub struct GriddedFunction {
    dim: usize,
    grid_size: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GriddedRepr {
    pub dim: usize,
    pub grid_size: usize,
    pub values: Vec<f64>,
}

impl TryFrom<GriddedRepr> for GriddedFunction {
    type Error = Error;
    fn try_from(r: GriddedRepr) -> Result<Self> {
        GriddedFunction::new(r.dim, r.grid_size, r.values)
    }
}

impl From<GriddedFunction> for GriddedRepr {
    fn from(f: GriddedFunction) -> Self {
        Self {
            dim: f.dim,
            grid_size: f.grid_size,
            values: f.values,
        }
    }
}

/// Total node count `G^ℓ`, if it fits comfortably in memory.
pub fn node_count(dim: usize, grid_size: usize) -> Result<usize> {
    const MAX_NODES: usize = 1 << 26;
    if dim == 0 || grid_size == 0 {
        return Err(invalid("gridded function needs dim ≥ 1 and grid_size ≥ 1"));
    }
    grid_size
        .checked_pow(dim as u32)
        .filter(|&c| c <= MAX_NODES)
        .ok_or_else(|| invalid(format!("grid {grid_size}^{dim} is too large")))
}

impl GriddedFunction {
    pub fn new(dim: usize, grid_size: usize, values: Vec<f64>) -> Result<Self> {
        let count = node_count(dim, grid_size)?;
        if values.len() != count {
            return Err(invalid(format!(
                "gridded function of shape {grid_size}^{dim} needs {count} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("gridded function values must be finite"));
        }
        Ok(Self { dim, grid_size, values })
    }

    pub fn zeros(dim: usize, grid_size: usize) -> Result<Self> {
        Ok(Self {
            dim,
            grid_size,
            values: vec![0.0; node_count(dim, grid_size)?],
        })
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(dim: usize, grid_size: usize, mut f: F) -> Result<Self> {
        let count = node_count(dim, grid_size)?;
        let mut point = vec![0.0; dim];
        let mut idx = vec![0usize; dim];
        let values = (0..count)
            .map(|flat| {
                unravel(flat, grid_size, &mut idx);
                for (p, &i) in point.iter_mut().zip(&idx) {
                    *p = cell_center(i, grid_size);
                }
                f(&point)
            })
            .collect();
        Self::new(dim, grid_size, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[ravel(idx, self.grid_size)]
    }

    /// `Σ f² / G^ℓ`, the midpoint tensor quadrature of `‖f‖²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    pub fn l2_distance(&self, other: &GriddedFunction) -> Result<f64> {
        self.check_same_shape(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        Ok((s / self.values.len() as f64).sqrt())
    }

    pub fn check_same_shape(&self, other: &GriddedFunction) -> Result<()> {
        if self.dim != other.dim || self.grid_size != other.grid_size {
            return Err(Error::Alignment(format!(
                "shape {}^{} vs {}^{}",
                self.grid_size, self.dim, other.grid_size, other.dim
            )));
        }
        Ok(())
    }

    /// Largest `|f(i) − f(σi)|` over adjacent transpositions `σ`.
    pub fn max_asymmetry(&self) -> f64 {
        if self.dim < 2 {
            return 0.0;
        }
        let mut idx = vec![0usize; self.dim];
        let mut worst: f64 = 0.0;
        for flat in 0..self.values.len() {
            unravel(flat, self.grid_size, &mut idx);
            for k in 0..self.dim - 1 {
                idx.swap(k, k + 1);
                let other = ravel(&idx, self.grid_size);
                idx.swap(k, k + 1);
                worst = worst.max((self.values[flat] - self.values[other]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }
}

pub fn cell_center(i: usize, grid_size: usize) -> f64 {
    (i as f64 + 0.5) / grid_size as f64
}

pub(crate) fn ravel(idx: &[usize], grid_size: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * grid_size + i)
}

pub(crate) fn unravel(mut flat: usize, grid_size: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % grid_size;
        flat /= grid_size;
    }
}

/// All distinct orderings of a sorted index tuple, in lexicographic order.
pub(crate) fn distinct_permutations(sorted: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = sorted.to_vec();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

pub const BRUTE_MAX_ORDER: usize = 3;

/// Increments of `w` aggregated over `g` equal coarse cells.
pub fn coarse_increments(w: &BrownianPath, g: usize) -> Result<Vec<f64>> {
    let n = w.grid().n_steps();
    if g == 0 || !n.is_multiple_of(g) {
        return Err(Error::Alignment(format!(
            "grid size {g} does not divide the path resolution N = {n}"
        )));
    }
    let step = n / g;
    let v = w.values();
    Ok((0..g).map(|a| v[(a + 1) * step] - v[a * step]).collect())
}

/// Off-diagonal Riemann sum `Σ_{distinct j} f(c_j) Π ΔW_{j_k}` over coarse
/// cells. The oracle route for multiple integrals, `ℓ ≤ 3`.
pub fn brute_multiple_integral(f: &GriddedFunction, w: &BrownianPath) -> Result<f64> {
    if f.dim() > BRUTE_MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order: f.dim(),
            max: BRUTE_MAX_ORDER,
        });
    }
    let x = coarse_increments(w, f.grid_size())?;
    Ok(off_diagonal_sum(f, &x))
}

/// The off-diagonal contraction of `f` against coarse increments `x`.
pub fn off_diagonal_sum(f: &GriddedFunction, x: &[f64]) -> f64 {
    let g = f.grid_size();
    let v = f.values();
    match f.dim() {
        1 => v.iter().zip(x).map(|(a, b)| a * b).sum(),
        2 => {
            let mut acc = 0.0;
            for a in 0..g {
                let row = &v[a * g..(a + 1) * g];
                let full: f64 = row.iter().zip(x).map(|(r, xb)| r * xb).sum();
                acc += x[a] * (full - row[a] * x[a]);
            }
            acc
        }
        3 => {
            let mut acc = 0.0;
            for a in 0..g {
                let mut inner_a = 0.0;
                for b in 0..g {
                    if b == a {
                        continue;
                    }
                    let row = &v[(a * g + b) * g..(a * g + b + 1) * g];
                    let full: f64 = row.iter().zip(x).map(|(r, xc)| r * xc).sum();
                    inner_a += x[b] * (full - row[a] * x[a] - row[b] * x[b]);
                }
                acc += x[a] * inner_a;
            }
            acc
        }
        d => panic!("off_diagonal_sum supports orders 1..=3, got {d}"),
    }
}

/// Hypercontractivity constant `c_ℓ(q) = (q − 1)^{ℓ/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosConstants {
    pub order: usize,
    pub q: f64,
    pub value: f64,
}

impl ChaosConstants {
    pub fn new(order: usize, q: f64) -> Result<Self> {
        Ok(Self {
            order,
            q,
            value: chaos_constant(order, q)?,
        })
    }
}

pub fn chaos_constant(order: usize, q: f64) -> Result<f64> {
    if !(q >= 2.0) || !q.is_finite() {
        return Err(invalid(format!("hypercontractivity exponent must be ≥ 2, got {q}")));
    }
    Ok((q - 1.0).powf(order as f64 / 2.0))
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `b_{ℓ,r} = c_ℓ(2r)² 2^ℓ ℓ! ‖k‖^{2ℓ}`, the constant bounding
/// `(E ξ_ℓ^{2r})^{1/r} h^ℓ`.
pub fn moment_bound_constant(order: usize, r: f64, kernel_l2: f64) -> Result<f64> {
    let c = chaos_constant(order, 2.0 * r)?;
    Ok(c * c * 2f64.powi(order as i32) * factorial(order) * kernel_l2.powi(2 * order as i32))
}

/// Permanent of an `n × n` row-major matrix by expansion over permutations.
pub fn permanent(m: &[f64], n: usize) -> f64 {
    fn rec(m: &[f64], n: usize, row: usize, used: &mut [bool]) -> f64 {
        if row == n {
            return 1.0;
        }
        let mut acc = 0.0;
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                acc += m[row * n + col] * rec(m, n, row + 1, used);
                used[col] = false;
            }
        }
        acc
    }
    assert_eq!(m.len(), n * n);
    rec(m, n, 0, &mut vec![false; n])
}

/// `E[I_ℓ(⊗gs) I_ℓ'(⊗gs')] = δ_{ℓℓ'} ℓ! ⟨sym ⊗gs, sym ⊗gs'⟩`, which is the
/// permanent of the cross Gram matrix.
pub fn isometry_target(gs: &[&dyn Integrand], gs2: &[&dyn Integrand], quad_points: usize) -> Result<f64> {
    if gs.len() != gs2.len() {
        return Ok(0.0);
    }
    let l = gs.len();
    let mut m = vec![0.0; l * l];
    for a in 0..l {
        for b in 0..l {
            m[a * l + b] = l2_inner(gs[a], gs2[b], quad_points)?;
        }
    }
    Ok(permanent(&m, l))
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f` on the increments of `n_mc` seeded paths, in parallel; the result
/// is in path order.
pub fn monte_carlo<T, F>(grid: TimeGrid, n_mc: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    (0..n_mc as u64)
        .into_par_iter()
        .map(|j| f(&sample_increments(grid, derive_seed(seed, j))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub empirical: f64,
    pub theoretical: f64,
    pub mc_stderr: f64,
    pub n_mc: usize,
    pub seed: u64,
}

impl IsometryReport {
    /// `|empirical − theoretical| ≤ k · mc_stderr`.
    pub fn within(&self, k: f64) -> bool {
        (self.empirical - self.theoretical).abs() <= k * self.mc_stderr
    }
}

pub fn isometry_report(
    gs: &[&dyn Integrand],
    gs2: &[&dyn Integrand],
    n_mc: usize,
    seed: u64,
    grid: TimeGrid,
    rule: ChaosRule,
) -> Result<IsometryReport> {
    if n_mc < 100 {
        return Err(invalid(format!("isometry report needs n_mc ≥ 100, got {n_mc}")));
    }
    let a = TensorIntegrand::prepare(gs, grid, rule)?;
    let b = TensorIntegrand::prepare(gs2, grid, rule)?;
    let products = monte_carlo(grid, n_mc, seed, |dw| {
        a.evaluate_increments(dw) * b.evaluate_increments(dw)
    });
    let (empirical, mc_stderr) = mean_and_stderr(&products);
    let points = match rule.inner {
        InnerRule::Midpoint { points } => points,
        InnerRule::Discrete => 10_000,
    };
    Ok(IsometryReport {
        empirical,
        theoretical: isometry_target(gs, gs2, points)?,
        mc_stderr,
        n_mc,
        seed,
    })
}

/// `(E|X|^q)^{1/q}` with a delta-method standard error.
pub fn moment_root(xs: &[f64], q: f64) -> (f64, f64) {
    let powers: Vec<f64> = xs.iter().map(|x| x.abs().powf(q)).collect();
    let (s, se) = mean_and_stderr(&powers);
    let root = s.powf(1.0 / q);
    (root, se * root / (q * s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercontractivityReport {
    pub order: usize,
    pub q: f64,
    /// `(E|I_ℓ|^q)^{1/q}`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `c_ℓ(q) (E I_ℓ²)^{1/2}`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub n_mc: usize,
    pub seed: u64,
}

impl HypercontractivityReport {
    pub fn holds(&self, k: f64) -> bool {
        self.lhs <= self.rhs + k * self.lhs_stderr
    }
}

pub fn hypercontractivity_report(
    gs: &[&dyn Integrand],
    q: f64,
    n_mc: usize,
    seed: u64,
    grid: TimeGrid,
    rule: ChaosRule,
) -> Result<HypercontractivityReport> {
    let c = chaos_constant(gs.len(), q)?;
    let t = TensorIntegrand::prepare(gs, grid, rule)?;
    let draws = monte_carlo(grid, n_mc, seed, |dw| t.evaluate_increments(dw));
    let (lhs, lhs_stderr) = moment_root(&draws, q);
    let (l2, l2_se) = moment_root(&draws, 2.0);
    Ok(HypercontractivityReport {
        order: gs.len(),
        q,
        lhs,
        lhs_stderr,
        rhs: c * l2,
        rhs_stderr: c * l2_se,
        n_mc,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundReport {
    pub order: usize,
    pub h: f64,
    pub r: f64,
    /// `(E ξ_ℓ^{2r})^{1/r}` by Monte Carlo.
    pub empirical: f64,
    pub mc_stderr: f64,
    /// `b_{ℓ,r} h^{-ℓ}`.
    pub bound: f64,
    /// `E ξ_ℓ² = ℓ! ‖sym K_h(t, ·)‖²` by quadrature.
    pub second_moment_quadrature: f64,
    pub within: bool,
    pub n_mc: usize,
    pub seed: u64,
}

/// Checks `(E ξ_ℓ(t,h)^{2r})^{1/r} ≤ b_{ℓ,r} h^{−ℓ}` at an interior point `t`.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_report(
    kernel: std::sync::Arc<MomentKernel>,
    t: &[f64],
    h: f64,
    r: f64,
    n_mc: usize,
    seed: u64,
    grid: TimeGrid,
    rule: ChaosRule,
) -> Result<MomentBoundReport> {
    if !(r >= 1.0) {
        return Err(invalid(format!("moment index r must be ≥ 1, got {r}")));
    }
    if t.iter().any(|&tk| tk < h || tk > 1.0 - h) {
        return Err(invalid(format!("t = {t:?} is not interior for h = {h}")));
    }
    let order = t.len();
    let kl2 = kernel.l2_norm();
    let kh = BandwidthedKernel::new(kernel, h, order)?;
    let slices = kh.slices(t);
    let refs: Vec<&dyn Integrand> = slices.iter().map(|s| s as &dyn Integrand).collect();
    let prepared = TensorIntegrand::prepare(&refs, grid, rule)?;
    let draws = monte_carlo(grid, n_mc, seed, |dw| prepared.evaluate_increments(dw));
    let (root, root_se) = moment_root(&draws, 2.0 * r);
    // (E ξ^{2r})^{1/r} is the square of the 2r-th moment root.
    let empirical = root * root;
    let mc_stderr = 2.0 * root * root_se;
    let bound = moment_bound_constant(order, r, kl2)? * h.powi(-(order as i32));
    let second = {
        let mut m = vec![0.0; order * order];
        for a in 0..order {
            for b in 0..order {
                m[a * order + b] = slice_inner(&slices[a], &slices[b]);
            }
        }
        permanent(&m, order)
    };
    Ok(MomentBoundReport {
        order,
        h,
        r,
        empirical,
        mc_stderr,
        bound,
        second_moment_quadrature: second,
        within: empirical <= bound,
        n_mc,
        seed,
    })
}

fn slice_inner(a: &crate::kernelkit::KernelSlice, b: &crate::kernelkit::KernelSlice) -> f64 {
    let (alo, ahi) = a.support();
    let (blo, bhi) = b.support();
    let lo = alo.max(blo).max(0.0);
    let hi = ahi.min(bhi).min(1.0);
    if hi <= lo {
        return 0.0;
    }
    // Both factors are polynomials on the overlap.
    crate::quad::GaussRule::new(16).integrate(|u| a.eval(u) * b.eval(u), lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathlab::{make_grid, sample_brownian};

    fn one(_: f64) -> f64 {
        1.0
    }

    #[test]
    fn ito_integral_of_constant_telescopes() {
        let w = sample_brownian(make_grid(64).unwrap(), 1);
        assert!((ito_integral_1(&one, &w) - w.terminal()).abs() < 1e-12);
        let half = |u: f64| if u < 0.5 { 1.0 } else { 0.0 };
        assert!((ito_integral_1(&half, &w) - w.at(32)).abs() < 1e-12);
        assert!((wiener_integral(&half, &w, Discretization::CellAverage) - w.at(32)).abs() < 1e-12);
    }

    #[test]
    fn l2_inner_basics() {
        assert!((l2_inner(&one, &one, 10).unwrap() - 1.0).abs() < 1e-14);
        let id = |u: f64| u;
        assert!((l2_inner(&id, &one, 10_000).unwrap() - 0.5).abs() < 1e-10);
        assert!(l2_inner(&id, &one, 1).is_err());
        let k = crate::kernelkit::build_kernel(2.0).unwrap();
        let kf = |u: f64| k.eval(u);
        assert!((l2_inner(&kf, &kf, 10_000).unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn wick_product_matches_recursion_by_hand() {
        let xi = [0.3, -1.2, 0.7, 2.0];
        let g = [
            1.0, 0.2, 0.1, 0.0, //
            0.2, 2.0, 0.3, 0.4, //
            0.1, 0.3, 0.5, 0.6, //
            0.0, 0.4, 0.6, 1.5,
        ];
        // I_3 from the generic table for the leading 3×3 block.
        let g3 = [1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 0.5];
        let i3 = xi[0] * xi[1] * xi[2] - 0.2 * xi[2] - 0.1 * xi[1] - 0.3 * xi[0];
        assert!((wick_product(&xi[..3], &g3) - i3).abs() < 1e-14);
        // I_4 = I_3 ξ4 − Σ_j g_{j4} I_2(others).
        let i2 = |a: usize, b: usize| xi[a] * xi[b] - g[a * 4 + b];
        let i4 = i3 * xi[3] - g[3] * i2(1, 2) - g[7] * i2(0, 2) - g[11] * i2(0, 1);
        assert!((wick_product(&xi, &g) - i4).abs() < 1e-13);
    }

    #[test]
    fn hermite_polynomials() {
        assert_eq!(hermite_polynomial(0, 2.0), 1.0);
        assert_eq!(hermite_polynomial(1, 2.0), 2.0);
        assert_eq!(hermite_polynomial(2, 2.0), 3.0);
        assert_eq!(hermite_polynomial(3, 2.0), 2.0);
        assert_eq!(hermite_polynomial(4, 2.0), 16.0 - 24.0 + 3.0);
    }

    #[test]
    fn tensor_chaos_low_orders_match_hermite_identities() {
        let w = sample_brownian(make_grid(256).unwrap(), 8);
        let g = |u: f64| 1.0 + u * u;
        let rule = ChaosRule::default();
        let xi = ito_integral_1(&g, &w);
        let n2 = l2_inner(&g, &g, 10_000).unwrap();
        let one_factor = tensor_chaos(&[&g], &w, rule).unwrap();
        assert!((one_factor - xi).abs() < 1e-12);
        let two = tensor_chaos(&[&g, &g], &w, rule).unwrap();
        assert!((two - (xi * xi - n2)).abs() < 1e-12);
        let three = tensor_chaos(&[&g, &g, &g], &w, rule).unwrap();
        assert!((three - (xi.powi(3) - 3.0 * n2 * xi)).abs() < 1e-11);
        assert!((hermite_chaos(&g, 2, &w, rule).unwrap() - two).abs() < 1e-12);
    }

    #[test]
    fn hermite_chaos_rejects_zero_integrand() {
        let w = sample_brownian(make_grid(16).unwrap(), 2);
        let zero = |_: f64| 0.0;
        assert!(matches!(
            hermite_chaos(&zero, 2, &w, ChaosRule::default()),
            Err(Error::DegenerateIntegrand)
        ));
    }

    #[test]
    fn brute_matches_single_integral_at_order_one() {
        let w = sample_brownian(make_grid(128).unwrap(), 4);
        let f = GriddedFunction::from_fn(1, 128, |u| (3.0 * u[0]).sin()).unwrap();
        let g = |u: f64| (3.0 * (u + 0.5 / 128.0)).sin();
        let brute = brute_multiple_integral(&f, &w).unwrap();
        assert!((brute - ito_integral_1(&g, &w)).abs() < 1e-12);
    }

    #[test]
    fn brute_of_constant_order_two_is_square_minus_quadratic_variation() {
        let w = sample_brownian(make_grid(64).unwrap(), 5);
        let f = GriddedFunction::from_fn(2, 16, |_| 1.0).unwrap();
        let x = coarse_increments(&w, 16).unwrap();
        let qv: f64 = x.iter().map(|d| d * d).sum();
        let brute = brute_multiple_integral(&f, &w).unwrap();
        assert!((brute - (w.terminal().powi(2) - qv)).abs() < 1e-12);
    }

    #[test]
    fn brute_order_three_matches_explicit_loops() {
        let w = sample_brownian(make_grid(24).unwrap(), 6);
        let f = GriddedFunction::from_fn(3, 6, |u| u[0] + 2.0 * u[1] * u[2] - u[2]).unwrap();
        let x = coarse_increments(&w, 6).unwrap();
        let mut want = 0.0;
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..6 {
                    if a != b && a != c && b != c {
                        want += f.get(&[a, b, c]) * x[a] * x[b] * x[c];
                    }
                }
            }
        }
        assert!((brute_multiple_integral(&f, &w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn brute_errors() {
        let w = sample_brownian(make_grid(30).unwrap(), 6);
        let f = GriddedFunction::zeros(2, 7).unwrap();
        assert!(matches!(brute_multiple_integral(&f, &w), Err(Error::Alignment(_))));
        let f = GriddedFunction::zeros(4, 3).unwrap();
        assert!(matches!(
            brute_multiple_integral(&f, &w),
            Err(Error::UnsupportedOrder { order: 4, .. })
        ));
    }

    #[test]
    fn chaos_constants() {
        for l in 0..6 {
            assert_eq!(chaos_constant(l, 2.0).unwrap(), 1.0);
        }
        assert!((chaos_constant(2, 4.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((chaos_constant(1, 4.0).unwrap() - 1.732_050_8).abs() < 1e-7);
        assert!(chaos_constant(1, 1.5).is_err());
        assert!((moment_bound_constant(1, 2.0, 2.0).unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn isometry_targets() {
        let a: [&dyn Integrand; 2] = [&one, &one];
        assert!((isometry_target(&a, &a, 100).unwrap() - 2.0).abs() < 1e-14);
        let b: [&dyn Integrand; 1] = [&one];
        assert_eq!(isometry_target(&b, &a, 100).unwrap(), 0.0);
    }

    #[test]
    fn gridded_function_symmetry_and_serde() {
        let f = GriddedFunction::from_fn(2, 5, |u| u[0] * u[1]).unwrap();
        assert!(f.is_symmetric(1e-15));
        let g = GriddedFunction::from_fn(2, 5, |u| u[0]).unwrap();
        assert!(!g.is_symmetric(1e-3));
        let text = serde_json::to_string(&f).unwrap();
        let back: GriddedFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<GriddedFunction>(r#"{"dim":2,"grid_size":3,"values":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<GriddedFunction>(r#"{"dim":40,"grid_size":3,"values":[]}"#).is_err());
    }

    #[test]
    fn consistent_rule_preserves_kernel_mass() {
        let base = std::sync::Arc::new(crate::kernelkit::build_kernel(2.0).unwrap());
        let grid = make_grid(512).unwrap();
        // Misaligned bandwidth and centre: exact cell averages still sum to 1.
        for &(t, h) in &[(0.123, 0.0498), (0.77, 0.135), (0.5, 0.25)] {
            let s = crate::kernelkit::KernelSlice::new(base.clone(), t, h);
            let p = Projected::new(&s, grid, Discretization::CellAverage);
            assert!((p.mass(grid.dt()) - 1.0).abs() < 1e-12, "t={t} h={h}");
        }
    }
}
