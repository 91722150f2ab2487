//! Ground-truth mappings with finite chaos expansions, data synthesis,
//! class-membership checks and the bump-function hard instances.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaoscalc::{
    distinct_permutations, factorial, hermite_polynomial, off_diagonal_sum, Discretization, GriddedFunction, Integrand,
    Projected, BRUTE_MAX_ORDER,
};
use crate::chaosreg::Sample;
use crate::error::{invalid, Error, Result};
use crate::pathlab::{sample_increments, BrownianPath, TimeGrid};
use crate::quad::GaussRule;
use crate::seed::{rng_from_seed, tagged_seed};

const TAG_PATH: u64 = 0x7061_7468;
const TAG_NOISE: u64 = 0x6e6f_6973;

/// Univariate test functions with closed-form integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `Σ c_j u^j`.
    Polynomial { coeffs: Vec<f64> },
    /// `A sin(2π f u + φ)`.
    Sine { amplitude: f64, frequency: f64, phase: f64 },
    /// `c |u − u₀|^α`, Hölder of order `α ≤ 1` with constant `c`.
    Power { center: f64, exponent: f64, scale: f64 },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            Profile::Polynomial { coeffs } => !coeffs.is_empty() && finite(coeffs),
            Profile::Sine {
                amplitude,
                frequency,
                phase,
            } => finite(&[*amplitude, *frequency, *phase]),
            Profile::Power {
                center,
                exponent,
                scale,
            } => finite(&[*center, *exponent, *scale]) && *exponent > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("malformed profile {self:?}")))
        }
    }

    fn antiderivative(&self, u: f64) -> f64 {
        match self {
            Profile::Polynomial { coeffs } => {
                coeffs
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |acc, (j, c)| acc * u + c / (j as f64 + 1.0))
                    * u
            }
            Profile::Sine {
                amplitude,
                frequency,
                phase,
            } => {
                let w = 2.0 * PI * frequency;
                if *frequency == 0.0 {
                    amplitude * phase.sin() * u
                } else {
                    -amplitude * (w * u + phase).cos() / w
                }
            }
            Profile::Power {
                center,
                exponent,
                scale,
            } => {
                let d = u - center;
                scale * d.signum() * d.abs().powf(exponent + 1.0) / (exponent + 1.0)
            }
        }
    }

    /// A Hölder constant of order `s ≤ 1` on `[0, 1]`, where one is known in
    /// closed form.
    pub fn holder_constant(&self, s: f64) -> Option<f64> {
        if !(s > 0.0 && s <= 1.0) {
            return None;
        }
        match self {
            // On [0,1], |x−y| ≤ |x−y|^s, so a Lipschitz bound is a Hölder bound.
            Profile::Polynomial { coeffs } => {
                Some(coeffs.iter().enumerate().skip(1).map(|(j, c)| j as f64 * c.abs()).sum())
            }
            Profile::Sine {
                amplitude, frequency, ..
            } => Some((amplitude * 2.0 * PI * frequency).abs()),
            Profile::Power { exponent, scale, .. } if *exponent >= s && *exponent <= 1.0 => Some(scale.abs()),
            Profile::Power { .. } => None,
        }
    }

    pub fn l2_norm_sq(&self) -> f64 {
        GaussRule::new(12).integrate_composite(|u| self.eval(u).powi(2), 0.0, 1.0, 64)
    }
}

impl Integrand for Profile {
    fn eval(&self, u: f64) -> f64 {
        match self {
            Profile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c),
            Profile::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * frequency * u + phase).sin(),
            Profile::Power {
                center,
                exponent,
                scale,
            } => scale * (u - center).abs().powf(*exponent),
        }
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    /// `f_ℓ ≡ c`.
    Constant { value: f64 },
    /// `f_ℓ = g^{⊗ℓ}`.
    EqualFactor { profile: Profile },
    /// A symmetric tensor on the midpoint grid, piecewise constant on cells.
    Gridded { tensor: GriddedFunction },
}

impl Representation {
    /// Values at the `G^ℓ` cell midpoints.
    pub fn on_grid(&self, order: usize, grid_size: usize) -> Result<GriddedFunction> {
        match self {
            Representation::Constant { value } => GriddedFunction::from_fn(order, grid_size, |_| *value),
            Representation::EqualFactor { profile } => {
                let g: Vec<f64> = (0..grid_size)
                    .map(|a| profile.eval(crate::chaoscalc::cell_center(a, grid_size)))
                    .collect();
                let mut f = GriddedFunction::zeros(order, grid_size)?;
                let mut idx = vec![0usize; order];
                for (flat, v) in f.values_mut().iter_mut().enumerate() {
                    crate::chaoscalc::unravel(flat, grid_size, &mut idx);
                    *v = idx.iter().map(|&i| g[i]).product();
                }
                Ok(f)
            }
            Representation::Gridded { tensor } => {
                if tensor.dim() != order {
                    return Err(invalid(format!("tensor has dim {} for order {order}", tensor.dim())));
                }
                if tensor.grid_size() == grid_size {
                    return Ok(tensor.clone());
                }
                if !grid_size.is_multiple_of(tensor.grid_size()) {
                    return Err(Error::Alignment(format!(
                        "cannot refine a {}-cell tensor onto {grid_size} cells",
                        tensor.grid_size()
                    )));
                }
                let factor = grid_size / tensor.grid_size();
                let mut coarse = vec![0usize; order];
                GriddedFunction::from_fn(order, grid_size, |u| {
                    for (c, x) in coarse.iter_mut().zip(u) {
                        *c = ((x * grid_size as f64) as usize / factor).min(tensor.grid_size() - 1);
                    }
                    tensor.get(&coarse)
                })
            }
        }
    }

    /// `‖f_ℓ‖²` on `[0, 1]^ℓ`.
    pub fn l2_norm_sq(&self, order: usize) -> f64 {
        match self {
            Representation::Constant { value } => value * value,
            Representation::EqualFactor { profile } => profile.l2_norm_sq().powi(order as i32),
            Representation::Gridded { tensor } => tensor.l2_norm_sq(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub order: usize,
    #[serde(flatten)]
    pub representation: Representation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    #[default]
    None,
    Gaussian {
        sigma: f64,
    },
    Uniform {
        half_width: f64,
    },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Gaussian { sigma: x } | NoiseSpec::Uniform { half_width: x } => {
                if x.is_finite() && x >= 0.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("noise scale must be finite and ≥ 0, got {x}")))
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { sigma } => sigma * sigma,
            NoiseSpec::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    /// `(E|ε|^4)^{1/4}`.
    pub fn mu4(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { sigma } => sigma * 3f64.powf(0.25),
            NoiseSpec::Uniform { half_width } => half_width * 0.2f64.powf(0.25),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseSpec::Uniform { half_width } => half_width * rng.random_range(-1.0..=1.0),
        }
    }
}

/// Declared membership parameters: smoothness `s`, Hölder radius `Λ`, top
/// order `L`, norm bound `M` and optional analytic growth `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub s: f64,
    pub lambda: f64,
    pub max_order: usize,
    pub m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub a: f64,
    #[serde(default)]
    pub components: Vec<Component>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassParams>,
}

impl MappingSpec {
    pub fn constant(a: f64) -> Self {
        Self {
            a,
            components: Vec::new(),
            noise: NoiseSpec::None,
            class: None,
        }
    }

    pub fn with_component(mut self, order: usize, representation: Representation) -> Self {
        self.components.push(Component { order, representation });
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(invalid("constant term must be finite"));
        }
        let mut seen = BTreeSet::new();
        for c in &self.components {
            if c.order == 0 {
                return Err(invalid("component orders start at 1"));
            }
            if !seen.insert(c.order) {
                return Err(invalid(format!("duplicate component of order {}", c.order)));
            }
            match &c.representation {
                Representation::Constant { value } if !value.is_finite() => {
                    return Err(invalid("constant component must be finite"))
                }
                Representation::EqualFactor { profile } => profile.validate()?,
                Representation::Gridded { tensor } => {
                    if tensor.dim() != c.order {
                        return Err(invalid(format!(
                            "order-{} component carries a {}-dimensional tensor",
                            c.order,
                            tensor.dim()
                        )));
                    }
                    if tensor.dim() > BRUTE_MAX_ORDER {
                        return Err(Error::UnsupportedOrder {
                            order: tensor.dim(),
                            max: BRUTE_MAX_ORDER,
                        });
                    }
                    if !tensor.is_symmetric(1e-10) {
                        return Err(Error::Symmetry(format!(
                            "gridded order-{} component is not symmetric (max deviation {:.3e})",
                            c.order,
                            tensor.max_asymmetry()
                        )));
                    }
                }
                _ => {}
            }
        }
        self.noise.validate()
    }

    pub fn component(&self, order: usize) -> Option<&Representation> {
        self.components
            .iter()
            .find(|c| c.order == order)
            .map(|c| &c.representation)
    }

    pub fn max_order(&self) -> usize {
        self.components.iter().map(|c| c.order).max().unwrap_or(0)
    }

    /// `Var m(W) = Σ ‖f_ℓ‖²/ℓ!`.
    pub fn signal_variance(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.representation.l2_norm_sq(c.order) / factorial(c.order))
            .sum()
    }
}

/// `a = 1`, `f₂ ≡ 1`: `m(w) = 1 + I₂(1)(w)/2! = (1 + w(1)²)/2`.
pub fn quadratic_terminal() -> MappingSpec {
    MappingSpec::constant(1.0).with_component(2, Representation::Constant { value: 1.0 })
}

enum PreparedTerm {
    /// `c He_ℓ(W(1))`.
    Constant {
        order: usize,
        value: f64,
    },
    EqualFactor {
        order: usize,
        proj: Projected,
        norm_sq: f64,
    },
    Gridded {
        tensor: GriddedFunction,
    },
}

/// A mapping specialised to one path grid for fast repeated evaluation.
pub struct PreparedMapping {
    grid: TimeGrid,
    a: f64,
    terms: Vec<PreparedTerm>,
}

impl PreparedMapping {
    pub fn new(spec: &MappingSpec, grid: TimeGrid) -> Result<Self> {
        spec.validate()?;
        let mut terms = Vec::with_capacity(spec.components.len());
        for c in &spec.components {
            let term = match &c.representation {
                Representation::Constant { value } => PreparedTerm::Constant {
                    order: c.order,
                    value: *value,
                },
                Representation::EqualFactor { profile } => {
                    let proj = Projected::new(profile, grid, Discretization::CellAverage);
                    let norm_sq = proj.discrete_inner(&proj, grid.dt());
                    if norm_sq <= 0.0 {
                        return Err(Error::DegenerateIntegrand);
                    }
                    PreparedTerm::EqualFactor {
                        order: c.order,
                        proj,
                        norm_sq,
                    }
                }
                Representation::Gridded { tensor } => {
                    if !grid.n_steps().is_multiple_of(tensor.grid_size()) {
                        return Err(Error::Alignment(format!(
                            "grid size {} does not divide the path resolution N = {}",
                            tensor.grid_size(),
                            grid.n_steps()
                        )));
                    }
                    PreparedTerm::Gridded { tensor: tensor.clone() }
                }
            };
            terms.push(term);
        }
        Ok(Self { grid, a: spec.a, terms })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn evaluate_increments(&self, dw: &[f64]) -> f64 {
        let mut total = self.a;
        let mut terminal = None;
        for term in &self.terms {
            let (order, value) = match term {
                PreparedTerm::Constant { order, value } => {
                    let w1 = *terminal.get_or_insert_with(|| dw.iter().sum::<f64>());
                    (*order, value * hermite_polynomial(*order, w1))
                }
                PreparedTerm::EqualFactor { order, proj, norm_sq } => {
                    let xi = proj.integrate(dw);
                    let s = norm_sq.sqrt();
                    (*order, s.powi(*order as i32) * hermite_polynomial(*order, xi / s))
                }
                PreparedTerm::Gridded { tensor } => {
                    let step = dw.len() / tensor.grid_size();
                    let x: Vec<f64> = dw.chunks(step).map(|c| c.iter().sum()).collect();
                    (tensor.dim(), off_diagonal_sum(tensor, &x))
                }
            };
            total += value / factorial(order);
        }
        total
    }

    pub fn evaluate(&self, w: &BrownianPath) -> Result<f64> {
        if w.grid() != self.grid {
            return Err(Error::Alignment("path grid differs from the prepared grid".into()));
        }
        Ok(self.evaluate_increments(&w.increments()))
    }
}

/// `a + Σ_ℓ I_ℓ(f_ℓ)(W)/ℓ!`.
pub fn evaluate_mapping(spec: &MappingSpec, w: &BrownianPath) -> Result<f64> {
    PreparedMapping::new(spec, w.grid())?.evaluate(w)
}

/// `n` independent pairs `(W_i, m(W_i) + ε_i)`.
pub fn synthesize(spec: &MappingSpec, n: usize, grid: TimeGrid, seed: u64) -> Result<Sample> {
    if n < 2 {
        return Err(invalid(format!("synthesize needs n ≥ 2, got {n}")));
    }
    let prepared = PreparedMapping::new(spec, grid)?;
    let pairs: Vec<(f64, BrownianPath)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let dw = sample_increments(grid, tagged_seed(seed, TAG_PATH, i));
            let mut rng = rng_from_seed(tagged_seed(seed, TAG_NOISE, i));
            let y = prepared.evaluate_increments(&dw) + spec.noise.sample(&mut rng);
            let w = BrownianPath::from_increments(grid, &dw).expect("finite increments");
            (y, w)
        })
        .collect();
    let (responses, paths) = pairs.into_iter().unzip();
    Sample::new(responses, paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCheckLine {
    pub condition: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCheckReport {
    pub lines: Vec<ClassCheckLine>,
}

impl ClassCheckReport {
    /// No condition failed; uncertified smoothness does not count as failure.
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.status != CheckStatus::Fail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MappingClass {
    /// `‖f_ℓ‖² ≤ M² ℓ!` for `ℓ ≤ L`, Hölder `(s, Λ)`.
    Finite {
        s: f64,
        lambda: f64,
        max_order: usize,
        m: f64,
    },
    /// `Σ e^{2γℓ} ‖f_ℓ‖²/ℓ! ≤ M²`, Hölder `(s, Λ)`.
    Analytic { s: f64, lambda: f64, gamma: f64, m: f64 },
}

fn line(condition: String, measured: f64, bound: f64) -> ClassCheckLine {
    ClassCheckLine {
        condition,
        status: if measured <= bound * (1.0 + 1e-12) {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        measured,
        bound,
    }
}

fn holder_line(c: &Component, s: f64, lambda: f64) -> ClassCheckLine {
    let constant = match &c.representation {
        Representation::Constant { .. } => Some(0.0),
        Representation::EqualFactor { profile } if c.order == 1 => profile.holder_constant(s),
        _ => None,
    };
    let condition = format!("order {} Hölder(s={s}, Λ={lambda})", c.order);
    match constant {
        Some(v) => line(condition, v, lambda),
        None => ClassCheckLine {
            condition,
            status: CheckStatus::NotCertified,
            measured: f64::NAN,
            bound: lambda,
        },
    }
}

pub fn class_check(spec: &MappingSpec, class: MappingClass) -> ClassCheckReport {
    let mut lines = Vec::new();
    match class {
        MappingClass::Finite {
            s,
            lambda,
            max_order,
            m,
        } => {
            lines.push(line("top order".into(), spec.max_order() as f64, max_order as f64));
            for c in &spec.components {
                let norm = c.representation.l2_norm_sq(c.order);
                lines.push(line(
                    format!("order {} norm", c.order),
                    norm,
                    m * m * factorial(c.order),
                ));
                lines.push(holder_line(c, s, lambda));
            }
        }
        MappingClass::Analytic { s, lambda, gamma, m } => {
            let weighted: f64 = spec
                .components
                .iter()
                .map(|c| {
                    (2.0 * gamma * c.order as f64).exp() * c.representation.l2_norm_sq(c.order) / factorial(c.order)
                })
                .sum();
            lines.push(line("analytic growth".into(), weighted, m * m));
            for c in &spec.components {
                lines.push(holder_line(c, s, lambda));
            }
        }
    }
    ClassCheckReport { lines }
}

/// `ψ(u) = exp(−1/(1 − u²))` on `(−1, 1)`.
pub fn bump_psi(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

/// `‖ψ‖² = ∫ ψ²`.
pub fn bump_norm_sq() -> f64 {
    GaussRule::new(16).integrate_composite(|u| bump_psi(u).powi(2), -1.0, 1.0, 64)
}

/// `g_w = ρ Σ_r w(r) Π_i ψ((y_i − (2r_i+1)h)/h)` over `R = 1/(2h)` cells per
/// axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpFamily {
    order: usize,
    h: f64,
    cells: usize,
    selector: BTreeSet<Vec<usize>>,
    rho: f64,
}

impl BumpFamily {
    pub fn new(order: usize, h: f64, selector: impl IntoIterator<Item = Vec<usize>>, rho: f64) -> Result<Self> {
        if order == 0 {
            return Err(invalid("bump order must be ≥ 1"));
        }
        if !(h > 0.0 && h <= 0.5) || !rho.is_finite() {
            return Err(invalid(format!("bump scale must be in (0, 1/2], got {h}")));
        }
        let r = 1.0 / (2.0 * h);
        let cells = r.round();
        if (r - cells).abs() > 1e-9 * r {
            return Err(invalid(format!("1/(2h) = {r} is not an integer")));
        }
        let cells = cells as usize;
        let selector: BTreeSet<Vec<usize>> = selector.into_iter().collect();
        for r in &selector {
            if r.len() != order || r.iter().any(|&i| i >= cells) {
                return Err(invalid(format!(
                    "selector cell {r:?} outside {{0..{}}}^{order}",
                    cells - 1
                )));
            }
            let mut sorted = r.clone();
            sorted.sort_unstable();
            if !distinct_permutations(&sorted).iter().all(|p| selector.contains(p)) {
                return Err(Error::Symmetry(format!(
                    "selector is not closed under permutations of {r:?}"
                )));
            }
        }
        Ok(Self {
            order,
            h,
            cells,
            selector,
            rho,
        })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn selected(&self) -> usize {
        self.selector.len()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let r: Vec<usize> = y
            .iter()
            .map(|&yi| ((yi / (2.0 * self.h)).floor().max(0.0) as usize).min(self.cells - 1))
            .collect();
        if !self.selector.contains(&r) {
            return 0.0;
        }
        self.rho
            * y.iter()
                .zip(&r)
                .map(|(&yi, &ri)| bump_psi((yi - (2 * ri + 1) as f64 * self.h) / self.h))
                .product::<f64>()
    }

    pub fn gridded(&self, grid_size: usize) -> Result<GriddedFunction> {
        GriddedFunction::from_fn(self.order, grid_size, |y| self.eval(y))
    }

    /// `|w| ‖ψ‖^{2ℓ} ρ² h^ℓ`.
    pub fn norm_sq(&self) -> f64 {
        self.selector.len() as f64
            * bump_norm_sq().powi(self.order as i32)
            * self.rho.powi(2)
            * self.h.powi(self.order as i32)
    }

    pub fn mapping_spec(&self, a: f64, grid_size: usize, noise: NoiseSpec) -> Result<MappingSpec> {
        Ok(MappingSpec::constant(a)
            .with_component(
                self.order,
                Representation::Gridded {
                    tensor: self.gridded(grid_size)?,
                },
            )
            .with_noise(noise))
    }
}

pub fn bump_instance(
    order: usize,
    h: f64,
    selector: impl IntoIterator<Item = Vec<usize>>,
    rho: f64,
    grid_size: usize,
) -> Result<GriddedFunction> {
    BumpFamily::new(order, h, selector, rho)?.gridded(grid_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathlab::{make_grid, sample_brownian};

    #[test]
    fn quadratic_terminal_evaluates_to_half_square_plus_half() {
        let g = make_grid(4).unwrap();
        let zero = BrownianPath::from_values(g, vec![0.0; 5]).unwrap();
        let spec = quadratic_terminal();
        assert!((evaluate_mapping(&spec, &zero).unwrap() - 0.5).abs() < 1e-15);
        let line = BrownianPath::from_values(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
        assert!((evaluate_mapping(&spec, &line).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn constant_and_linear_specs() {
        let w = sample_brownian(make_grid(64).unwrap(), 3);
        assert_eq!(evaluate_mapping(&MappingSpec::constant(5.0), &w).unwrap(), 5.0);
        let lin = MappingSpec::constant(2.0).with_component(1, Representation::Constant { value: 1.0 });
        assert!((evaluate_mapping(&lin, &w).unwrap() - (2.0 + w.terminal())).abs() < 1e-12);
        let lin2 = MappingSpec::constant(2.0).with_component(
            1,
            Representation::EqualFactor {
                profile: Profile::Polynomial { coeffs: vec![1.0] },
            },
        );
        assert!((evaluate_mapping(&lin2, &w).unwrap() - (2.0 + w.terminal())).abs() < 1e-12);
    }

    #[test]
    fn profile_integrals_are_exact() {
        let profiles = [
            Profile::Polynomial {
                coeffs: vec![1.0, -2.0, 3.0],
            },
            Profile::Sine {
                amplitude: 1.5,
                frequency: 2.0,
                phase: 0.3,
            },
            Profile::Power {
                center: 0.4,
                exponent: 0.5,
                scale: 2.0,
            },
        ];
        let rule = GaussRule::new(20);
        for p in &profiles {
            for &(a, b) in &[(0.0, 0.3), (0.35, 0.45), (0.5, 1.0)] {
                let q = if matches!(p, Profile::Power { .. }) && a < 0.4 && b > 0.4 {
                    rule.integrate(|u| p.eval(u), a, 0.4) + rule.integrate(|u| p.eval(u), 0.4, b)
                } else {
                    rule.integrate(|u| p.eval(u), a, b)
                };
                assert!((p.integral(a, b) - q).abs() < 1e-6, "{p:?} on [{a},{b}]");
            }
        }
    }

    #[test]
    fn gridded_evaluation_matches_constant_route_up_to_diagonal() {
        let w = sample_brownian(make_grid(256).unwrap(), 4);
        let tensor = GriddedFunction::from_fn(2, 256, |_| 1.0).unwrap();
        let gridded = MappingSpec::constant(0.0).with_component(2, Representation::Gridded { tensor });
        // At full resolution the off-diagonal sum equals W(1)² − Σ ΔW², the
        // constant route uses W(1)² − 1.
        let dw = w.increments();
        let qv: f64 = dw.iter().map(|d| d * d).sum();
        let want = (w.terminal().powi(2) - qv) / 2.0;
        assert!((evaluate_mapping(&gridded, &w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn synthesize_is_deterministic_and_noise_free_when_requested() {
        let spec = quadratic_terminal();
        let g = make_grid(32).unwrap();
        let s1 = synthesize(&spec, 10, g, 9).unwrap();
        let s2 = synthesize(&spec, 10, g, 9).unwrap();
        assert_eq!(s1.responses(), s2.responses());
        for (y, w) in s1.responses().iter().zip(s1.paths()) {
            assert!((y - evaluate_mapping(&spec, w).unwrap()).abs() < 1e-12);
        }
        assert!(synthesize(&spec, 1, g, 9).is_err());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let dup = quadratic_terminal().with_component(2, Representation::Constant { value: 2.0 });
        assert!(dup.validate().is_err());
        let asym = GriddedFunction::from_fn(2, 4, |u| u[0]).unwrap();
        let bad = MappingSpec::constant(0.0).with_component(2, Representation::Gridded { tensor: asym });
        assert!(matches!(bad.validate(), Err(Error::Symmetry(_))));
        let noisy = quadratic_terminal().with_noise(NoiseSpec::Gaussian { sigma: -1.0 });
        assert!(noisy.validate().is_err());
    }

    #[test]
    fn class_checks() {
        let m_class = MappingClass::Finite {
            s: 1.0,
            lambda: 1.0,
            max_order: 2,
            m: 1.0,
        };
        assert!(class_check(&quadratic_terminal(), m_class).passed());
        let big = MappingSpec::constant(1.0).with_component(2, Representation::Constant { value: 3.0 });
        let report = class_check(&big, m_class);
        assert!(!report.passed());
        let norm = report.lines.iter().find(|l| l.condition == "order 2 norm").unwrap();
        assert_eq!(norm.measured, 9.0);
        assert_eq!(norm.bound, 2.0);

        // ‖f_ℓ‖ = C^ℓ with finite L passes for every γ given a large enough M.
        let c: f64 = 1.5;
        let mut geo = MappingSpec::constant(0.0);
        for l in 1..=4 {
            geo = geo.with_component(
                l,
                Representation::Constant {
                    value: c.powi(l as i32),
                },
            );
        }
        for gamma in [0.0, 1.0, 5.0] {
            let m: f64 = (1..=4)
                .map(|l| (2.0 * gamma * l as f64).exp() * c.powi(2 * l) / factorial(l as usize))
                .sum::<f64>()
                .sqrt();
            let class = MappingClass::Analytic {
                s: 1.0,
                lambda: 1.0,
                gamma,
                m: m * 1.01,
            };
            assert!(class_check(&geo, class).passed());
        }
    }

    #[test]
    fn holder_certificates() {
        let p = Profile::Power {
            center: 0.5,
            exponent: 0.5,
            scale: 1.0,
        };
        assert!(p.holder_constant(0.5).is_some());
        assert!(p.holder_constant(0.8).is_none());
        let spec = MappingSpec::constant(0.0).with_component(1, Representation::EqualFactor { profile: p });
        let r = class_check(
            &spec,
            MappingClass::Finite {
                s: 0.5,
                lambda: 2.0,
                max_order: 1,
                m: 1.0,
            },
        );
        assert!(r.passed());
    }

    #[test]
    fn bump_profile() {
        assert!((bump_psi(0.0) - (-1f64).exp()).abs() < 1e-16);
        assert!((bump_psi(0.0) - 0.367_879_4).abs() < 1e-7);
        assert_eq!(bump_psi(1.0), 0.0);
        assert_eq!(bump_psi(-1.0), 0.0);
        for u in [0.1, 0.5, 0.9] {
            assert_eq!(bump_psi(u), bump_psi(-u));
        }
    }

    #[test]
    fn bump_instances() {
        let b = BumpFamily::new(2, 0.125, Vec::<Vec<usize>>::new(), 1.0).unwrap();
        assert!(b.gridded(32).unwrap().values().iter().all(|&v| v == 0.0));
        let diag = BumpFamily::new(2, 0.125, vec![vec![0, 0]], 0.7).unwrap();
        assert!((diag.eval(&[0.125, 0.125]) - 0.7 * bump_psi(0.0).powi(2)).abs() < 1e-15);
        assert!(BumpFamily::new(1, 0.3, vec![vec![0]], 1.0).is_err());
        assert!(matches!(
            BumpFamily::new(2, 0.125, vec![vec![0, 1]], 1.0),
            Err(Error::Symmetry(_))
        ));
        assert!(BumpFamily::new(2, 0.125, vec![vec![0, 1], vec![1, 0]], 1.0).is_ok());
    }

    #[test]
    fn bump_norm_matches_closed_form() {
        let b = BumpFamily::new(1, 0.125, vec![vec![1], vec![3]], 0.5).unwrap();
        let f = b.gridded(4096).unwrap();
        assert!((f.l2_norm_sq() - b.norm_sq()).abs() < 1e-6);
        let b2 = BumpFamily::new(2, 0.25, vec![vec![0, 1], vec![1, 0], vec![1, 1]], 2.0).unwrap();
        let f2 = b2.gridded(512).unwrap();
        assert!((f2.l2_norm_sq() - b2.norm_sq()).abs() < 1e-6);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = MappingSpec::constant(0.5)
            .with_component(
                1,
                Representation::EqualFactor {
                    profile: Profile::Sine {
                        amplitude: 1.0,
                        frequency: 1.0,
                        phase: 0.0,
                    },
                },
            )
            .with_component(2, Representation::Constant { value: 1.0 })
            .with_noise(NoiseSpec::Uniform { half_width: 0.3 });
        let text = serde_json::to_string(&spec).unwrap();
        let back: MappingSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
