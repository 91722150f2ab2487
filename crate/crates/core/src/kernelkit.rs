//! Vanishing-moment kernels on `[0, 1]` and the boundary-corrected product
//! kernel `K_h^(ℓ)(t, u) = h^-ℓ Π_k k(ς(t_k)(t_k − u_k)/h)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chaoscalc::Integrand;
use crate::error::{invalid, Error, Result};
use crate::quad::GaussRule;

/// Number of vanishing moments for smoothness `s`: the largest integer
/// strictly below `s`.
pub fn moment_order_for(s_star: f64) -> usize {
    (s_star.ceil() as usize).saturating_sub(1)
}

/// Degree-`m` polynomial kernel on `[0, 1]` with `∫k = 1` and
/// `∫xˢk = 0` for `s = 1..=m`, stored in the shifted-Legendre basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelDescriptor", into = "KernelDescriptor")]
pub struct MomentKernel {
    moment_order: usize,
    poly_coeffs: Vec<f64>,
    l2_norm: f64,
}

/// JSON form of a [`MomentKernel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelDescriptor {
    pub moment_order: usize,
    pub poly_coeffs: Vec<f64>,
    pub l2_norm: f64,
}

impl TryFrom<KernelDescriptor> for MomentKernel {
    type Error = Error;

    fn try_from(d: KernelDescriptor) -> Result<Self> {
        let k = MomentKernel::from_coefficients(d.moment_order, d.poly_coeffs)?;
        if !d.l2_norm.is_finite() || (k.l2_norm - d.l2_norm).abs() > 1e-9 * k.l2_norm.max(1.0) {
            return Err(Error::Parse(format!(
                "kernel l2_norm {} disagrees with its coefficients ({})",
                d.l2_norm, k.l2_norm
            )));
        }
        Ok(k)
    }
}

impl From<MomentKernel> for KernelDescriptor {
    fn from(k: MomentKernel) -> Self {
        Self {
            moment_order: k.moment_order,
            poly_coeffs: k.poly_coeffs,
            l2_norm: k.l2_norm,
        }
    }
}

/// Shifted Legendre values `P̃_0(x)..P̃_m(x)` written into `out`.
fn shifted_legendre(x: f64, out: &mut [f64]) {
    let y = 2.0 * x - 1.0;
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = y;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0) * y * out[j] - jf * out[j - 1]) / (jf + 1.0);
    }
}

const MAX_STACK_DEGREE: usize = 32;

impl MomentKernel {
    /// Legendre reproducing kernel at 0: `k(x) = Σ_j (2j+1) P̃_j(0) P̃_j(x)`.
    pub fn build(s_star: f64) -> Result<Self> {
        if !(s_star > 0.0 && s_star.is_finite()) {
            return Err(invalid(format!("s* must be positive and finite, got {s_star}")));
        }
        let m = moment_order_for(s_star);
        let coeffs = (0..=m)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                (2 * j + 1) as f64 * sign
            })
            .collect();
        Self::from_coefficients(m, coeffs)
    }

    /// Kernel with explicit shifted-Legendre coefficients. No moment
    /// conditions are enforced here; see [`MomentKernel::moment_residuals`].
    pub fn from_coefficients(moment_order: usize, poly_coeffs: Vec<f64>) -> Result<Self> {
        if poly_coeffs.len() != moment_order + 1 {
            return Err(invalid(format!(
                "moment order {moment_order} needs {} coefficients, got {}",
                moment_order + 1,
                poly_coeffs.len()
            )));
        }
        if moment_order >= MAX_STACK_DEGREE {
            return Err(invalid(format!("moment order {moment_order} is too large")));
        }
        if poly_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("kernel coefficients must be finite"));
        }
        let l2_sq: f64 = poly_coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * c / (2 * j + 1) as f64)
            .sum();
        Ok(Self {
            moment_order,
            poly_coeffs,
            l2_norm: l2_sq.sqrt(),
        })
    }

    pub fn moment_order(&self) -> usize {
        self.moment_order
    }

    pub fn poly_coeffs(&self) -> &[f64] {
        &self.poly_coeffs
    }

    /// `‖k‖` in `L²([0, 1])`.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm
    }

    /// Polynomial value on the closed interval `[0, 1]`, zero outside.
    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let mut p = [0.0; MAX_STACK_DEGREE + 1];
        let p = &mut p[..self.poly_coeffs.len()];
        shifted_legendre(x, p);
        self.poly_coeffs.iter().zip(p.iter()).map(|(c, v)| c * v).sum()
    }

    /// `∫_0^x k`, with `x` clamped to `[0, 1]`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let m = self.poly_coeffs.len();
        let mut p = [0.0; MAX_STACK_DEGREE + 2];
        let p = &mut p[..m + 1];
        shifted_legendre(x, p);
        let mut acc = self.poly_coeffs[0] * x;
        for j in 1..m {
            // ∫_{-1}^{y} P_j = (P_{j+1} − P_{j−1})/(2j+1), and dx = dy/2.
            let prim = (p[j + 1] - p[j - 1]) / (2 * j + 1) as f64;
            acc += self.poly_coeffs[j] * 0.5 * prim;
        }
        acc
    }

    /// `∫_a^b k` over `[a, b] ∩ [0, 1]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }

    /// `[∫k − 1, ∫x k, …, ∫x^m k]` under composite Gauss–Legendre quadrature
    /// with `quad_points` nodes.
    pub fn moment_residuals(&self, quad_points: usize) -> Vec<f64> {
        let rule = GaussRule::new(5);
        let panels = (quad_points / 5).max(1);
        (0..=self.moment_order)
            .map(|s| {
                let v = rule.integrate_composite(|x| x.powi(s as i32) * self.eval(x), 0.0, 1.0, panels);
                if s == 0 {
                    v - 1.0
                } else {
                    v
                }
            })
            .collect()
    }
}

pub fn build_kernel(s_star: f64) -> Result<MomentKernel> {
    MomentKernel::build(s_star)
}

pub fn eval_univariate(k: &MomentKernel, x: f64) -> f64 {
    k.eval(x)
}

/// `ς(t) = 2·1_{(1/2, 1)}(t) − 1`.
pub fn boundary_sign(t: f64) -> f64 {
    if t > 0.5 && t < 1.0 {
        1.0
    } else {
        -1.0
    }
}

/// `K_h^(ℓ)` for a fixed base kernel, bandwidth and order.
#[derive(Debug, Clone)]
pub struct BandwidthedKernel {
    base: Arc<MomentKernel>,
    h: f64,
    order: usize,
}

impl BandwidthedKernel {
    pub fn new(base: Arc<MomentKernel>, h: f64, order: usize) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(invalid(format!("bandwidth must lie in (0, 1), got {h}")));
        }
        if order == 0 {
            return Err(invalid("chaos order must be at least 1"));
        }
        Ok(Self { base, h, order })
    }

    pub fn base(&self) -> &MomentKernel {
        &self.base
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn check_dims(&self, x: &[f64]) {
        assert_eq!(x.len(), self.order, "point dimension must equal the chaos order");
    }

    pub fn eval(&self, t: &[f64], u: &[f64]) -> f64 {
        self.check_dims(t);
        self.check_dims(u);
        t.iter()
            .zip(u)
            .map(|(&tk, &uk)| self.base.eval(boundary_sign(tk) * (tk - uk) / self.h) / self.h)
            .product()
    }

    /// Tensor factors `g_k(u) = h⁻¹ k(ς(t_k)(t_k − u)/h)`, so that
    /// `K(t, u) = Π_k g_k(u_k)`.
    pub fn slices(&self, t: &[f64]) -> Vec<KernelSlice> {
        self.check_dims(t);
        t.iter()
            .map(|&tk| KernelSlice::new(self.base.clone(), tk, self.h))
            .collect()
    }
}

pub fn eval_multivariate(k: &BandwidthedKernel, t: &[f64], u: &[f64]) -> f64 {
    k.eval(t, u)
}

pub fn kernel_slices(k: &BandwidthedKernel, t: &[f64]) -> Vec<KernelSlice> {
    k.slices(t)
}

/// One factor of `K_h^(ℓ)(t, ·)`.
#[derive(Debug, Clone)]
pub struct KernelSlice {
    kernel: Arc<MomentKernel>,
    center: f64,
    sign: f64,
    h: f64,
}

impl KernelSlice {
    pub fn new(kernel: Arc<MomentKernel>, center: f64, h: f64) -> Self {
        Self {
            kernel,
            center,
            sign: boundary_sign(center),
            h,
        }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// Closed support: `[t, t+h]` when `ς(t) = −1`, `[t−h, t]` otherwise.
    pub fn support(&self) -> (f64, f64) {
        if self.sign < 0.0 {
            (self.center, self.center + self.h)
        } else {
            (self.center - self.h, self.center)
        }
    }

    fn arg(&self, u: f64) -> f64 {
        self.sign * (self.center - u) / self.h
    }
}

impl Integrand for KernelSlice {
    fn eval(&self, u: f64) -> f64 {
        self.kernel.eval(self.arg(u)) / self.h
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if self.sign < 0.0 {
            self.kernel.integral(self.arg(a), self.arg(b))
        } else {
            self.kernel.integral(self.arg(b), self.arg(a))
        }
    }

    fn support(&self) -> (f64, f64) {
        KernelSlice::support(self)
    }
}
