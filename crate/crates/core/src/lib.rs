//! Nonparametric regression with a Brownian-path covariate.
//!
//! A response `Y = m(W) + ε` is modelled through the Wiener–Itô chaos
//! expansion of `m(W)`:
//!
//! ```text
//! m(W) = a + Σ_ℓ (1/ℓ!) I_ℓ(f_ℓ)(W)
//! ```
//!
//! Each kernel `f_ℓ` on `[0,1]^ℓ` is estimated by averaging `Y_i` against the
//! multiple Wiener integral of a boundary-corrected product kernel, and the
//! bandwidth of every order can be picked from the data with a
//! Goldenshluger–Lepski rule.
//!
//! Modules, bottom-up:
//!
//! - [`pathlab`]: time grids, Brownian paths, diffusions and coprocess reconstruction.
//! - [`kernelkit`]: vanishing-moment kernels and their bandwidthed tensor products.
//! - [`chaoscalc`]: single and multiple Wiener integrals plus Monte Carlo validators.
//! - [`chaosreg`]: the chaos-kernel estimators, plugin regression and risk.
//! - [`glselect`]: data-driven bandwidth selection.
//! - [`mappingzoo`]: ground-truth mappings, data synthesis and hard instances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaoscalc;
pub mod chaosreg;
pub mod error;
pub mod glselect;
pub mod kernelkit;
pub mod mappingzoo;
pub mod pathlab;
pub mod quad;
pub mod seed;

pub use error::{Error, Result};
