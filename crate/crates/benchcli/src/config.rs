//! Experiment configuration (TOML).

use serde::{Deserialize, Serialize};
use wienerchaos::glselect::MajorantParams;
use wienerchaos::mappingzoo::{quadratic_terminal, MappingSpec, NoiseSpec, Profile, Representation};

use crate::CliError;

fn default_path_steps() -> usize {
    512
}
fn default_grid_size() -> usize {
    64
}
fn default_s_star_hi() -> f64 {
    2.0
}
fn default_s_star_lo() -> f64 {
    0.5
}
fn default_p() -> f64 {
    2.0
}
fn default_replications() -> usize {
    1
}
fn default_n_mc() -> usize {
    2000
}
fn default_check_n_mc() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth: TruthSource,
    pub n_list: Vec<usize>,
    /// Path resolution `N`.
    #[serde(default = "default_path_steps")]
    pub path_steps: usize,
    /// Evaluation grid `G` per axis.
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Top chaos order `L`.
    pub max_order: usize,
    #[serde(default = "default_s_star_hi")]
    pub s_star_hi: f64,
    #[serde(default = "default_s_star_lo")]
    pub s_star_lo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majorant: Option<MajorantConfig>,
    pub bandwidth: BandwidthMode,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub risk: RiskConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateConfig>,
    #[serde(default)]
    pub check: CheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSource {
    Preset(PresetTruth),
    Inline(MappingSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetTruth {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MajorantConfig {
    /// Defaults to `(E ε⁴)^{1/4}` of the truth's noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu4: Option<f64>,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderBandwidth {
    pub order: usize,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderSmoothness {
    pub order: usize,
    pub s: f64,
    #[serde(default = "one")]
    pub lambda: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthMode {
    Fixed {
        values: Vec<OrderBandwidth>,
    },
    /// `h_ℓ = (Λ_ℓ² n)^{-1/(2s_ℓ+ℓ)}`.
    Theoretical {
        orders: Vec<OrderSmoothness>,
    },
    /// Infinite-chaos rule: `L_n = ⌊√ln n⌋`, `h_ℓ = (C₂^{2L_n}/(Λ² n))^{1/(2s+ℓ)}`.
    /// `practical = true` drops the `C₂^{2L_n}` factor.
    InfiniteChaos {
        s: f64,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        practical: bool,
    },
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    /// Also report a Monte Carlo estimate when `p = 2`.
    #[serde(default)]
    pub monte_carlo: bool,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            n_mc: default_n_mc(),
            monte_carlo: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    /// Smoothness per order for the theoretical exponent.
    pub smoothness: Vec<OrderSmoothness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_check_n_mc")]
    pub n_mc: usize,
    /// Added to every kernel coefficient before checking; nonzero values
    /// exercise the failure path.
    #[serde(default)]
    pub kernel_perturbation: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            n_mc: default_check_n_mc(),
            kernel_perturbation: 0.0,
        }
    }
}

pub const PRESETS: [&str; 3] = ["quadratic_terminal", "smooth_linear", "two_order_mix"];

/// Named truths used by the shipped configurations.
pub fn preset(name: &str) -> Option<MappingSpec> {
    let sine = |frequency| Profile::Sine {
        amplitude: 1.0,
        frequency,
        phase: 0.0,
    };
    match name {
        "quadratic_terminal" => Some(quadratic_terminal()),
        // m(W) = 1/2 + ∫ sin(πu) dW_u.
        "smooth_linear" => {
            Some(MappingSpec::constant(0.5).with_component(1, Representation::EqualFactor { profile: sine(0.5) }))
        }
        // m(W) = ∫ (1/2 + u) dW_u + I₂(sin(π·)^{⊗2})/2.
        "two_order_mix" => Some(
            MappingSpec::constant(0.0)
                .with_component(
                    1,
                    Representation::EqualFactor {
                        profile: Profile::Polynomial { coeffs: vec![0.5, 1.0] },
                    },
                )
                .with_component(2, Representation::EqualFactor { profile: sine(0.5) }),
        ),
        _ => None,
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn truth(&self) -> Result<MappingSpec, CliError> {
        let spec = match &self.truth {
            TruthSource::Preset(p) => {
                let mut spec = preset(&p.preset).ok_or_else(|| {
                    field(
                        "truth.preset",
                        format!("unknown preset {:?} (known: {})", p.preset, PRESETS.join(", ")),
                    )
                })?;
                if let Some(noise) = p.noise {
                    spec.noise = noise;
                }
                spec
            }
            TruthSource::Inline(spec) => spec.clone(),
        };
        spec.validate().map_err(|e| field("truth", e))?;
        Ok(spec)
    }

    pub fn majorant_params(&self, kernel_l2: f64) -> Result<MajorantParams, CliError> {
        let m = self
            .majorant
            .ok_or_else(|| field("majorant", "required in adaptive mode"))?;
        let mu4 = match m.mu4 {
            Some(v) => v,
            None => self.truth()?.noise.mu4(),
        };
        let params = MajorantParams {
            mu4,
            m: m.m,
            max_order: self.max_order,
            kernel_l2,
        };
        params.validate().map_err(|e| field("majorant", e))?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.truth()?;
        if self.n_list.is_empty() {
            return Err(field("n_list", "must be non-empty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("n_list", "must be strictly increasing"));
        }
        if self.n_list[0] < 2 {
            return Err(field("n_list", "sample sizes must be at least 2"));
        }
        if self.path_steps == 0 {
            return Err(field("path_steps", "must be positive"));
        }
        if self.grid_size < 2 {
            return Err(field("grid_size", "must be at least 2"));
        }
        if !self.path_steps.is_multiple_of(self.grid_size) {
            return Err(field(
                "grid_size",
                format!("{} does not divide path_steps = {}", self.grid_size, self.path_steps),
            ));
        }
        if self.max_order == 0 {
            return Err(field("max_order", "must be at least 1"));
        }
        for (name, v) in [("s_star_hi", self.s_star_hi), ("s_star_lo", self.s_star_lo)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(field("p", format!("risk exponent must be ≥ 2, got {}", self.p)));
        }
        if self.replications == 0 {
            return Err(field("replications", "must be at least 1"));
        }
        if self.risk.n_mc < 100 {
            return Err(field("risk.n_mc", "must be at least 100"));
        }
        if self.check.n_mc < 100 {
            return Err(field("check.n_mc", "must be at least 100"));
        }
        if let Some(m) = self.majorant {
            if !(m.m > 0.0) || m.mu4.is_some_and(|v| !(v > 0.0)) {
                return Err(field("majorant", "m and mu4 must be positive"));
            }
        }
        let positive_smoothness = |list: &[OrderSmoothness], name: &str| -> Result<(), CliError> {
            for o in list {
                if o.order == 0 || !(o.s > 0.0) || !(o.lambda > 0.0) {
                    return Err(field(
                        name,
                        format!("order ≥ 1, s > 0 and lambda > 0 required, got {o:?}"),
                    ));
                }
            }
            Ok(())
        };
        match &self.bandwidth {
            BandwidthMode::Fixed { values } => {
                if values.is_empty() {
                    return Err(field("bandwidth.values", "must list at least one order"));
                }
                for v in values {
                    if v.order == 0 || v.order > self.max_order || !(v.h > 0.0 && v.h < 1.0) {
                        return Err(field(
                            "bandwidth.values",
                            format!("need 1 ≤ order ≤ max_order and h in (0, 1), got {v:?}"),
                        ));
                    }
                }
            }
            BandwidthMode::Theoretical { orders } => {
                if orders.is_empty() {
                    return Err(field("bandwidth.orders", "must list at least one order"));
                }
                positive_smoothness(orders, "bandwidth.orders")?;
                if orders.iter().any(|o| o.order > self.max_order) {
                    return Err(field("bandwidth.orders", "orders must not exceed max_order"));
                }
            }
            BandwidthMode::InfiniteChaos { s, lambda, .. } => {
                if !(*s > 0.0) || !(*lambda > 0.0) {
                    return Err(field("bandwidth", "s and lambda must be positive"));
                }
            }
            BandwidthMode::Adaptive => {
                if self.majorant.is_none() {
                    return Err(field("majorant", "required in adaptive mode"));
                }
                self.majorant_params(1.0)?;
            }
        }
        if let Some(rate) = &self.rate {
            if rate.smoothness.is_empty() {
                return Err(field("rate.smoothness", "must list at least one order"));
            }
            positive_smoothness(&rate.smoothness, "rate.smoothness")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        n_list = [500, 1000]
        max_order = 2
        replications = 2
        seed = 7

        [truth]
        preset = "quadratic_terminal"
        noise = { kind = "gaussian", sigma = 0.5 }

        [bandwidth]
        mode = "fixed"
        values = [{ order = 2, h = 0.25 }]
    "#;

    #[test]
    fn parses_defaults() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.path_steps, 512);
        assert_eq!(cfg.grid_size, 64);
        assert_eq!(cfg.s_star_lo, 0.5);
        assert_eq!(cfg.truth().unwrap().noise, NoiseSpec::Gaussian { sigma: 0.5 });
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn inline_truth() {
        let text = r#"
            n_list = [100]
            max_order = 1
            [truth]
            a = 0.5
            components = [{ order = 1, kind = "equal_factor", profile = { kind = "sine", amplitude = 1.0, frequency = 0.5, phase = 0.0 } }]
            noise = { kind = "uniform", half_width = 0.2 }
            [bandwidth]
            mode = "theoretical"
            orders = [{ order = 1, s = 1.0 }]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(
            cfg.truth().unwrap(),
            preset("smooth_linear")
                .unwrap()
                .with_noise(NoiseSpec::Uniform { half_width: 0.2 })
        );
    }

    fn rejects(edit: &str, needle: &str) {
        let text = format!("{edit}\n{BASE}");
        match ExperimentConfig::from_toml(&text) {
            Err(CliError::Validation(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("expected a validation error mentioning {needle}, got {other:?}"),
        }
    }

    #[test]
    fn field_level_rejections() {
        rejects("grid_size = 60", "grid_size");
        rejects("s_star_lo = -1.0", "s_star_lo");
        rejects("p = 1.0", "p:");
        let empty = BASE.replace("n_list = [500, 1000]", "n_list = []");
        assert!(matches!(ExperimentConfig::from_toml(&empty), Err(CliError::Validation(m)) if m.contains("n_list")));
        let unsorted = BASE.replace("n_list = [500, 1000]", "n_list = [1000, 500]");
        assert!(ExperimentConfig::from_toml(&unsorted).is_err());
        let preset = BASE.replace("quadratic_terminal", "nope");
        assert!(
            matches!(ExperimentConfig::from_toml(&preset), Err(CliError::Validation(m)) if m.contains("truth.preset"))
        );
        let adaptive = BASE.replace(
            "mode = \"fixed\"\n        values = [{ order = 2, h = 0.25 }]",
            "mode = \"adaptive\"",
        );
        assert!(
            matches!(ExperimentConfig::from_toml(&adaptive), Err(CliError::Validation(m)) if m.contains("majorant"))
        );
        assert!(ExperimentConfig::from_toml("n_list = [").is_err());
    }
}
