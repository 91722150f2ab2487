//! Brownian paths and diffusion covariates on the uniform grid of `[0, 1]`.
//!
//! Everything here is value-semantics data; randomness only enters through an
//! explicit seed handed to [`sample_brownian`].

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::rng_from_seed;

/// Uniform grid `t_j = j/N`, `j = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TimeGrid {
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { n_steps })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 / self.n_steps as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|j| self.point(j))
    }
}

impl TryFrom<usize> for TimeGrid {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        TimeGrid::new(n)
    }
}

impl From<TimeGrid> for usize {
    fn from(g: TimeGrid) -> usize {
        g.n_steps
    }
}

pub fn make_grid(n_steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(n_steps)
}

/// A sampled Wiener path with `W(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl BrownianPath {
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(invalid(format!("Brownian path must start at 0, got {}", values[0])));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite path value at index {j}")));
        }
        Ok(Self { grid, values })
    }

    /// Builds a path with `W(0) = 0` from its increments.
    pub fn from_increments(grid: TimeGrid, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(invalid(format!(
                "{} increments for a grid with {} steps",
                increments.len(),
                grid.n_steps()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        values.push(0.0);
        for dw in increments {
            acc += dw;
            values.push(acc);
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.grid.n_steps()]
    }

    pub fn at(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Keeps every `factor`-th grid point; the coarse path is the same
    /// Brownian motion observed on a coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n_steps().is_multiple_of(factor) {
            return Err(Error::Alignment(format!(
                "coarsening factor {factor} does not divide N = {}",
                self.grid.n_steps()
            )));
        }
        let grid = TimeGrid::new(self.grid.n_steps() / factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self { grid, values })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_path_csv(self.grid, &self.values, out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (grid, values) = parse_path_csv(text)?;
        Self::from_values(grid, values)
    }
}

/// Standard Brownian motion on `grid`: independent `N(0, Δt)` increments drawn
/// from a ChaCha8 stream seeded with `seed`.
pub fn sample_brownian(grid: TimeGrid, seed: u64) -> BrownianPath {
    let increments = sample_increments(grid, seed);
    BrownianPath::from_increments(grid, &increments).expect("Gaussian increments are finite")
}

/// The increments of [`sample_brownian`] for the same `(grid, seed)`, without
/// materializing the path.
pub fn sample_increments(grid: TimeGrid, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let scale = grid.dt().sqrt();
    (0..grid.n_steps())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

pub type CoefficientFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `dX_t = b(t, X_t) dt + σ(t, X_t) dW_t` with user-supplied coefficients.
#[derive(Clone)]
pub struct GenericDiffusion {
    pub drift: CoefficientFn,
    pub diffusion: CoefficientFn,
    pub x0: f64,
}

impl fmt::Debug for GenericDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericDiffusion")
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum DiffusionSpec {
    /// `dX = −θ(X − μ)dt + σ dW`.
    OrnsteinUhlenbeck {
        theta: f64,
        mu: f64,
        sigma: f64,
        x0: f64,
    },
    /// `dX = X(μ dt + σ dW)`.
    GeometricBm {
        mu: f64,
        sigma: f64,
        x0: f64,
    },
    Generic(GenericDiffusion),
}

impl DiffusionSpec {
    pub fn ornstein_uhlenbeck(theta: f64, mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        let spec = Self::OrnsteinUhlenbeck { theta, mu, sigma, x0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn geometric(mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        let spec = Self::GeometricBm { mu, sigma, x0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn generic<B, S>(drift: B, diffusion: S, x0: f64) -> Self
    where
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::Generic(GenericDiffusion {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            x0,
        })
    }

    pub fn x0(&self) -> f64 {
        match self {
            Self::OrnsteinUhlenbeck { x0, .. } | Self::GeometricBm { x0, .. } => *x0,
            Self::Generic(g) => g.x0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite, got {v}")))
            }
        };
        match *self {
            Self::OrnsteinUhlenbeck { theta, mu, sigma, x0 } => {
                finite("mu", mu)?;
                finite("x0", x0)?;
                if !(theta > 0.0 && theta.is_finite()) {
                    return Err(invalid(format!("OU theta must be > 0, got {theta}")));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(invalid(format!("OU sigma must be > 0, got {sigma}")));
                }
            }
            Self::GeometricBm { mu, sigma, x0 } => {
                finite("mu", mu)?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(invalid(format!("GBM sigma must be > 0, got {sigma}")));
                }
                if !(x0 > 0.0 && x0.is_finite()) {
                    return Err(invalid(format!("GBM x0 must be > 0, got {x0}")));
                }
            }
            Self::Generic(ref g) => finite("x0", g.x0)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionPath {
    grid: TimeGrid,
    values: Vec<f64>,
    spec: DiffusionSpec,
}

impl DiffusionPath {
    /// Wraps observed values; `values[0]` must equal `spec.x0()`.
    pub fn from_values(spec: DiffusionSpec, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "diffusion path has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != spec.x0() {
            return Err(invalid(format!(
                "diffusion path starts at {}, spec x0 is {}",
                values[0],
                spec.x0()
            )));
        }
        Ok(Self { grid, values, spec })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_path_csv(self.grid, &self.values, out)
    }
}

fn check_sigma(t: f64, x: f64, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::SingularDiffusion { t, x, value })
    }
}

/// Drives `spec` with the Brownian path `w`.
///
/// GBM uses its exact pathwise solution; OU and generic diffusions use
/// Euler–Maruyama with left-point increments.
pub fn simulate_diffusion(spec: &DiffusionSpec, w: &BrownianPath) -> Result<DiffusionPath> {
    spec.validate()?;
    let grid = w.grid();
    let dt = grid.dt();
    let wv = w.values();
    let mut values = Vec::with_capacity(grid.len());
    match *spec {
        DiffusionSpec::GeometricBm { mu, sigma, x0 } => {
            values.push(x0);
            for (j, &wj) in wv.iter().enumerate().skip(1) {
                let t = grid.point(j);
                values.push(x0 * ((mu - 0.5 * sigma * sigma) * t + sigma * wj).exp());
            }
        }
        DiffusionSpec::OrnsteinUhlenbeck { theta, mu, sigma, x0 } => {
            let mut x = x0;
            values.push(x);
            for j in 0..grid.n_steps() {
                x += -theta * (x - mu) * dt + sigma * (wv[j + 1] - wv[j]);
                values.push(x);
            }
        }
        DiffusionSpec::Generic(ref g) => {
            let mut x = g.x0;
            values.push(x);
            for j in 0..grid.n_steps() {
                let t = grid.point(j);
                let s = (g.diffusion)(t, x);
                check_sigma(t, x, s)?;
                x += (g.drift)(t, x) * dt + s * (wv[j + 1] - wv[j]);
                values.push(x);
            }
        }
    }
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("diffusion blew up at grid index {j}")));
    }
    Ok(DiffusionPath {
        grid,
        values,
        spec: spec.clone(),
    })
}

/// Recovers the driving Brownian motion `W = φ(X)` from a diffusion path.
pub fn reconstruct_coprocess(spec: &DiffusionSpec, x: &DiffusionPath) -> Result<BrownianPath> {
    spec.validate()?;
    let grid = x.grid();
    let dt = grid.dt();
    let xv = x.values();
    if xv[0] != spec.x0() {
        return Err(invalid(format!("path starts at {}, spec x0 is {}", xv[0], spec.x0())));
    }
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    match *spec {
        DiffusionSpec::GeometricBm { mu, sigma, x0 } => {
            for (j, &xj) in xv.iter().enumerate().skip(1) {
                if !(xj > 0.0) {
                    return Err(Error::Domain(format!(
                        "GBM path value {xj} at index {j} is not positive"
                    )));
                }
                let t = grid.point(j);
                values.push(((xj / x0).ln() + (0.5 * sigma * sigma - mu) * t) / sigma);
            }
        }
        DiffusionSpec::OrnsteinUhlenbeck { theta, mu, sigma, x0 } => {
            let mut integral = 0.0;
            for j in 1..grid.len() {
                integral += 0.5 * ((xv[j - 1] - mu) + (xv[j] - mu)) * dt;
                values.push((xv[j] - x0 + theta * integral) / sigma);
            }
        }
        DiffusionSpec::Generic(ref g) => {
            let mut acc = 0.0;
            for j in 0..grid.n_steps() {
                let t = grid.point(j);
                let s = (g.diffusion)(t, xv[j]);
                check_sigma(t, xv[j], s)?;
                acc += (xv[j + 1] - xv[j] - (g.drift)(t, xv[j]) * dt) / s;
                values.push(acc);
            }
        }
    }
    BrownianPath::from_values(grid, values)
}

/// Writes `t,value` rows with 17 significant digits.
pub fn write_path_csv<W: Write>(grid: TimeGrid, values: &[f64], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t", "value"])?;
    for (t, v) in grid.points().zip(values) {
        wtr.write_record([format!("{t:.16e}"), format!("{v:.16e}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a `t,value` CSV. Times must form the uniform grid `j/N`.
pub fn parse_path_csv(text: &str) -> Result<(TimeGrid, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::Parse(format!("expected header `t,value`, got {headers:?}")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("row {row}: expected 2 fields")));
        }
        let t: f64 = rec[0]
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: bad t `{}`: {e}", &rec[0])))?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: bad value `{}`: {e}", &rec[1])))?;
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::Parse(format!("row {row}: non-finite entry")));
        }
        times.push(t);
        values.push(v);
    }
    if times.len() < 2 {
        return Err(Error::Parse("path CSV needs at least two rows".into()));
    }
    let grid = TimeGrid::new(times.len() - 1)?;
    for (j, &t) in times.iter().enumerate() {
        if (t - grid.point(j)).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "row {j}: time {t} is off the uniform grid (expected {})",
                grid.point(j)
            )));
        }
    }
    Ok((grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction() {
        let g = make_grid(1).unwrap();
        assert_eq!(g.points().collect::<Vec<_>>(), vec![0.0, 1.0]);
        let g = make_grid(4).unwrap();
        assert_eq!(g.points().collect::<Vec<_>>(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(matches!(make_grid(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn brownian_is_deterministic_and_starts_at_zero() {
        let g = make_grid(64).unwrap();
        let a = sample_brownian(g, 11);
        let b = sample_brownian(g, 11);
        assert_eq!(a, b);
        assert_eq!(a.values()[0], 0.0);
        assert_ne!(a, sample_brownian(g, 12));
    }

    #[test]
    fn single_step_path_is_a_standard_gaussian_draw() {
        let g = make_grid(1).unwrap();
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|s| sample_brownian(g, crate::seed::derive_seed(5, s)).terminal())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn identity_diffusion_reproduces_w() {
        let g = make_grid(128).unwrap();
        let w = sample_brownian(g, 3);
        let spec = DiffusionSpec::generic(|_, _| 0.0, |_, _| 1.0, 0.0);
        let x = simulate_diffusion(&spec, &w).unwrap();
        assert_eq!(x.values(), w.values());
        let back = reconstruct_coprocess(&spec, &x).unwrap();
        assert_eq!(back.values(), w.values());
    }

    #[test]
    fn gbm_on_flat_path_is_exponential() {
        let g = make_grid(16).unwrap();
        let w = BrownianPath::from_values(g, vec![0.0; 17]).unwrap();
        let spec = DiffusionSpec::geometric(0.3, 0.7, 2.0).unwrap();
        let x = simulate_diffusion(&spec, &w).unwrap();
        for (j, &v) in x.values().iter().enumerate() {
            let t = g.point(j);
            assert!((v - 2.0 * ((0.3 - 0.5 * 0.49) * t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn gbm_round_trip_is_float_exact() {
        let g = make_grid(512).unwrap();
        let spec = DiffusionSpec::geometric(0.05, 0.4, 1.5).unwrap();
        for seed in 0..10 {
            let w = sample_brownian(g, seed);
            let x = simulate_diffusion(&spec, &w).unwrap();
            let back = reconstruct_coprocess(&spec, &x).unwrap();
            let err = back
                .values()
                .iter()
                .zip(w.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-9, "seed {seed}: {err}");
        }
    }

    #[test]
    fn singular_generic_diffusion_is_reported() {
        let g = make_grid(8).unwrap();
        let w = sample_brownian(g, 1);
        let spec = DiffusionSpec::generic(|_, _| 0.0, |t, _| if t < 0.5 { 1.0 } else { 0.0 }, 0.0);
        assert!(matches!(
            simulate_diffusion(&spec, &w),
            Err(Error::SingularDiffusion { .. })
        ));
    }

    #[test]
    fn gbm_reconstruction_rejects_non_positive_values() {
        let g = make_grid(2).unwrap();
        let spec = DiffusionSpec::geometric(0.0, 1.0, 1.0).unwrap();
        let x = DiffusionPath::from_values(spec.clone(), g, vec![1.0, -0.5, 1.0]).unwrap();
        assert!(matches!(reconstruct_coprocess(&spec, &x), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(DiffusionSpec::geometric(0.0, 1.0, 0.0).is_err());
        assert!(DiffusionSpec::geometric(0.0, -1.0, 1.0).is_err());
        assert!(DiffusionSpec::ornstein_uhlenbeck(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(DiffusionSpec::ornstein_uhlenbeck(1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_bits() {
        let g = make_grid(10).unwrap();
        let w = sample_brownian(g, 99);
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,value\n"));
        let back = BrownianPath::from_csv(&text).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn csv_parser_rejects_garbage() {
        assert!(parse_path_csv("").is_err());
        assert!(parse_path_csv("t,value\n0,0\n").is_err());
        assert!(parse_path_csv("t,value\n0,0\n0.7,1\n").is_err());
        assert!(parse_path_csv("x,y\n0,0\n1,1\n").is_err());
        assert!(parse_path_csv("t,value\n0,0\n1,NaN\n").is_err());
        assert!(BrownianPath::from_csv("t,value\n0,1\n1,1\n").is_err());
    }

    #[test]
    fn coarsen_keeps_shared_nodes() {
        let g = make_grid(8).unwrap();
        let w = sample_brownian(g, 4);
        let c = w.coarsen(4).unwrap();
        assert_eq!(c.values(), &[w.at(0), w.at(4), w.at(8)]);
        assert!(w.coarsen(3).is_err());
    }
}
