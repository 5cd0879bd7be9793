//! Benchmark simulators behind a common simulate-and-summarize interface.

pub mod gnk;
pub mod quantile;
pub mod stable;
pub mod toads;
pub mod toy;

use thiserror::Error;

use crate::rng::SimRng;

pub use gnk::{gnk_quantile, gnk_simulate, gnk_summarize};
pub use stable::{alpha_stable_simulate, alpha_stable_summarize};
pub use toads::{toads_simulate, toads_summarize, ToadsObservation, ToadsSummary};
pub use toy::{toy_simulate, toy_summarize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} observations, got {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("degenerate sample")]
    DegenerateSample,
    #[error("non-finite data")]
    NonFinite,
    #[error("unknown simulator `{0}`")]
    Unknown(String),
}

/// Raw output of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Univariate(Vec<f64>),
    Toads(ToadsObservation),
}

/// A data-generating process plus its summary statistics and the map
/// between the unconstrained working space and natural parameters.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;
    fn param_names(&self) -> &'static [&'static str];
    fn summary_dim(&self) -> usize;

    fn param_dim(&self) -> usize {
        self.param_names().len()
    }

    /// One dataset at natural parameters `theta`.
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Dataset, SimError>;
    fn summarize(&self, data: &Dataset) -> Result<Vec<f64>, SimError>;

    fn simulate_summary(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimError> {
        let data = self.simulate(theta, rng)?;
        self.summarize(&data)
    }

    fn constrain(&self, working: &[f64]) -> Vec<f64>;
    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>, SimError>;
    /// Diagonal of `∂θ/∂θ̃`; every map here acts coordinate-wise.
    fn constrain_jacobian(&self, working: &[f64]) -> Vec<f64>;
}

fn univariate(data: &Dataset) -> Result<&[f64], SimError> {
    match data {
        Dataset::Univariate(v) => Ok(v),
        Dataset::Toads(_) => Err(SimError::InvalidParameter("expected a univariate dataset".into())),
    }
}

fn check_len(theta: &[f64], p: usize) -> Result<(), SimError> {
    if theta.len() == p {
        Ok(())
    } else {
        Err(SimError::DimensionMismatch { expected: p, found: theta.len() })
    }
}

/// Location model with skewed errors; identity reparameterization.
#[derive(Debug, Clone)]
pub struct Toy {
    pub n: usize,
}

impl Simulator for Toy {
    fn name(&self) -> &'static str {
        "toy"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["theta"]
    }
    fn summary_dim(&self) -> usize {
        2
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Dataset, SimError> {
        check_len(theta, 1)?;
        toy_simulate(theta[0], self.n, rng).map(Dataset::Univariate)
    }
    fn summarize(&self, data: &Dataset) -> Result<Vec<f64>, SimError> {
        toy_summarize(univariate(data)?).map(Vec::from)
    }
    fn constrain(&self, working: &[f64]) -> Vec<f64> {
        working.to_vec()
    }
    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>, SimError> {
        check_len(theta, 1)?;
        Ok(theta.to_vec())
    }
    fn constrain_jacobian(&self, _working: &[f64]) -> Vec<f64> {
        vec![1.0]
    }
}

#[derive(Debug, Clone)]
pub struct AlphaStable {
    pub n: usize,
}

impl Simulator for AlphaStable {
    fn name(&self) -> &'static str {
        "alpha-stable"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["alpha", "beta", "gamma", "delta"]
    }
    fn summary_dim(&self) -> usize {
        4
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Dataset, SimError> {
        alpha_stable_simulate(theta, self.n, rng).map(Dataset::Univariate)
    }
    fn summarize(&self, data: &Dataset) -> Result<Vec<f64>, SimError> {
        alpha_stable_summarize(univariate(data)?).map(Vec::from)
    }
    fn constrain(&self, working: &[f64]) -> Vec<f64> {
        stable::stable_constrain(working)
    }
    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>, SimError> {
        stable::stable_unconstrain(theta)
    }
    fn constrain_jacobian(&self, working: &[f64]) -> Vec<f64> {
        stable::stable_constrain_jacobian(working)
    }
}

#[derive(Debug, Clone)]
pub struct GAndK {
    pub n: usize,
}

impl Simulator for GAndK {
    fn name(&self) -> &'static str {
        "g-and-k"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "B", "g", "k"]
    }
    fn summary_dim(&self) -> usize {
        4
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Dataset, SimError> {
        gnk_simulate(theta, self.n, rng).map(Dataset::Univariate)
    }
    fn summarize(&self, data: &Dataset) -> Result<Vec<f64>, SimError> {
        gnk_summarize(univariate(data)?).map(Vec::from)
    }
    fn constrain(&self, working: &[f64]) -> Vec<f64> {
        gnk::gnk_constrain(working)
    }
    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>, SimError> {
        gnk::gnk_unconstrain(theta)
    }
    fn constrain_jacobian(&self, working: &[f64]) -> Vec<f64> {
        gnk::gnk_constrain_jacobian(working)
    }
}

/// Toads movement; a summary that hit the sentinel counts as a failed
/// simulation unless `allow_degenerate` is set.
#[derive(Debug, Clone)]
pub struct Toads {
    pub days: usize,
    pub toads: usize,
    pub allow_degenerate: bool,
}

impl Default for Toads {
    fn default() -> Self {
        Self { days: toads::DEFAULT_DAYS, toads: toads::DEFAULT_TOADS, allow_degenerate: false }
    }
}

impl Simulator for Toads {
    fn name(&self) -> &'static str {
        "toads"
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["alpha", "gamma", "p0"]
    }
    fn summary_dim(&self) -> usize {
        12
    }
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Dataset, SimError> {
        toads_simulate(theta, self.days, self.toads, rng).map(Dataset::Toads)
    }
    fn summarize(&self, data: &Dataset) -> Result<Vec<f64>, SimError> {
        let Dataset::Toads(obs) = data else {
            return Err(SimError::InvalidParameter("expected a toads observation".into()));
        };
        let summary = toads_summarize(obs);
        if summary.degenerate && !self.allow_degenerate {
            return Err(SimError::DegenerateSample);
        }
        Ok(summary.values.to_vec())
    }
    fn constrain(&self, working: &[f64]) -> Vec<f64> {
        toads::toads_constrain(working)
    }
    fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>, SimError> {
        toads::toads_unconstrain(theta)
    }
    fn constrain_jacobian(&self, working: &[f64]) -> Vec<f64> {
        toads::toads_constrain_jacobian(working)
    }
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 4] = ["toy", "alpha-stable", "g-and-k", "toads"];

/// Builds a simulator from its registry name. `n` is the dataset size for
/// the univariate models and the number of days for toads (`n_toads`
/// columns).
pub fn by_name(name: &str, n: usize, n_toads: usize) -> Result<Box<dyn Simulator>, SimError> {
    Ok(match name {
        "toy" => Box::new(Toy { n }),
        "alpha-stable" => Box::new(AlphaStable { n }),
        "g-and-k" => Box::new(GAndK { n }),
        "toads" => Box::new(Toads { days: n, toads: n_toads, allow_degenerate: false }),
        other => return Err(SimError::Unknown(other.to_string())),
    })
}
