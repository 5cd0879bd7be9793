//! What the samplers and the optimizer need from a model: synthetic
//! likelihood moments at a working-space parameter, and a prior.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{self, SimRng};
use crate::sim::{SimError, Simulator};
use crate::synlik::{self, SlError, SyntheticLikelihoodEstimate, LN_2PI};
use crate::wg::{self, WgError, WgTransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sl(#[from] SlError),
    #[error(transparent)]
    Wg(#[from] WgError),
}

pub trait SyntheticModel: Sync {
    fn param_dim(&self) -> usize;
    fn summary_dim(&self) -> usize;

    /// Mean and covariance of `n_sims` simulated summaries at working-space
    /// `theta`, mapped through `transform` when one is given.
    fn estimate(
        &self,
        theta: &[f64],
        n_sims: usize,
        transform: Option<&WgTransform>,
        rng: &mut SimRng,
    ) -> Result<SyntheticLikelihoodEstimate, ModelError>;
}

/// Simulates summaries with a [`Simulator`]; parameters arrive in working
/// space and are constrained before simulation.
pub struct SimulatorModel<'a> {
    pub simulator: &'a dyn Simulator,
}

impl<'a> SimulatorModel<'a> {
    pub fn new(simulator: &'a dyn Simulator) -> Self {
        Self { simulator }
    }

    /// `n` summary vectors at working-space `theta`. Each draw gets its own
    /// child stream, so the result does not depend on thread count.
    pub fn simulate_summaries(
        &self,
        theta: &[f64],
        n: usize,
        rng: &mut SimRng,
    ) -> Result<Vec<Vec<f64>>, SimError> {
        let natural = self.simulator.constrain(theta);
        let base: u64 = rng.random();
        (0..n as u64)
            .into_par_iter()
            .map(|j| self.simulator.simulate_summary(&natural, &mut rng::stream(base, &[j])))
            .collect()
    }
}

impl SyntheticModel for SimulatorModel<'_> {
    fn param_dim(&self) -> usize {
        self.simulator.param_dim()
    }

    fn summary_dim(&self) -> usize {
        self.simulator.summary_dim()
    }

    fn estimate(
        &self,
        theta: &[f64],
        n_sims: usize,
        transform: Option<&WgTransform>,
        rng: &mut SimRng,
    ) -> Result<SyntheticLikelihoodEstimate, ModelError> {
        let summaries = self.simulate_summaries(theta, n_sims, rng)?;
        match transform {
            Some(t) => Ok(wg::wg_moments(t, &summaries)?),
            None => Ok(synlik::sample_moments(&summaries)?),
        }
    }
}

/// Closed-form test model: the estimate is exactly `N(θ, I)` whatever the
/// simulation budget, so the synthetic likelihood is `φ(s; θ, I)`.
#[derive(Debug, Clone)]
pub struct GaussianLocationModel {
    pub dim: usize,
}

impl SyntheticModel for GaussianLocationModel {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn summary_dim(&self) -> usize {
        self.dim
    }

    fn estimate(
        &self,
        theta: &[f64],
        _n_sims: usize,
        _transform: Option<&WgTransform>,
        _rng: &mut SimRng,
    ) -> Result<SyntheticLikelihoodEstimate, ModelError> {
        let mean = nalgebra::DVector::from_column_slice(theta);
        let cov = nalgebra::DMatrix::identity(self.dim, self.dim);
        Ok(SyntheticLikelihoodEstimate::from_moments(mean, cov)?)
    }
}

/// Independent normal prior on the working parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl GaussianPrior {
    pub fn isotropic(p: usize, sd: f64) -> Self {
        Self { mean: vec![0.0; p], sd: vec![sd; p] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((t, m), s)| {
                let z = (t - m) / s;
                -0.5 * LN_2PI - s.ln() - 0.5 * z * z
            })
            .sum()
    }
}
