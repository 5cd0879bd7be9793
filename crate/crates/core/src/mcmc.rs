//! Pseudo-marginal random-walk Metropolis on the synthetic-likelihood
//! posterior, jointly over `(θ, Γ)` for the robust variants.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{GaussianPrior, SyntheticModel};
use crate::rng::{self, tag};
use crate::synlik::{self, GammaPrior, SlMethod};
use crate::wg::WgTransform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McmcError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state has zero prior density")]
    InitOutsideSupport,
    #[error("could not evaluate the initial state: {0}")]
    InitFailed(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub iterations: usize,
    /// Random-walk standard deviation per working parameter.
    pub proposal_scale: Vec<f64>,
    /// Random-walk standard deviation for each `Γ` component.
    pub gamma_scale: f64,
    pub n_sims: usize,
    pub method: SlMethod,
    pub gamma_prior: GammaPrior,
    /// Iterations at the start during which the scales are tuned; at most a
    /// quarter of `iterations`.
    pub adapt_iters: usize,
    /// Acceptance band the tuning aims for.
    pub target_accept: (f64, f64),
    pub seed: u64,
}

impl McmcConfig {
    pub fn new(p: usize) -> Self {
        Self {
            iterations: 20_000,
            proposal_scale: vec![0.1; p],
            gamma_scale: 0.1,
            n_sims: 200,
            method: SlMethod::Bsl,
            gamma_prior: GammaPrior::default(),
            adapt_iters: 2_000,
            target_accept: (0.2, 0.3),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), McmcError> {
        let bad = |m: &str| Err(McmcError::InvalidConfig(m.into()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.proposal_scale.iter().any(|s| !(*s >= 0.0)) || !(self.gamma_scale >= 0.0) {
            return bad("proposal scales must be nonnegative");
        }
        if self.n_sims < 2 {
            return bad("n_sims must be at least 2");
        }
        if 4 * self.adapt_iters > self.iterations {
            return bad("adaptation may cover at most a quarter of the iterations");
        }
        Ok(())
    }
}

pub struct McmcProblem<'a> {
    pub model: &'a dyn SyntheticModel,
    pub prior: &'a GaussianPrior,
    /// Observed summaries, already mapped through `transform` if present.
    pub s_obs: &'a [f64],
    pub transform: Option<&'a WgTransform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Working-space parameters, one row per iteration.
    pub thetas: Vec<Vec<f64>>,
    /// `Γ` per iteration (empty rows for plain BSL).
    pub gammas: Vec<Vec<f64>>,
    /// Stored synthetic log-likelihood estimate of the current state.
    pub loglik: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_count: usize,
    /// Proposals rejected because simulation failed.
    pub failures: usize,
    /// Calls to the model's estimator, including the initial state.
    pub estimates: usize,
    /// Scale multiplier in force after tuning.
    pub scale_factor: f64,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_count as f64 / self.thetas.len() as f64
    }
}

struct State {
    theta: Vec<f64>,
    gamma: Vec<f64>,
    loglik: f64,
    log_prior: f64,
}

fn log_prior(problem: &McmcProblem<'_>, config: &McmcConfig, theta: &[f64], gamma: &[f64]) -> f64 {
    let lp = problem.prior.log_density(theta);
    if config.method.is_robust() {
        lp + synlik::gamma_log_prior(gamma, &config.gamma_prior)
    } else {
        lp
    }
}

/// Runs one chain from `init` (working space) and `init_gamma` (zeros when
/// `None`).
pub fn run(
    config: &McmcConfig,
    problem: &McmcProblem<'_>,
    init: &[f64],
    init_gamma: Option<&[f64]>,
) -> Result<Chain, McmcError> {
    config.validate()?;
    let p = problem.model.param_dim();
    let d = problem.model.summary_dim();
    if init.len() != p || config.proposal_scale.len() != p {
        return Err(McmcError::DimensionMismatch { expected: p, found: init.len() });
    }
    let gamma_dim = if config.method.is_robust() { d } else { 0 };
    let gamma0 = init_gamma.map_or_else(|| vec![0.0; gamma_dim], <[f64]>::to_vec);
    if gamma0.len() != gamma_dim {
        return Err(McmcError::DimensionMismatch { expected: gamma_dim, found: gamma0.len() });
    }

    let mut rng = rng::stream(config.seed, &[tag::MCMC]);
    let gamma_arg = |g: &[f64]| if config.method.is_robust() { Some(g.to_vec()) } else { None };
    let evaluate = |theta: &[f64], gamma: &[f64], rng: &mut crate::rng::SimRng| -> Result<f64, String> {
        let est = problem
            .model
            .estimate(theta, config.n_sims, problem.transform, rng)
            .map_err(|e| e.to_string())?;
        let g = gamma_arg(gamma);
        let ll = synlik::synthetic_log_lik(config.method, &est, problem.s_obs, g.as_deref())
            .map_err(|e| e.to_string())?;
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err("non-finite synthetic log-likelihood".into())
        }
    };

    let lp0 = log_prior(problem, config, init, &gamma0);
    if !lp0.is_finite() {
        return Err(McmcError::InitOutsideSupport);
    }
    let mut estimates = 1;
    let ll0 = evaluate(init, &gamma0, &mut rng).map_err(McmcError::InitFailed)?;
    let mut current = State { theta: init.to_vec(), gamma: gamma0, loglik: ll0, log_prior: lp0 };

    let n = config.iterations;
    let mut chain = Chain {
        thetas: Vec::with_capacity(n),
        gammas: Vec::with_capacity(n),
        loglik: Vec::with_capacity(n),
        accepted: Vec::with_capacity(n),
        acceptance_count: 0,
        failures: 0,
        estimates: 0,
        scale_factor: 1.0,
    };
    let mut factor = 1.0;
    let mut batch_accepts = 0usize;
    const BATCH: usize = 50;

    for it in 0..n {
        let theta_prop: Vec<f64> = current
            .theta
            .iter()
            .zip(&config.proposal_scale)
            .map(|(t, s)| t + factor * s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let gamma_prop: Vec<f64> = current
            .gamma
            .iter()
            .map(|g| g + factor * config.gamma_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();

        let accept = if theta_prop == current.theta && gamma_prop == current.gamma {
            true
        } else {
            let lp = log_prior(problem, config, &theta_prop, &gamma_prop);
            if !lp.is_finite() {
                false
            } else {
                estimates += 1;
                match evaluate(&theta_prop, &gamma_prop, &mut rng) {
                    Ok(ll) => {
                        let log_ratio = ll + lp - current.loglik - current.log_prior;
                        let u: f64 = rng.random();
                        if u.ln() < log_ratio {
                            current = State { theta: theta_prop, gamma: gamma_prop, loglik: ll, log_prior: lp };
                            true
                        } else {
                            false
                        }
                    }
                    Err(_) => {
                        chain.failures += 1;
                        false
                    }
                }
            }
        };

        if accept {
            chain.acceptance_count += 1;
            batch_accepts += 1;
        }
        chain.thetas.push(current.theta.clone());
        chain.gammas.push(current.gamma.clone());
        chain.loglik.push(current.loglik);
        chain.accepted.push(accept);

        if it < config.adapt_iters && (it + 1) % BATCH == 0 {
            let rate = batch_accepts as f64 / BATCH as f64;
            if rate < config.target_accept.0 {
                factor *= 0.8;
            } else if rate > config.target_accept.1 {
                factor *= 1.25;
            }
            batch_accepts = 0;
        }
    }
    chain.estimates = estimates;
    chain.scale_factor = factor;
    Ok(chain)
}

/// Mean and covariance (divisor `n − 1`) of rows after dropping the first
/// `burn_in_frac` of them.
pub fn posterior_moments(rows: &[Vec<f64>], burn_in_frac: f64) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let start = ((rows.len() as f64) * burn_in_frac).floor() as usize;
    let kept = &rows[start.min(rows.len().saturating_sub(1))..];
    let p = kept[0].len();
    let n = kept.len() as f64;
    let mut mean = vec![0.0; p];
    for r in kept {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut cov = nalgebra::DMatrix::zeros(p, p);
    for r in kept {
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    (mean, cov / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianLocationModel;

    fn oracle_problem<'a>(
        model: &'a GaussianLocationModel,
        prior: &'a GaussianPrior,
        s_obs: &'a [f64],
    ) -> McmcProblem<'a> {
        McmcProblem { model, prior, s_obs, transform: None }
    }

    #[test]
    fn zero_scale_chain_is_constant() {
        let model = GaussianLocationModel { dim: 1 };
        let prior = GaussianPrior::isotropic(1, 1.0);
        let problem = oracle_problem(&model, &prior, &[0.4]);
        let config = McmcConfig { iterations: 100, proposal_scale: vec![0.0], adapt_iters: 0, ..McmcConfig::new(1) };
        let chain = run(&config, &problem, &[0.3], None).unwrap();
        assert!(chain.thetas.iter().all(|t| t == &vec![0.3]));
        assert_eq!(chain.acceptance_count, 100);
        assert_eq!(chain.estimates, 1);
    }

    #[test]
    fn rejects_bad_setup() {
        let model = GaussianLocationModel { dim: 1 };
        let prior = GaussianPrior::isotropic(1, 1.0);
        let problem = oracle_problem(&model, &prior, &[0.4]);
        let cfg = McmcConfig { iterations: 10, adapt_iters: 5, ..McmcConfig::new(1) };
        assert!(run(&cfg, &problem, &[0.0], None).is_err());
        let cfg = McmcConfig {
            iterations: 10,
            adapt_iters: 0,
            method: SlMethod::RobustVariance,
            gamma_prior: GammaPrior::Exponential { rate: 0.5 },
            ..McmcConfig::new(1)
        };
        assert_eq!(run(&cfg, &problem, &[0.0], Some(&[-1.0])), Err(McmcError::InitOutsideSupport));
    }

    #[test]
    fn burn_in_moments() {
        let rows: Vec<Vec<f64>> = [100.0, 100.0, 1.0, 3.0].iter().map(|v| vec![*v]).collect();
        let (mean, cov) = posterior_moments(&rows, 0.5);
        assert_eq!(mean, vec![2.0]);
        assert_eq!(cov[(0, 0)], 2.0);
    }
}
