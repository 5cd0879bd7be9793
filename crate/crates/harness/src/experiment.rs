//! End-to-end pipelines: observed data, pilot run, WG training, and the
//! per-method replicates.

use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use wgbsl_core::diagnostics::{self, Mardia};
use wgbsl_core::gmm::ParticleCloud;
use wgbsl_core::mcmc::{self, Chain, McmcConfig, McmcProblem};
use wgbsl_core::model::{GaussianPrior, SimulatorModel};
use wgbsl_core::rng::{self, tag};
use wgbsl_core::sim::{Dataset, Simulator};
use wgbsl_core::synlik::{GammaPrior, SlMethod};
use wgbsl_core::vb::{self, VariationalParams, VbProblem, VbRun};
use wgbsl_core::wg::{self, WgTraining, WgTransform};

use crate::config::ExperimentConfig;
use crate::corpus;
use crate::methods::{Engine, Method};
use crate::metrics;

/// The trained transform plus what is needed to report on it.
pub struct WgArtifacts {
    pub transform: WgTransform,
    /// Absent when the transform was loaded from disk.
    pub training: Option<WgTraining>,
    pub test_before: Vec<Vec<f64>>,
    pub test_after: Vec<Vec<f64>>,
    pub mardia_before: Option<Mardia>,
    pub mardia_after: Option<Mardia>,
    pub s_obs: Vec<f64>,
}

/// Inputs shared by every replicate of every method.
pub struct Setup {
    pub simulator: Box<dyn Simulator>,
    pub observed: Dataset,
    pub s_obs: Vec<f64>,
    pub prior: GaussianPrior,
    /// Natural-space centre: configured, or from the pilot.
    pub theta0: Option<Vec<f64>>,
    pub pilot: Option<VbRun>,
    pub wg: Option<WgArtifacts>,
    pub timings: Vec<(String, f64)>,
}

impl Setup {
    /// Working-space starting point for optimizers and chains.
    pub fn start(&self) -> Result<Vec<f64>> {
        match &self.theta0 {
            Some(t) => Ok(self.simulator.unconstrain(t)?),
            None => Ok(self.prior.mean.clone()),
        }
    }
}

pub fn prior(config: &ExperimentConfig, p: usize) -> GaussianPrior {
    GaussianPrior {
        mean: config.simulator.prior_mean.clone().unwrap_or_else(|| vec![0.0; p]),
        sd: vec![config.simulator.prior_sd; p],
    }
}

pub fn observe(config: &ExperimentConfig) -> Result<(Dataset, Vec<f64>)> {
    let sim = config.build_observed_simulator()?;
    let mut rng = rng::stream(config.experiment.seed, &[tag::OBSERVED]);
    let data = sim.simulate(&config.simulator.theta_true, &mut rng)?;
    let s = sim.summarize(&data).context("summarizing the observed data")?;
    Ok((data, s))
}

fn initial_params(config: &ExperimentConfig, start: &[f64]) -> Result<VariationalParams> {
    let sd = vec![config.simulator.prior_sd * config.vb.init_sd_fraction; start.len()];
    Ok(VariationalParams::diagonal(start, &sd)?)
}

/// Short VB-BSL run from the prior mean; its variational mean, constrained,
/// is the WG training centre.
pub fn pilot(config: &ExperimentConfig, sim: &dyn Simulator, s_obs: &[f64], prior: &GaussianPrior) -> Result<VbRun> {
    let vb_config = config.pilot.resolve(&config.vb).to_config(false, rng::derive_seed(config.experiment.seed, &[tag::PILOT]));
    let model = SimulatorModel::new(sim);
    let problem = VbProblem { model: &model, prior, s_obs, transform: None };
    let init = initial_params(config, &prior.mean)?;
    vb::optimize(&vb_config, &problem, init).context("pilot VB-BSL run")
}

/// Simulates the corpus at `theta0`, splits it and trains the transform.
pub fn train_wg(config: &ExperimentConfig, theta0: &[f64], s_obs: &[f64]) -> Result<WgArtifacts> {
    let seed = config.experiment.seed;
    let sim = config.build_corpus_simulator()?;
    let summaries = corpus::simulate_corpus(sim.as_ref(), theta0, config.wg.corpus_size, seed)?;
    let parts = corpus::split(summaries, config.wg.split, seed);
    let train = ParticleCloud::from_rows(&parts.train)?;
    let validation = ParticleCloud::from_rows(&parts.validation)?;
    let training = wg::train(&train, &validation, &config.wg.to_config(rng::derive_seed(seed, &[tag::WG])))?;
    finish_wg(training.transform.clone(), Some(training), parts.test, s_obs)
}

pub fn finish_wg(
    transform: WgTransform,
    training: Option<WgTraining>,
    test_before: Vec<Vec<f64>>,
    s_obs: &[f64],
) -> Result<WgArtifacts> {
    let test_after = transform.apply_all(&test_before)?;
    let (mardia_before, mardia_after) = if test_before.len() > test_before.first().map_or(0, Vec::len) {
        (diagnostics::mardia(&test_before).ok(), diagnostics::mardia(&test_after).ok())
    } else {
        (None, None)
    };
    let s_obs = transform.apply(s_obs).context("mapping the observed summaries")?;
    Ok(WgArtifacts { transform, training, test_before, test_after, mardia_before, mardia_after, s_obs })
}

/// Observed data, the pilot run and the WG transform, as far as `methods`
/// need them.
pub fn prepare(config: &ExperimentConfig, methods: &[Method]) -> Result<Setup> {
    let simulator = config.build_simulator()?;
    let p = simulator.param_dim();
    let prior = prior(config, p);
    let mut timings = Vec::new();

    let clock = Instant::now();
    let (observed, s_obs) = observe(config)?;
    timings.push(("observe".to_string(), clock.elapsed().as_secs_f64()));

    let needs_wg = methods.iter().any(|m| m.wg);
    let mut theta0 = config.wg.theta0.clone();
    let mut pilot_run = None;
    if needs_wg && theta0.is_none() && config.wg.transform_path.is_none() {
        let clock = Instant::now();
        let run = pilot(config, simulator.as_ref(), &s_obs, &prior)?;
        let mu: Vec<f64> = run.state.lambda.mu.iter().copied().collect();
        theta0 = Some(simulator.constrain(&mu));
        pilot_run = Some(run);
        timings.push(("pilot".to_string(), clock.elapsed().as_secs_f64()));
    }

    let wg = if needs_wg {
        let clock = Instant::now();
        let artifacts = match &config.wg.transform_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let transform = WgTransform::from_artifact(&text)?;
                if transform.dim() != simulator.summary_dim() {
                    bail!("transform dimension {} does not match the simulator", transform.dim());
                }
                finish_wg(transform, None, Vec::new(), &s_obs)?
            }
            None => train_wg(config, theta0.as_deref().expect("set above"), &s_obs)?,
        };
        timings.push(("wg".to_string(), clock.elapsed().as_secs_f64()));
        Some(artifacts)
    } else {
        None
    };

    Ok(Setup { simulator, observed, s_obs, prior, theta0, pilot: pilot_run, wg, timings })
}

#[derive(Debug, Clone)]
pub enum Fit {
    Vb(VbRun),
    Mcmc(Chain),
}

#[derive(Debug, Clone)]
pub struct Estimate {
    /// Natural-space posterior mean and covariance.
    pub theta_hat: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub mse: f64,
    pub mahalanobis: f64,
    pub fit: Fit,
}

impl Estimate {
    pub fn iterations(&self) -> usize {
        match &self.fit {
            Fit::Vb(run) => run.state.iteration,
            Fit::Mcmc(chain) => chain.thetas.len(),
        }
    }

    /// VB: whether the stopping rule fired; MCMC: acceptance rate.
    pub fn diagnostic(&self) -> f64 {
        match &self.fit {
            Fit::Vb(run) => f64::from(u8::from(run.state.converged)),
            Fit::Mcmc(chain) => chain.acceptance_rate(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub seconds: f64,
    pub outcome: Result<Estimate, String>,
}

pub fn replicate_seed(master: u64, replicate: usize, method: Method) -> u64 {
    rng::derive_seed(master, &[tag::REPLICATE, replicate as u64, rng::label_id(&method.label())])
}

fn gamma_prior(config: &ExperimentConfig, method: SlMethod) -> GammaPrior {
    match method {
        SlMethod::RobustVariance => config.mcmc.gamma_prior(config.mcmc.variance_gamma_prior, config.vb.sigma0),
        _ => GammaPrior::Gaussian { sigma0: config.vb.sigma0 },
    }
}

/// One replicate of one method.
pub fn run_method(config: &ExperimentConfig, setup: &Setup, method: Method, seed: u64) -> Result<Estimate> {
    let sim = setup.simulator.as_ref();
    let (transform, s_obs) = if method.wg {
        let wg = setup.wg.as_ref().ok_or_else(|| anyhow!("{method} needs a WG transform"))?;
        (Some(&wg.transform), wg.s_obs.as_slice())
    } else {
        (None, setup.s_obs.as_slice())
    };
    let model = SimulatorModel::new(sim);
    let start = setup.start()?;
    let theta_true = &config.simulator.theta_true;

    let (theta_hat, cov, fit) = match method.engine {
        Engine::Vb => {
            let vb_config = config.vb.to_config(method.likelihood.is_robust(), seed);
            let problem = VbProblem { model: &model, prior: &setup.prior, s_obs, transform };
            let run = vb::optimize(&vb_config, &problem, initial_params(config, &start)?)?;
            let (theta_hat, cov) = metrics::vb_posterior(sim, &run.state.lambda);
            (theta_hat, cov, Fit::Vb(run))
        }
        Engine::Mcmc => {
            let p = sim.param_dim();
            let mcmc_config = McmcConfig {
                iterations: config.mcmc.iterations,
                proposal_scale: config.mcmc.scales(p)?,
                gamma_scale: config.mcmc.gamma_scale,
                n_sims: config.mcmc.n_sims,
                method: method.likelihood,
                gamma_prior: gamma_prior(config, method.likelihood),
                adapt_iters: config.mcmc.adapt_iters,
                seed,
                ..McmcConfig::new(p)
            };
            let problem = McmcProblem { model: &model, prior: &setup.prior, s_obs, transform };
            let chain = mcmc::run(&mcmc_config, &problem, &start, None)?;
            let natural: Vec<Vec<f64>> = chain.thetas.iter().map(|t| sim.constrain(t)).collect();
            let (theta_hat, cov) = mcmc::posterior_moments(&natural, config.mcmc.burn_in);
            (theta_hat, cov, Fit::Mcmc(chain))
        }
    };
    let mse = metrics::mse(theta_true, &theta_hat);
    let mahalanobis = metrics::mahalanobis(theta_true, &theta_hat, &cov)?;
    if !mse.is_finite() || !mahalanobis.is_finite() {
        bail!("non-finite metrics");
    }
    Ok(Estimate { theta_hat, cov, mse, mahalanobis, fit })
}

/// All replicates of all methods, methods outermost, in order.
pub fn run_all(config: &ExperimentConfig, setup: &Setup, methods: &[Method]) -> Vec<RunResult> {
    let mut results = Vec::new();
    for &method in methods {
        for r in 0..config.experiment.replicates {
            let seed = replicate_seed(config.experiment.seed, r, method);
            let clock = Instant::now();
            let outcome = run_method(config, setup, method, seed).map_err(|e| format!("{e:#}"));
            results.push(RunResult { method, replicate: r, seed, seconds: clock.elapsed().as_secs_f64(), outcome });
        }
    }
    results
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub succeeded: usize,
    pub failed: usize,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub md_mean: f64,
    pub md_sd: f64,
    pub single_replicate: bool,
}

/// Mean and sd over successful replicates, per method in first-seen order.
pub fn summarize(rows: &[(String, Option<(f64, f64)>)]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for (m, _) in rows {
        if !order.contains(&m.as_str()) {
            order.push(m);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let ok: Vec<(f64, f64)> = rows.iter().filter(|(l, _)| l == m).filter_map(|(_, v)| *v).collect();
            let failed = rows.iter().filter(|(l, v)| l == m && v.is_none()).count();
            let mse: Vec<f64> = ok.iter().map(|v| v.0).collect();
            let md: Vec<f64> = ok.iter().map(|v| v.1).collect();
            let (mse_mean, mse_sd) = metrics::mean_sd(&mse);
            let (md_mean, md_sd) = metrics::mean_sd(&md);
            SummaryRow {
                method: m.to_string(),
                succeeded: ok.len(),
                failed,
                mse_mean,
                mse_sd,
                md_mean,
                md_sd,
                single_replicate: ok.len() == 1,
            }
        })
        .collect()
}

impl RunResult {
    pub fn metrics(&self) -> Option<(f64, f64)> {
        self.outcome.as_ref().ok().map(|e| (e.mse, e.mahalanobis))
    }
}
