use std::sync::atomic::{AtomicUsize, Ordering};

use statrs::distribution::{ContinuousCDF, Normal};
use wgbsl_core::mcmc::{self, McmcConfig, McmcProblem};
use wgbsl_core::model::{GaussianLocationModel, GaussianPrior, ModelError, SyntheticModel};
use wgbsl_core::rng::SimRng;
use wgbsl_core::synlik::{GammaPrior, SlMethod, SyntheticLikelihoodEstimate};
use wgbsl_core::wg::WgTransform;

struct Counting {
    inner: GaussianLocationModel,
    calls: AtomicUsize,
}

impl SyntheticModel for Counting {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn summary_dim(&self) -> usize {
        self.inner.summary_dim()
    }
    fn estimate(
        &self,
        theta: &[f64],
        n_sims: usize,
        transform: Option<&WgTransform>,
        rng: &mut SimRng,
    ) -> Result<SyntheticLikelihoodEstimate, ModelError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.estimate(theta, n_sims, transform, rng)
    }
}

fn oracle_chain(config: &McmcConfig, model: &dyn SyntheticModel) -> mcmc::Chain {
    let prior = GaussianPrior::isotropic(1, 1.0);
    let problem = McmcProblem { model, prior: &prior, s_obs: &[0.7], transform: None };
    mcmc::run(config, &problem, &[0.0], None).unwrap()
}

#[test]
fn chain_targets_conjugate_posterior() {
    // Posterior is N(0.35, 0.5).
    let model = GaussianLocationModel { dim: 1 };
    let config = McmcConfig {
        iterations: 60_000,
        proposal_scale: vec![1.5],
        adapt_iters: 0,
        seed: 12,
        ..McmcConfig::new(1)
    };
    let chain = oracle_chain(&config, &model);
    let draws: Vec<f64> = chain.thetas[10_000..].iter().map(|t| t[0]).collect();

    // Batch means for the Monte Carlo error.
    let batches = 50;
    let size = draws.len() / batches;
    let means: Vec<f64> = draws.chunks(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    assert!((grand - 0.35).abs() < 3.0 * se, "{grand} +- {se}");

    let mut thinned: Vec<f64> = draws.iter().step_by(25).copied().collect();
    thinned.sort_by(f64::total_cmp);
    let law = Normal::new(0.35, 0.5f64.sqrt()).unwrap();
    let n = thinned.len() as f64;
    let ks = thinned
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = law.cdf(*x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS {ks}");
}

#[test]
fn one_estimate_per_proposal_and_rejections_keep_state() {
    let model = Counting { inner: GaussianLocationModel { dim: 1 }, calls: AtomicUsize::new(0) };
    let config = McmcConfig { iterations: 2000, proposal_scale: vec![2.0], adapt_iters: 500, seed: 3, ..McmcConfig::new(1) };
    let chain = oracle_chain(&config, &model);
    assert_eq!(model.calls.load(Ordering::Relaxed), chain.estimates);
    // The initial state plus one per proposal; the prior has full support.
    assert_eq!(chain.estimates, config.iterations + 1);
    assert!(chain.accepted.iter().any(|a| !a));
    for i in 1..chain.thetas.len() {
        if !chain.accepted[i] {
            assert_eq!(chain.thetas[i], chain.thetas[i - 1]);
            assert_eq!(chain.loglik[i].to_bits(), chain.loglik[i - 1].to_bits());
        }
    }
    let rate = chain.acceptance_rate();
    assert_eq!(rate, chain.accepted.iter().filter(|a| **a).count() as f64 / 2000.0);
}

#[test]
fn variance_adjustment_stays_in_support() {
    let model = GaussianLocationModel { dim: 2 };
    let prior = GaussianPrior::isotropic(2, 1.0);
    let problem = McmcProblem { model: &model, prior: &prior, s_obs: &[0.3, 4.0], transform: None };
    let config = McmcConfig {
        iterations: 3000,
        adapt_iters: 500,
        method: SlMethod::RobustVariance,
        gamma_prior: GammaPrior::Exponential { rate: 0.5 },
        gamma_scale: 0.3,
        seed: 5,
        ..McmcConfig::new(2)
    };
    let chain = mcmc::run(&config, &problem, &[0.0, 0.0], None).unwrap();
    assert!(chain.gammas.iter().flatten().all(|g| *g >= 0.0));
    // The outlying second summary should pull its adjustment away from zero.
    let (mean, _) = mcmc::posterior_moments(&chain.gammas, 0.25);
    assert!(mean[1] > mean[0], "{mean:?}");

    let again = mcmc::run(&config, &problem, &[0.0, 0.0], None).unwrap();
    assert_eq!(chain.thetas, again.thetas);
    assert_eq!(chain.gammas, again.gammas);
}
