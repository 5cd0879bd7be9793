use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use wgbsl_core::model::{GaussianLocationModel, GaussianPrior};
use wgbsl_core::rng::SimRng;
use wgbsl_core::synlik::{self, SyntheticLikelihoodEstimate};
use wgbsl_core::vb::{self, GammaDraw, VariationalParams, VbConfig, VbMethod, VbProblem};

fn mvn_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let quad = (diff.transpose() * cov.clone().try_inverse().unwrap() * &diff)[0];
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad)
}

fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    mvn_log_pdf(&DVector::from_element(1, x), &DVector::from_element(1, mean), &DMatrix::from_element(1, 1, sd * sd))
}

fn random_lambda(rng: &mut SimRng, p: usize) -> VariationalParams {
    let mu = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => rng.random_range(-0.5..0.5),
        std::cmp::Ordering::Equal => rng.random_range(0.5..2.0),
        std::cmp::Ordering::Less => 0.0,
    });
    VariationalParams::new(mu, c).unwrap()
}

fn random_spd(rng: &mut SimRng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

#[test]
fn h_matches_term_by_term_oracle() {
    let mut rng = SimRng::seed_from_u64(3);
    for _ in 0..25 {
        let p = 2;
        let d = 3;
        let lambda = random_lambda(&mut rng, p);
        let prior = GaussianPrior { mean: vec![0.5, -0.2], sd: vec![2.0, 0.7] };
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s_obs: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let cov = random_spd(&mut rng, d);
        let est = SyntheticLikelihoodEstimate::from_moments(mean.clone(), cov.clone()).unwrap();

        let log_prior: f64 = (0..p).map(|i| normal_log_pdf(theta[i], prior.mean[i], prior.sd[i])).sum();
        let q_cov = (&lambda.c * lambda.c.transpose()).try_inverse().unwrap();
        let log_q = mvn_log_pdf(&DVector::from_column_slice(&theta), &lambda.mu, &q_cov);
        let s = DVector::from_column_slice(&s_obs);
        let expect = log_prior + mvn_log_pdf(&s, &mean, &cov) - log_q;
        let h = vb::h_lambda(VbMethod::Bsl, &lambda, &prior, &theta, &est, &s_obs, None).unwrap();
        assert!((h - expect).abs() < 1e-9, "{h} vs {expect}");

        let sigma0 = 0.5;
        let posterior = synlik::gamma_posterior(&est, &s_obs, sigma0).unwrap();
        let gamma: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = DVector::from_fn(d, |i, _| mean[i] + cov[(i, i)].sqrt() * gamma[i]);
        let gamma_prior: f64 = gamma.iter().map(|g| normal_log_pdf(*g, 0.0, sigma0)).sum();
        let expect = log_prior + gamma_prior + mvn_log_pdf(&s, &shifted, &cov)
            - log_q
            - mvn_log_pdf(&DVector::from_column_slice(&gamma), &posterior.mean, &posterior.cov);
        let draw = GammaDraw { gamma: &gamma, posterior: &posterior, sigma0 };
        let h = vb::h_lambda(VbMethod::RobustMean, &lambda, &prior, &theta, &est, &s_obs, Some(draw)).unwrap();
        assert!((h - expect).abs() < 1e-9, "{h} vs {expect}");
    }
}

fn oracle_run(seed: u64) -> vb::VbRun {
    let model = GaussianLocationModel { dim: 1 };
    let prior = GaussianPrior::isotropic(1, 1.0);
    let s_obs = [0.7];
    let problem = VbProblem { model: &model, prior: &prior, s_obs: &s_obs, transform: None };
    let config = VbConfig { samples: 100, seed, ..VbConfig::default() };
    let init = VariationalParams::diagonal(&[-1.0], &[0.5]).unwrap();
    vb::optimize(&config, &problem, init).unwrap()
}

#[test]
fn converges_to_conjugate_posterior() {
    // Prior N(0, 1) and likelihood N(s; theta, 1) give N(s/2, 1/2).
    let run = oracle_run(4);
    let lambda = &run.state.lambda;
    assert!((lambda.mu[0] - 0.35).abs() < 0.05, "{}", lambda.mu[0]);
    let var = lambda.covariance()[(0, 0)];
    assert!((var / 0.5 - 1.0).abs() < 0.25, "{var}");
    assert!(run.state.converged);
    assert!(run.state.patience <= VbConfig::default().patience);
}

#[test]
fn same_seed_same_trace() {
    let a = oracle_run(8);
    let b = oracle_run(8);
    assert_eq!(a.trace.len(), b.trace.len());
    assert!(a.trace.iter().zip(&b.trace).all(|(x, y)| x.lambda_hash == y.lambda_hash && x.lb == y.lb));
    let c = oracle_run(9);
    assert_ne!(a.trace.last().unwrap().lambda_hash, c.trace.last().unwrap().lambda_hash);
}
