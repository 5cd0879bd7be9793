//! Bayesian synthetic likelihood with Wasserstein-Gaussianized summaries and
//! marginal variational Bayes for robust BSL.

pub mod diagnostics;
pub mod gmm;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod rng;
pub mod sim;
pub mod synlik;
pub mod vb;
pub mod wg;
