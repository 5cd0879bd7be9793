//! Point-estimate error measures and posterior summaries in natural
//! coordinates.

use std::f64::consts::{PI, SQRT_2};
use std::num::NonZeroUsize;

use anyhow::{ensure, Result};
use gauss_quad::hermite::GaussHermite;
use nalgebra::{DMatrix, DVector};
use wgbsl_core::linalg;
use wgbsl_core::sim::Simulator;
use wgbsl_core::vb::VariationalParams;

/// Euclidean distance between truth and estimate.
pub fn mse(theta_true: &[f64], theta_hat: &[f64]) -> f64 {
    theta_true.iter().zip(theta_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// `√(δᵀ Σ⁻¹ δ)` with `δ = θ_true − θ̂`; `Σ` is factorized with the usual
/// jitter ladder.
pub fn mahalanobis(theta_true: &[f64], theta_hat: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let p = theta_true.len();
    ensure!(theta_hat.len() == p && cov.nrows() == p && cov.ncols() == p, "dimension mismatch");
    let factor = linalg::cholesky_with_jitter(cov).ok_or_else(|| anyhow::anyhow!("covariance is not positive definite"))?;
    let delta = DVector::from_iterator(p, theta_true.iter().zip(theta_hat).map(|(a, b)| a - b));
    let z = factor
        .chol
        .solve_lower_triangular(&delta)
        .ok_or_else(|| anyhow::anyhow!("singular covariance"))?;
    Ok(z.norm())
}

const HERMITE_NODES: usize = 40;

/// Natural-space mean and covariance of a working-space Gaussian, taken as
/// expectations under the Gaussian. The constraint map is coordinate-wise, so
/// means and variances are 1-D Gauss-Hermite integrals and covariances 2-D ones.
pub fn vb_posterior(sim: &dyn Simulator, lambda: &VariationalParams) -> (Vec<f64>, DMatrix<f64>) {
    let rule = GaussHermite::new(NonZeroUsize::new(HERMITE_NODES).unwrap());
    let nodes: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w / PI.sqrt())).collect();
    let mu: Vec<f64> = lambda.mu.iter().copied().collect();
    let sigma = lambda.covariance();
    let p = mu.len();
    let coord = |i: usize, u: f64| {
        let mut w = mu.clone();
        w[i] = u;
        sim.constrain(&w)[i]
    };

    let mut mean = vec![0.0; p];
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        let sd = sigma[(i, i)].sqrt();
        let (mut m1, mut m2) = (0.0, 0.0);
        for (x, w) in &nodes {
            let g = coord(i, mu[i] + SQRT_2 * sd * x);
            m1 += w * g;
            m2 += w * g * g;
        }
        mean[i] = m1;
        cov[(i, i)] = (m2 - m1 * m1).max(0.0);
    }
    for i in 0..p {
        for j in 0..i {
            let l11 = sigma[(i, i)].sqrt();
            let l21 = sigma[(j, i)] / l11;
            let l22 = (sigma[(j, j)] - l21 * l21).max(0.0).sqrt();
            let mut cross = 0.0;
            for (x, wx) in &nodes {
                let gi = coord(i, mu[i] + SQRT_2 * l11 * x);
                for (y, wy) in &nodes {
                    let gj = coord(j, mu[j] + SQRT_2 * (l21 * x + l22 * y));
                    cross += wx * wy * gi * gj;
                }
            }
            let c = cross - mean[i] * mean[j];
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    (mean, cov)
}

/// Marginal density of natural coordinate `i` under the working-space
/// Gaussian, on `points` grid nodes spanning ±4 sd.
pub fn vb_marginal_grid(
    sim: &dyn Simulator,
    lambda: &VariationalParams,
    i: usize,
    points: usize,
) -> Vec<(f64, f64)> {
    let mu: Vec<f64> = lambda.mu.iter().copied().collect();
    let sd = lambda.covariance()[(i, i)].sqrt();
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let u = mu[i] - 4.0 * sd + 8.0 * sd * k as f64 / (points - 1) as f64;
        let mut w = mu.clone();
        w[i] = u;
        let z = (u - mu[i]) / sd;
        let density_w = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let jac = sim.constrain_jacobian(&w)[i];
        let x = sim.constrain(&w)[i];
        out.push((x, density_w / jac.abs()));
    }
    out
}

/// Gaussian kernel density estimate of `samples` with Silverman's bandwidth.
pub fn kde_grid(samples: &[f64], points: usize) -> Vec<(f64, f64)> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt().max(1e-12);
    let h = 1.06 * sd * n.powf(-0.2);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let d: f64 = samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect()
}

/// Mean and sample standard deviation; the sd is 0 for a single value.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
