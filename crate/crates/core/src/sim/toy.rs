//! Location model with centred, rescaled Gamma errors.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::SimError;

/// Gamma shape and rate of the raw error draws.
pub const SHAPE: f64 = 1.0;
pub const RATE: f64 = 0.01;
/// Error standard deviation.
pub const SIGMA: f64 = 2.0;

/// `y_i = θ + σ (v_i − a/b) / sqrt(a/b²)` with `v_i ~ Gamma(a, rate b)`.
pub fn toy_simulate<R: Rng + ?Sized>(theta: f64, n: usize, rng: &mut R) -> Result<Vec<f64>, SimError> {
    if n < 2 {
        return Err(SimError::TooFewObservations { needed: 2, found: n });
    }
    if !theta.is_finite() {
        return Err(SimError::InvalidParameter(format!("theta = {theta}")));
    }
    let gamma = Gamma::new(SHAPE, 1.0 / RATE).expect("valid gamma parameters");
    let mean = SHAPE / RATE;
    let sd = (SHAPE / (RATE * RATE)).sqrt();
    Ok((0..n).map(|_| theta + SIGMA * (gamma.sample(rng) - mean) / sd).collect())
}

/// Sample mean and variance (divisor `n − 1`).
pub fn toy_summarize(y: &[f64]) -> Result<[f64; 2], SimError> {
    let n = y.len();
    if n < 2 {
        return Err(SimError::TooFewObservations { needed: 2, found: n });
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok([mean, var])
}
