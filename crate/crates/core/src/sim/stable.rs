//! α-stable variates (Chambers–Mallows–Stuck) and McCulloch's quantile
//! summaries.
//!
//! Parameterization: `log φ(t) = −γ^α |t|^α (1 − iβ sign(t) tan(πα/2)) + iδt`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};

use super::quantile::{sorted, sorted_quantile};
use super::SimError;

pub const ALPHA_MIN: f64 = 1.1;
pub const ALPHA_MAX: f64 = 2.0;
/// Smallest sample the quantile summaries accept.
pub const MIN_SUMMARY_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StableParams {
    /// Accepts `α ∈ [1.1, 2]`, `β ∈ [−1, 1]`, `γ > 0`, finite `δ`.
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self, SimError> {
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&alpha) {
            return Err(SimError::InvalidParameter(format!("alpha = {alpha}")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(SimError::InvalidParameter(format!("beta = {beta}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(SimError::InvalidParameter(format!("gamma = {gamma}")));
        }
        if !delta.is_finite() {
            return Err(SimError::InvalidParameter(format!("delta = {delta}")));
        }
        Ok(Self { alpha, beta, gamma, delta })
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self, SimError> {
        match theta {
            [a, b, g, d] => Self::new(*a, *b, *g, *d),
            _ => Err(SimError::DimensionMismatch { expected: 4, found: theta.len() }),
        }
    }
}

/// Draws one variate; `α ≠ 1` is guaranteed by the parameter bounds.
pub struct StableSampler {
    params: StableParams,
    b: f64,
    s: f64,
    uniform: Uniform<f64>,
}

impl StableSampler {
    pub fn new(params: StableParams) -> Self {
        let StableParams { alpha, beta, .. } = params;
        let t = beta * (std::f64::consts::PI * alpha / 2.0).tan();
        let b = t.atan() / alpha;
        let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
        let uniform = Uniform::new(-FRAC_PI_2, FRAC_PI_2).expect("finite bounds");
        Self { params, b, s, uniform }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let alpha = self.params.alpha;
        let v: f64 = self.uniform.sample(rng);
        let w: f64 = Exp1.sample(rng);
        let shifted = alpha * (v + self.b);
        let x = self.s * shifted.sin() / v.cos().powf(1.0 / alpha)
            * ((v - shifted).cos() / w).powf((1.0 - alpha) / alpha);
        self.params.gamma * x + self.params.delta
    }
}

/// `n` i.i.d. draws at `θ = (α, β, γ, δ)`.
pub fn alpha_stable_simulate<R: Rng + ?Sized>(
    theta: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    let sampler = StableSampler::new(StableParams::from_slice(theta)?);
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}

/// `(v_α, v_β, v_γ, v_δ)` from the 5%, 25%, 50%, 75% and 95% quantiles.
pub fn alpha_stable_summarize(data: &[f64]) -> Result<[f64; 4], SimError> {
    if data.len() < MIN_SUMMARY_N {
        return Err(SimError::TooFewObservations { needed: MIN_SUMMARY_N, found: data.len() });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite);
    }
    let s = sorted(data);
    let q = |j| sorted_quantile(&s, j, 20);
    let (q05, q25, q50, q75, q95) = (q(1), q(5), q(10), q(15), q(19));
    let iqr = q75 - q25;
    let spread = q95 - q05;
    if !(iqr > 0.0) {
        return Err(SimError::DegenerateSample);
    }
    Ok([spread / iqr, (q95 + q05 - 2.0 * q50) / spread, iqr, q50])
}

/// Natural → working: `(log((α−1.1)/(2−α)), log((β+1)/(1−β)), log γ, δ)`.
pub fn stable_unconstrain(theta: &[f64]) -> Result<Vec<f64>, SimError> {
    let [a, b, g, d] = theta else {
        return Err(SimError::DimensionMismatch { expected: 4, found: theta.len() });
    };
    if !(*a > ALPHA_MIN && *a < ALPHA_MAX) || !(*b > -1.0 && *b < 1.0) || !(*g > 0.0) {
        return Err(SimError::InvalidParameter(format!("{theta:?} outside the open region")));
    }
    Ok(vec![alpha_unconstrain(*a), ((b + 1.0) / (1.0 - b)).ln(), g.ln(), *d])
}

pub fn stable_constrain(working: &[f64]) -> Vec<f64> {
    vec![
        alpha_constrain(working[0]),
        (0.5 * working[1]).tanh(),
        working[2].exp(),
        working[3],
    ]
}

/// Diagonal of `∂θ/∂θ̃`.
pub fn stable_constrain_jacobian(working: &[f64]) -> Vec<f64> {
    let beta = (0.5 * working[1]).tanh();
    vec![alpha_jacobian(working[0]), 0.5 * (1.0 - beta * beta), working[2].exp(), 1.0]
}

pub(crate) fn alpha_unconstrain(alpha: f64) -> f64 {
    ((alpha - ALPHA_MIN) / (ALPHA_MAX - alpha)).ln()
}

pub(crate) fn alpha_constrain(a: f64) -> f64 {
    ALPHA_MIN + (ALPHA_MAX - ALPHA_MIN) / (1.0 + (-a).exp())
}

pub(crate) fn alpha_jacobian(a: f64) -> f64 {
    let s = 1.0 / (1.0 + (-a).exp());
    (ALPHA_MAX - ALPHA_MIN) * s * (1.0 - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn reparam_examples() {
        assert!(alpha_unconstrain(1.55).abs() < 1e-15);
        let w = stable_unconstrain(&[1.55, 0.0, 1.0, 0.3]).unwrap();
        assert!(w[0].abs() < 1e-15);
        assert_eq!(&w[1..], &[0.0, 0.0, 0.3]);
        let truth = [1.8, 0.5, 1.0, 0.0];
        let back = stable_constrain(&stable_unconstrain(&truth).unwrap());
        for (a, b) in back.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(stable_unconstrain(&[2.0, 0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = SimRng::seed_from_u64(0);
        assert!(alpha_stable_simulate(&[1.0, 0.0, 1.0, 0.0], 5, &mut rng).is_err());
        assert!(alpha_stable_simulate(&[1.5, 1.5, 1.0, 0.0], 5, &mut rng).is_err());
        assert!(alpha_stable_simulate(&[1.5, 0.0, 0.0, 0.0], 5, &mut rng).is_err());
        assert!(alpha_stable_simulate(&[1.5, 0.0, 1.0], 5, &mut rng).is_err());
    }

    #[test]
    fn summaries_need_spread() {
        assert_eq!(alpha_stable_summarize(&[1.0; 30]), Err(SimError::DegenerateSample));
        assert!(matches!(alpha_stable_summarize(&[1.0; 5]), Err(SimError::TooFewObservations { .. })));
    }
}
