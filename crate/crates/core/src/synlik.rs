//! Synthetic-likelihood densities.
//!
//! Sample moments of simulated summaries, the mean- and variance-adjusted
//! robust variants, the conjugate Gaussian posterior of the adjustment vector
//! and the log-density evaluations that the samplers and the optimizer target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, JitteredFactor};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Default scale of the Gaussian prior on the adjustment vector.
pub const DEFAULT_SIGMA0: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlError {
    #[error("no summaries")]
    NoSummaries,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate covariance")]
    DegenerateCovariance,
    #[error("invalid covariance")]
    InvalidCovariance,
    #[error("adjustment vector required for {0:?}")]
    MissingGamma(SlMethod),
    #[error("non-finite summary statistic")]
    NonFinite,
}

/// Which synthetic likelihood to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlMethod {
    /// Plain Gaussian synthetic likelihood.
    Bsl,
    /// Robust, mean-adjusted (`rBSL-M`).
    RobustMean,
    /// Robust, variance-adjusted (`rBSL-V`).
    RobustVariance,
}

impl SlMethod {
    pub fn is_robust(self) -> bool {
        !matches!(self, SlMethod::Bsl)
    }
}

/// Mean and covariance of `N` simulated summaries at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLikelihoodEstimate {
    pub mean: DVector<f64>,
    /// Sample covariance with divisor `N`, before jitter.
    pub cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov + jitter * I`.
    pub chol: DMatrix<f64>,
    /// Log-determinant of the jittered covariance.
    pub logdet: f64,
    /// Absolute diagonal jitter absorbed by `chol`.
    pub jitter: f64,
}

impl SyntheticLikelihoodEstimate {
    /// Wraps known moments, factorizing the covariance with jitter escalation.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, SlError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(SlError::DimensionMismatch { expected: d, found: cov.nrows() });
        }
        let JitteredFactor { chol, jitter } =
            linalg::cholesky_with_jitter(&cov).ok_or(SlError::DegenerateCovariance)?;
        let logdet = linalg::chol_logdet(&chol);
        Ok(Self { mean, cov, chol, logdet, jitter })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and covariance (divisor `N`) of a set of summary vectors.
pub fn sample_moments<S: AsRef<[f64]>>(
    summaries: &[S],
) -> Result<SyntheticLikelihoodEstimate, SlError> {
    let first = summaries.first().ok_or(SlError::NoSummaries)?;
    let d = first.as_ref().len();
    let n = summaries.len() as f64;

    let mut mean = DVector::<f64>::zeros(d);
    for s in summaries {
        let s = s.as_ref();
        if s.len() != d {
            return Err(SlError::DimensionMismatch { expected: d, found: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(SlError::NonFinite);
        }
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean /= n;

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for s in summaries {
        for ((c, v), m) in centered.iter_mut().zip(s.as_ref()).zip(mean.iter()) {
            *c = v - m;
        }
        for j in 0..d {
            for i in j..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for j in 0..d {
        for i in j..d {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    SyntheticLikelihoodEstimate::from_moments(mean, cov)
}

fn check_len(expected: usize, found: usize) -> Result<(), SlError> {
    if expected == found {
        Ok(())
    } else {
        Err(SlError::DimensionMismatch { expected, found })
    }
}

fn diag_sqrt(cov: &DMatrix<f64>) -> Result<Vec<f64>, SlError> {
    cov.diagonal()
        .iter()
        .map(|&v| if v >= 0.0 { Ok(v.sqrt()) } else { Err(SlError::InvalidCovariance) })
        .collect()
}

/// `mean + sqrt(diag(cov)) ∘ gamma`.
pub fn adjusted_mean(
    est: &SyntheticLikelihoodEstimate,
    gamma: &[f64],
) -> Result<DVector<f64>, SlError> {
    check_len(est.dim(), gamma.len())?;
    let scale = diag_sqrt(&est.cov)?;
    let mut out = est.mean.clone();
    for ((o, s), g) in out.iter_mut().zip(&scale).zip(gamma) {
        *o += s * g;
    }
    Ok(out)
}

/// `cov + diag(diag(cov) ∘ gamma²)`.
pub fn adjusted_variance(
    est: &SyntheticLikelihoodEstimate,
    gamma: &[f64],
) -> Result<DMatrix<f64>, SlError> {
    check_len(est.dim(), gamma.len())?;
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(SlError::NonFinite);
    }
    let mut out = est.cov.clone();
    for (i, g) in gamma.iter().enumerate() {
        let v = est.cov[(i, i)];
        if v < 0.0 {
            return Err(SlError::InvalidCovariance);
        }
        out[(i, i)] += v * g * g;
    }
    Ok(out)
}

/// Multivariate normal log-density from a lower Cholesky factor of the
/// covariance and its log-determinant.
pub fn gaussian_log_density(
    x: &[f64],
    mean: &[f64],
    chol: &DMatrix<f64>,
    logdet: f64,
) -> Result<f64, SlError> {
    let d = mean.len();
    check_len(d, x.len())?;
    check_len(d, chol.nrows())?;
    let mut z: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    for i in 0..d {
        let mut acc = z[i];
        for j in 0..i {
            acc -= chol[(i, j)] * z[j];
        }
        z[i] = acc / chol[(i, i)];
    }
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * d as f64 * LN_2PI - 0.5 * logdet - 0.5 * quad)
}

/// Log synthetic likelihood of `s_obs` under the chosen variant.
pub fn synthetic_log_lik(
    method: SlMethod,
    est: &SyntheticLikelihoodEstimate,
    s_obs: &[f64],
    gamma: Option<&[f64]>,
) -> Result<f64, SlError> {
    let mean = est.mean.as_slice();
    match method {
        SlMethod::Bsl => gaussian_log_density(s_obs, mean, &est.chol, est.logdet),
        SlMethod::RobustMean => {
            let gamma = gamma.ok_or(SlError::MissingGamma(method))?;
            let shifted = adjusted_mean(est, gamma)?;
            gaussian_log_density(s_obs, shifted.as_slice(), &est.chol, est.logdet)
        }
        SlMethod::RobustVariance => {
            let gamma = gamma.ok_or(SlError::MissingGamma(method))?;
            let inflated = adjusted_variance(est, gamma)?;
            // Same jitter as the unadjusted factor, so a zero adjustment
            // reproduces the plain value bit for bit.
            let factor = nalgebra::Cholesky::new(linalg::add_diagonal(&inflated, est.jitter))
                .map(|c| c.unpack())
                .or_else(|| linalg::cholesky_with_jitter(&inflated).map(|f| f.chol))
                .ok_or(SlError::DegenerateCovariance)?;
            let logdet = linalg::chol_logdet(&factor);
            gaussian_log_density(s_obs, mean, &factor, logdet)
        }
    }
}

/// Prior on the adjustment vector; components are independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPrior {
    Gaussian { sigma0: f64 },
    Laplace { scale: f64 },
    Exponential { rate: f64 },
}

impl Default for GammaPrior {
    fn default() -> Self {
        GammaPrior::Gaussian { sigma0: DEFAULT_SIGMA0 }
    }
}

impl GammaPrior {
    /// Whether a value lies in the support.
    pub fn supports(&self, gamma: &[f64]) -> bool {
        match self {
            GammaPrior::Exponential { .. } => gamma.iter().all(|g| *g >= 0.0),
            _ => true,
        }
    }
}

/// Sum of per-component log prior densities. Outside the support of the
/// exponential prior this is `f64::NEG_INFINITY`.
pub fn gamma_log_prior(gamma: &[f64], prior: &GammaPrior) -> f64 {
    match *prior {
        GammaPrior::Gaussian { sigma0 } => gamma
            .iter()
            .map(|g| -0.5 * LN_2PI - sigma0.ln() - 0.5 * (g / sigma0).powi(2))
            .sum(),
        GammaPrior::Laplace { scale } => {
            gamma.iter().map(|g| -(2.0 * scale).ln() - g.abs() / scale).sum()
        }
        GammaPrior::Exponential { rate } => {
            if !prior.supports(gamma) {
                return f64::NEG_INFINITY;
            }
            gamma.iter().map(|g| rate.ln() - rate * g).sum()
        }
    }
}

/// Conditional posterior of the mean adjustment under a Gaussian prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    precision_chol: DMatrix<f64>,
}

impl GammaPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, gamma: &[f64]) -> f64 {
        let d = self.dim();
        let diff: Vec<f64> = gamma.iter().zip(self.mean.iter()).map(|(g, m)| g - m).collect();
        // precision = L Lᵀ, so the quadratic form is ‖Lᵀ diff‖².
        let mut quad = 0.0;
        for j in 0..d {
            let mut acc = 0.0;
            for i in j..d {
                acc += self.precision_chol[(i, j)] * diff[i];
            }
            quad += acc * acc;
        }
        let half_logdet_precision: f64 = self.precision_chol.diagonal().iter().map(|v| v.ln()).sum();
        -0.5 * d as f64 * LN_2PI + half_logdet_precision - 0.5 * quad
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let mut z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        // cov = L⁻ᵀ L⁻¹, so L⁻ᵀ z has the right covariance.
        for i in (0..d).rev() {
            let mut acc = z[i];
            for j in i + 1..d {
                acc -= self.precision_chol[(j, i)] * z[j];
            }
            z[i] = acc / self.precision_chol[(i, i)];
        }
        z.iter().zip(self.mean.iter()).map(|(a, m)| a + m).collect()
    }
}

/// Posterior of the mean adjustment given simulated moments and `s_obs`,
/// under the prior `N(0, sigma0² I)`.
pub fn gamma_posterior(
    est: &SyntheticLikelihoodEstimate,
    s_obs: &[f64],
    sigma0: f64,
) -> Result<GammaPosterior, SlError> {
    let d = est.dim();
    check_len(d, s_obs.len())?;
    let scale = diag_sqrt(&est.cov)?;
    let cov_inv = linalg::chol_inverse(&est.chol);

    let mut precision = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            precision[(i, j)] = scale[i] * cov_inv[(i, j)] * scale[j];
        }
        precision[(i, i)] += 1.0 / (sigma0 * sigma0);
    }
    let precision_chol = nalgebra::Cholesky::new(precision)
        .ok_or(SlError::DegenerateCovariance)?
        .unpack();
    let cov = linalg::chol_inverse(&precision_chol);

    let resid = DVector::from_iterator(d, s_obs.iter().zip(est.mean.iter()).map(|(s, m)| s - m));
    let weighted = &cov_inv * resid;
    let rhs = DVector::from_iterator(d, weighted.iter().zip(&scale).map(|(w, s)| w * s));
    let mean = &cov * rhs;
    Ok(GammaPosterior { mean, cov, precision_chol })
}
