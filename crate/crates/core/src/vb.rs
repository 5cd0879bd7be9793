//! Marginal variational Bayes for BSL and mean-adjusted robust BSL.
//!
//! The variational family is `q = N(μ, (CCᵀ)⁻¹)` with `C` lower-triangular,
//! packed as `λ = (μ, vech(C))`. Gradients use the score-function estimator
//! with per-coordinate control variates; the optimizer is the
//! moving-average adaptive scheme with windowed lower-bound stopping.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg;
use crate::model::{GaussianPrior, SyntheticModel};
use crate::rng::{self, tag, SimRng};
use crate::synlik::{
    self, GammaPosterior, GammaPrior, SlError, SlMethod, SyntheticLikelihoodEstimate, LN_2PI,
};
use crate::wg::WgTransform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VbError {
    #[error("simulator failure after {attempts} attempts: {last}")]
    SimulatorFailure { attempts: usize, last: String },
    #[error("VB diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid variational parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Sl(#[from] SlError),
}

/// Cholesky Gaussian variational parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub mu: DVector<f64>,
    /// Lower-triangular with positive diagonal; `Σ⁻¹ = C Cᵀ`.
    pub c: DMatrix<f64>,
}

impl VariationalParams {
    pub fn new(mu: DVector<f64>, c: DMatrix<f64>) -> Result<Self, VbError> {
        let p = mu.len();
        if c.nrows() != p || c.ncols() != p {
            return Err(VbError::DimensionMismatch { expected: p, found: c.nrows() });
        }
        if (0..p).any(|i| !(c[(i, i)] > 0.0) || !c[(i, i)].is_finite()) {
            return Err(VbError::InvalidParams("C needs a positive diagonal".into()));
        }
        if (0..p).any(|j| (0..j).any(|i| c[(i, j)] != 0.0)) {
            return Err(VbError::InvalidParams("C must be lower-triangular".into()));
        }
        if mu.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(VbError::InvalidParams("non-finite entry".into()));
        }
        Ok(Self { mu, c })
    }

    /// `q = N(mean, diag(sd²))`.
    pub fn diagonal(mean: &[f64], sd: &[f64]) -> Result<Self, VbError> {
        let c = DMatrix::from_diagonal(&DVector::from_iterator(sd.len(), sd.iter().map(|s| 1.0 / s)));
        Self::new(DVector::from_column_slice(mean), c)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `p + p(p+1)/2`.
    pub fn packed_len(&self) -> usize {
        packed_len(self.dim())
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut out = self.mu.as_slice().to_vec();
        out.extend(linalg::vech(&self.c));
        out
    }

    pub fn unpack(p: usize, packed: &[f64]) -> Result<Self, VbError> {
        if packed.len() != packed_len(p) {
            return Err(VbError::DimensionMismatch { expected: packed_len(p), found: packed.len() });
        }
        Self::new(DVector::from_column_slice(&packed[..p]), linalg::unvech(p, &packed[p..]))
    }

    /// `Σ = (C Cᵀ)⁻¹`.
    pub fn covariance(&self) -> DMatrix<f64> {
        linalg::chol_inverse(&self.c)
    }

    /// `θ = μ + C⁻ᵀ z`, `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.dim();
        let mut z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for i in (0..p).rev() {
            let mut acc = z[i];
            for j in i + 1..p {
                acc -= self.c[(j, i)] * z[j];
            }
            z[i] = acc / self.c[(i, i)];
        }
        z.iter().zip(self.mu.iter()).map(|(a, m)| a + m).collect()
    }
}

pub fn packed_len(p: usize) -> usize {
    p + p * (p + 1) / 2
}

/// `−(p/2) log 2π + Σ log C_ii − ½ (θ−μ)ᵀ C Cᵀ (θ−μ)`.
pub fn log_q(lambda: &VariationalParams, theta: &[f64]) -> f64 {
    let p = lambda.dim();
    let r = DVector::from_iterator(p, theta.iter().zip(lambda.mu.iter()).map(|(t, m)| t - m));
    let w = lambda.c.tr_mul(&r);
    let log_det: f64 = lambda.c.diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * p as f64 * LN_2PI + log_det - 0.5 * w.norm_squared()
}

/// `(C Cᵀ (θ−μ), vech(diag(1/C_ii) − (θ−μ)(θ−μ)ᵀ C))`.
pub fn grad_log_q(lambda: &VariationalParams, theta: &[f64]) -> Vec<f64> {
    let p = lambda.dim();
    let r = DVector::from_iterator(p, theta.iter().zip(lambda.mu.iter()).map(|(t, m)| t - m));
    let w = lambda.c.tr_mul(&r);
    let grad_mu = &lambda.c * &w;
    // (r rᵀ C)_{ij} = r_i (Cᵀ r)_j
    let mut m = -(&r * w.transpose());
    for i in 0..p {
        m[(i, i)] += 1.0 / lambda.c[(i, i)];
    }
    let mut out = grad_mu.as_slice().to_vec();
    out.extend(linalg::vech(&m));
    out
}

/// Which posterior the optimizer targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VbMethod {
    Bsl,
    /// Mean-adjusted robust BSL with Gaussian `Γ` prior.
    RobustMean,
}

impl VbMethod {
    pub fn sl_method(self) -> SlMethod {
        match self {
            VbMethod::Bsl => SlMethod::Bsl,
            VbMethod::RobustMean => SlMethod::RobustMean,
        }
    }
}

/// The adjustment draw and its conditional posterior, for robust `h`.
#[derive(Debug, Clone, Copy)]
pub struct GammaDraw<'a> {
    pub gamma: &'a [f64],
    pub posterior: &'a GammaPosterior,
    pub sigma0: f64,
}

/// `log p(θ) + log p(Γ) + log φ(s_obs; μ̃, Σ̂) − log q(θ) − log p(Γ | θ, s_obs)`;
/// the `Γ` terms are absent for plain BSL.
pub fn h_lambda(
    method: VbMethod,
    lambda: &VariationalParams,
    prior: &GaussianPrior,
    theta: &[f64],
    est: &SyntheticLikelihoodEstimate,
    s_obs: &[f64],
    gamma: Option<GammaDraw<'_>>,
) -> Result<f64, VbError> {
    let base = prior.log_density(theta) - log_q(lambda, theta);
    match method {
        VbMethod::Bsl => Ok(base + synlik::synthetic_log_lik(SlMethod::Bsl, est, s_obs, None)?),
        VbMethod::RobustMean => {
            let draw = gamma.ok_or(SlError::MissingGamma(SlMethod::RobustMean))?;
            let loglik = synlik::synthetic_log_lik(SlMethod::RobustMean, est, s_obs, Some(draw.gamma))?;
            let log_prior = synlik::gamma_log_prior(draw.gamma, &GammaPrior::Gaussian { sigma0: draw.sigma0 });
            Ok(base + log_prior + loglik - draw.posterior.log_density(draw.gamma))
        }
    }
}

/// `c_i = cov(g_i h, g_i) / var(g_i)` over the batch; zero when `g_i` has
/// no variance.
pub fn optimal_control_variates(grads: &[Vec<f64>], h: &[f64]) -> Vec<f64> {
    let s = grads.len();
    assert_eq!(s, h.len(), "one h value per gradient");
    if s < 2 {
        return vec![0.0; grads.first().map_or(0, Vec::len)];
    }
    let d = grads[0].len();
    let sf = s as f64;
    (0..d)
        .map(|j| {
            let mean_g = grads.iter().map(|g| g[j]).sum::<f64>() / sf;
            let mean_gh = grads.iter().zip(h).map(|(g, hi)| g[j] * hi).sum::<f64>() / sf;
            let mut cov = 0.0;
            let mut var = 0.0;
            for (g, hi) in grads.iter().zip(h) {
                let dg = g[j] - mean_g;
                cov += (g[j] * hi - mean_gh) * dg;
                var += dg * dg;
            }
            if var > 0.0 {
                cov / var
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbConfig {
    /// θ draws per iteration (`S`).
    pub samples: usize,
    /// Simulations per θ (`N`).
    pub n_sims: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps0: f64,
    pub tau: f64,
    /// Rolling window for the lower-bound average.
    pub window: usize,
    /// Maximum patience `P`.
    pub patience: usize,
    pub max_iters: usize,
    pub method: VbMethod,
    pub sigma0: f64,
    /// θ redraws allowed after a failed simulation.
    pub max_redraws: usize,
    pub seed: u64,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            samples: 400,
            n_sims: 200,
            beta1: 0.9,
            beta2: 0.9,
            eps0: 0.01,
            tau: 1000.0,
            window: 50,
            patience: 50,
            max_iters: 5000,
            method: VbMethod::Bsl,
            sigma0: synlik::DEFAULT_SIGMA0,
            max_redraws: 5,
            seed: 0,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<(), VbError> {
        let bad = |m: &str| Err(VbError::InvalidConfig(m.into()));
        if self.samples < 2 {
            return bad("samples must be at least 2");
        }
        if self.n_sims < 2 {
            return bad("n_sims must be at least 2");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.eps0 > 0.0) || !(self.tau > 0.0) || !(self.sigma0 > 0.0) {
            return bad("eps0, tau and sigma0 must be positive");
        }
        if self.window == 0 || self.max_iters == 0 {
            return bad("window and max_iters must be positive");
        }
        Ok(())
    }
}

/// Model, prior and data shared by every gradient estimate.
pub struct VbProblem<'a> {
    pub model: &'a dyn SyntheticModel,
    pub prior: &'a GaussianPrior,
    /// Observed summaries, already mapped through `transform` if present.
    pub s_obs: &'a [f64],
    pub transform: Option<&'a WgTransform>,
}

/// One gradient estimate with the per-sample pieces kept for control
/// variates.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub lb: f64,
    pub grads: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
}

fn draw_sample(
    lambda: &VariationalParams,
    config: &VbConfig,
    problem: &VbProblem<'_>,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, f64), VbError> {
    let mut last = String::new();
    for _ in 0..=config.max_redraws {
        let theta = lambda.sample(rng);
        let est = match problem.model.estimate(&theta, config.n_sims, problem.transform, rng) {
            Ok(e) => e,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        let h = match config.method {
            VbMethod::Bsl => h_lambda(config.method, lambda, problem.prior, &theta, &est, problem.s_obs, None),
            VbMethod::RobustMean => synlik::gamma_posterior(&est, problem.s_obs, config.sigma0)
                .map_err(VbError::from)
                .and_then(|posterior| {
                    let gamma = posterior.sample(rng);
                    let draw = GammaDraw { gamma: &gamma, posterior: &posterior, sigma0: config.sigma0 };
                    h_lambda(config.method, lambda, problem.prior, &theta, &est, problem.s_obs, Some(draw))
                }),
        };
        match h {
            Ok(h) if h.is_finite() => return Ok((theta, h)),
            Ok(h) => last = format!("non-finite h = {h}"),
            Err(e) => last = e.to_string(),
        }
    }
    Err(VbError::SimulatorFailure { attempts: config.max_redraws + 1, last })
}

/// `(1/S) Σ ∇log q(θ_i) ∘ (h(θ_i) − c)` and `(1/S) Σ h(θ_i)`. Sample `i`
/// uses the stream `(seed, [VB, step, i])`.
pub fn estimate_lb_gradient(
    lambda: &VariationalParams,
    c: &[f64],
    config: &VbConfig,
    problem: &VbProblem<'_>,
    step: u64,
) -> Result<GradientEstimate, VbError> {
    if config.samples < 2 {
        return Err(VbError::InvalidConfig("samples must be at least 2".into()));
    }
    let dlen = lambda.packed_len();
    if c.len() != dlen {
        return Err(VbError::DimensionMismatch { expected: dlen, found: c.len() });
    }
    let draws: Vec<(Vec<f64>, f64)> = (0..config.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(config.seed, &[tag::VB, step, i]);
            draw_sample(lambda, config, problem, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let s = draws.len() as f64;
    let mut gradient = vec![0.0; dlen];
    let mut grads = Vec::with_capacity(draws.len());
    let mut h = Vec::with_capacity(draws.len());
    let mut thetas = Vec::with_capacity(draws.len());
    for (theta, hi) in draws {
        let g = grad_log_q(lambda, &theta);
        for ((acc, gj), cj) in gradient.iter_mut().zip(&g).zip(c) {
            *acc += gj * (hi - cj);
        }
        grads.push(g);
        h.push(hi);
        thetas.push(theta);
    }
    gradient.iter_mut().for_each(|v| *v /= s);
    let lb = h.iter().sum::<f64>() / s;
    Ok(GradientEstimate { gradient, lb, grads, h, thetas })
}

/// Optimizer state between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct VbState {
    pub lambda: VariationalParams,
    pub gbar: Vec<f64>,
    pub vbar: Vec<f64>,
    pub control_variates: Vec<f64>,
    pub lb_history: Vec<f64>,
    /// Windowed lower-bound means computed so far.
    pub lb_windows: Vec<f64>,
    pub iteration: usize,
    pub patience: usize,
    pub converged: bool,
}

/// One row of the optimizer trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Lower-bound estimate at the parameters before this update.
    pub lb: f64,
    /// Mean of the last `window` estimates (fewer at the start).
    pub smoothed_lb: f64,
    pub alpha: f64,
    pub patience: usize,
    pub cv_norm: f64,
    /// FNV-1a hash of the packed parameters after the update.
    pub lambda_hash: u64,
}

#[derive(Debug, Clone)]
pub struct VbRun {
    pub state: VbState,
    pub trace: Vec<TraceRow>,
}

fn hash_params(packed: &[f64]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in packed {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Runs the adaptive optimizer from `init` until the windowed lower bound
/// stops improving for `patience` windows, or `max_iters` updates.
pub fn optimize(
    config: &VbConfig,
    problem: &VbProblem<'_>,
    init: VariationalParams,
) -> Result<VbRun, VbError> {
    config.validate()?;
    let p = init.dim();
    if problem.model.param_dim() != p || problem.prior.dim() != p {
        return Err(VbError::DimensionMismatch { expected: p, found: problem.model.param_dim() });
    }
    if problem.s_obs.len() != problem.model.summary_dim() {
        return Err(VbError::DimensionMismatch {
            expected: problem.model.summary_dim(),
            found: problem.s_obs.len(),
        });
    }
    let dlen = init.packed_len();

    let first = estimate_lb_gradient(&init, &vec![0.0; dlen], config, problem, 0)?;
    let mut state = VbState {
        lambda: init,
        gbar: first.gradient.clone(),
        vbar: first.gradient.iter().map(|g| g * g).collect(),
        control_variates: optimal_control_variates(&first.grads, &first.h),
        lb_history: Vec::new(),
        lb_windows: Vec::new(),
        iteration: 0,
        patience: 0,
        converged: false,
    };
    let mut trace = Vec::new();
    let mut lr_scale = 1.0;
    let mut halved = false;

    for t in 0..config.max_iters {
        let est = estimate_lb_gradient(&state.lambda, &state.control_variates, config, problem, t as u64 + 1)?;
        let next_c = optimal_control_variates(&est.grads, &est.h);
        let gbar: Vec<f64> = state
            .gbar
            .iter()
            .zip(&est.gradient)
            .map(|(a, g)| config.beta1 * a + (1.0 - config.beta1) * g)
            .collect();
        let vbar: Vec<f64> = state
            .vbar
            .iter()
            .zip(&est.gradient)
            .map(|(a, g)| config.beta2 * a + (1.0 - config.beta2) * g * g)
            .collect();
        let alpha = lr_scale * config.eps0.min(config.eps0 * config.tau / t as f64);
        let packed = state.lambda.pack();
        let proposal: Vec<f64> = packed
            .iter()
            .zip(gbar.iter().zip(&vbar))
            .map(|(l, (g, v))| if *v > 0.0 { l + alpha * g / v.sqrt() } else { *l })
            .collect();
        let next = if proposal.iter().all(|v| v.is_finite()) {
            VariationalParams::unpack(p, &proposal).ok()
        } else {
            None
        };
        let Some(next) = next else {
            if halved {
                return Err(VbError::Diverged { iteration: t });
            }
            halved = true;
            lr_scale *= 0.5;
            continue;
        };

        state.lambda = next;
        state.gbar = gbar;
        state.vbar = vbar;
        state.control_variates = next_c;
        state.lb_history.push(est.lb);
        state.iteration = t + 1;

        let history = &state.lb_history;
        let tail = &history[history.len().saturating_sub(config.window)..];
        let smoothed = tail.iter().sum::<f64>() / tail.len() as f64;
        let mut stop = false;
        if t >= config.window {
            let best = state.lb_windows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if smoothed >= best {
                state.patience = 0;
            } else {
                state.patience += 1;
            }
            state.lb_windows.push(smoothed);
            stop = state.patience >= config.patience;
        }
        let cv_norm = state.control_variates.iter().map(|c| c * c).sum::<f64>().sqrt();
        trace.push(TraceRow {
            iteration: t,
            lb: est.lb,
            smoothed_lb: smoothed,
            alpha,
            patience: state.patience,
            cv_norm,
            lambda_hash: hash_params(&state.lambda.pack()),
        });
        if stop {
            state.converged = true;
            break;
        }
    }
    Ok(VbRun { state, trace })
}
