//! Wasserstein Gaussianization: a particle flow that pushes a summary cloud
//! toward `N(0, I)`, and the composed map it leaves behind.

mod artifact;

use rayon::prelude::*;
use thiserror::Error;

use crate::gmm::{self, EmConfig, GaussianMixture, GmmError, MixtureScratch, ParticleCloud};
use crate::synlik::{self, SlError, SyntheticLikelihoodEstimate, LN_2PI};

pub use artifact::ArtifactError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WgError {
    #[error("validation cloud is empty")]
    EmptyValidation,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("flow diverged at step {step}")]
    Diverged { step: usize },
    #[error("transform overflow")]
    TransformOverflow,
    #[error("invalid step size {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Sl(#[from] SlError),
}

/// `v(x) = −x − ∇log μ(x)`: the velocity toward `N(0, I)`.
pub fn velocity(mix: &GaussianMixture, x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; x.len()];
    mix.log_density_and_grad(x, &mut v, &mut MixtureScratch::default());
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi = -xi - *vi;
    }
    v
}

/// One explicit step `x ← x + ε (−x − ∇log μ(x))`, in place.
/// Returns false when the result is not finite.
#[inline]
fn advance_point(
    mix: &GaussianMixture,
    epsilon: f64,
    x: &mut [f64],
    grad: &mut [f64],
    scratch: &mut MixtureScratch,
) -> bool {
    mix.log_density_and_grad(x, grad, scratch);
    let mut ok = true;
    for (xi, gi) in x.iter_mut().zip(grad.iter()) {
        *xi += epsilon * (-*xi - gi);
        ok &= xi.is_finite();
    }
    ok
}

fn advance_cloud(mix: &GaussianMixture, epsilon: f64, points: &mut [f64], d: usize) -> bool {
    points
        .par_chunks_mut(d)
        .map_init(
            || (vec![0.0; d], MixtureScratch::default()),
            |(grad, scratch), x| advance_point(mix, epsilon, x, grad, scratch),
        )
        .collect::<Vec<bool>>()
        .into_iter()
        .all(|ok| ok)
}

/// Pushes every particle one step along the velocity field of `mix`.
pub fn flow_step(
    cloud: &ParticleCloud,
    mix: &GaussianMixture,
    epsilon: f64,
) -> Result<ParticleCloud, WgError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(WgError::InvalidEpsilon(epsilon));
    }
    if cloud.dim() != mix.dim() {
        return Err(WgError::DimensionMismatch { expected: mix.dim(), found: cloud.dim() });
    }
    let mut out = cloud.clone();
    if !advance_cloud(mix, epsilon, out.as_mut_slice(), cloud.dim()) {
        return Err(WgError::Diverged { step: 0 });
    }
    Ok(out)
}

/// Mean of `−½‖s‖² − log μ(s)` over the validation cloud.
pub fn wg_lower_bound(mix: &GaussianMixture, validation: &ParticleCloud) -> Result<f64, WgError> {
    if validation.is_empty() {
        return Err(WgError::EmptyValidation);
    }
    if validation.dim() != mix.dim() {
        return Err(WgError::DimensionMismatch { expected: mix.dim(), found: validation.dim() });
    }
    let terms: Vec<f64> = validation
        .as_slice()
        .par_chunks(validation.dim())
        .map_init(MixtureScratch::default, |scratch, s| {
            let sq: f64 = s.iter().map(|v| v * v).sum();
            -0.5 * sq - mix.log_density_with(s, scratch)
        })
        .collect();
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// `(d/2) log 2π`, the value the lower bound approaches as the cloud
/// becomes standard normal.
pub fn lower_bound_target(d: usize) -> f64 {
    0.5 * d as f64 * LN_2PI
}

/// Per-coordinate affine pre-map `x ↦ (x − shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self { shift: vec![0.0; d], scale: vec![1.0; d] }
    }

    /// Mean and standard deviation of each coordinate; constant coordinates
    /// keep unit scale.
    pub fn fit(cloud: &ParticleCloud) -> Self {
        let (shift, var) = cloud.coordinate_moments();
        let scale = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { shift, scale }
    }

    #[inline]
    fn apply_in_place(&self, x: &mut [f64]) {
        for ((xi, m), s) in x.iter_mut().zip(&self.shift).zip(&self.scale) {
            *xi = (*xi - m) / s;
        }
    }

    fn apply_cloud(&self, cloud: &ParticleCloud) -> ParticleCloud {
        let mut out = cloud.clone();
        for x in out.as_mut_slice().chunks_exact_mut(cloud.dim()) {
            self.apply_in_place(x);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStep {
    pub mixture: GaussianMixture,
    pub epsilon: f64,
}

/// What training recorded about itself; stored with the artifact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub final_lb: f64,
}

/// Standardizer followed by the flow steps in training order.
#[derive(Debug, Clone, PartialEq)]
pub struct WgTransform {
    d: usize,
    pub standardizer: Standardizer,
    pub steps: Vec<FlowStep>,
    pub metadata: TrainingMetadata,
}

impl WgTransform {
    pub fn new(standardizer: Standardizer, steps: Vec<FlowStep>) -> Result<Self, WgError> {
        let d = standardizer.shift.len();
        if standardizer.scale.len() != d {
            return Err(WgError::DimensionMismatch { expected: d, found: standardizer.scale.len() });
        }
        for step in &steps {
            if step.mixture.dim() != d {
                return Err(WgError::DimensionMismatch { expected: d, found: step.mixture.dim() });
            }
            if !(step.epsilon > 0.0) || !step.epsilon.is_finite() {
                return Err(WgError::InvalidEpsilon(step.epsilon));
            }
        }
        Ok(Self { d, standardizer, steps, metadata: TrainingMetadata::default() })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(Standardizer::identity(d), Vec::new()).expect("consistent dimensions")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Maps one summary vector through the transform.
    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>, WgError> {
        let mut x = s.to_vec();
        self.apply_in_place(&mut x, &mut vec![0.0; self.d], &mut MixtureScratch::default())?;
        Ok(x)
    }

    fn apply_in_place(
        &self,
        x: &mut [f64],
        grad: &mut [f64],
        scratch: &mut MixtureScratch,
    ) -> Result<(), WgError> {
        if x.len() != self.d {
            return Err(WgError::DimensionMismatch { expected: self.d, found: x.len() });
        }
        self.standardizer.apply_in_place(x);
        for step in &self.steps {
            advance_point(&step.mixture, step.epsilon, x, grad, scratch);
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(WgError::TransformOverflow)
        }
    }

    /// Maps a batch of summaries, in parallel, preserving order.
    pub fn apply_all<S: AsRef<[f64]> + Sync>(&self, summaries: &[S]) -> Result<Vec<Vec<f64>>, WgError> {
        summaries
            .par_iter()
            .map_init(
                || (vec![0.0; self.d], MixtureScratch::default()),
                |(grad, scratch), s| {
                    let mut x = s.as_ref().to_vec();
                    self.apply_in_place(&mut x, grad, scratch).map(|_| x)
                },
            )
            .collect()
    }

    pub fn apply_cloud(&self, cloud: &ParticleCloud) -> Result<ParticleCloud, WgError> {
        let mapped = self.apply_all(&cloud.to_rows())?;
        Ok(ParticleCloud::from_rows(&mapped)?)
    }

    /// Writes the versioned text artifact.
    pub fn to_artifact(&self) -> String {
        artifact::write(self)
    }

    pub fn from_artifact(text: &str) -> Result<Self, ArtifactError> {
        artifact::read(text)
    }
}

/// Sample moments of the transformed summaries.
pub fn wg_moments<S: AsRef<[f64]> + Sync>(
    transform: &WgTransform,
    summaries: &[S],
) -> Result<SyntheticLikelihoodEstimate, WgError> {
    let mapped = transform.apply_all(summaries)?;
    Ok(synlik::sample_moments(&mapped)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WgConfig {
    pub epsilon: f64,
    /// Candidate component counts, chosen by validation log-likelihood.
    pub k_candidates: Vec<usize>,
    /// Re-select K every this many iterations; in between EM warm-starts.
    pub reselect_every: usize,
    pub smoothing_window: usize,
    pub patience: usize,
    pub max_iters: usize,
    /// Smallest smoothed-LB gain that counts as an improvement.
    pub min_delta: f64,
    /// Step-size halvings tried before a divergence is reported.
    pub max_halvings: usize,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for WgConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            k_candidates: vec![1, 2, 3, 5, 8],
            reselect_every: 25,
            smoothing_window: 10,
            patience: 20,
            max_iters: 500,
            min_delta: 1e-3,
            max_halvings: 4,
            em: EmConfig::default(),
            seed: 0,
        }
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct WgTraining {
    /// Truncated to the steps taken before the best smoothed bound.
    pub transform: WgTransform,
    /// Validation bound per iteration, before that iteration's step.
    pub lb_trace: Vec<f64>,
    pub smoothed_lb: Vec<f64>,
    /// Selected component count at each iteration.
    pub components: Vec<usize>,
    /// Iterations actually run, including those past the best one.
    pub iterations: usize,
    /// Clouds after the kept steps (standardized coordinates).
    pub train_final: ParticleCloud,
    pub validation_final: ParticleCloud,
}

/// Runs the flow: fit `μ^(k)` to the training particles, score it on the
/// validation particles, step both clouds, repeat until the smoothed bound
/// stalls for `patience` iterations or `max_iters` is reached.
pub fn train(
    train: &ParticleCloud,
    validation: &ParticleCloud,
    config: &WgConfig,
) -> Result<WgTraining, WgError> {
    if validation.is_empty() {
        return Err(WgError::EmptyValidation);
    }
    if train.dim() != validation.dim() {
        return Err(WgError::DimensionMismatch { expected: train.dim(), found: validation.dim() });
    }
    if !(config.epsilon > 0.0) || !config.epsilon.is_finite() {
        return Err(WgError::InvalidEpsilon(config.epsilon));
    }
    let d = train.dim();
    let standardizer = Standardizer::fit(train);
    let mut x_train = standardizer.apply_cloud(train);
    let mut x_val = standardizer.apply_cloud(validation);
    let em = EmConfig { seed: config.seed, ..config.em.clone() };
    let window = config.smoothing_window.max(1);
    let reselect = config.reselect_every.max(1);

    let mut steps: Vec<FlowStep> = Vec::new();
    let mut lb_trace = Vec::new();
    let mut smoothed_lb = Vec::new();
    let mut components = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut best_k = 0;
    let mut best_clouds = (x_train.clone(), x_val.clone());
    let mut patience = 0;
    let mut mixture: Option<GaussianMixture> = None;
    let mut epsilon = config.epsilon;

    for k in 0..config.max_iters {
        let mix = match (&mixture, k % reselect) {
            (Some(prev), r) if r != 0 => gmm::refine(&x_train, prev, &em)?.mixture,
            _ => {
                let em_k = EmConfig { seed: em.seed.wrapping_add(k as u64), ..em.clone() };
                gmm::select_components(&x_train, &x_val, &config.k_candidates, &em_k)?.0
            }
        };
        components.push(mix.n_components());
        let lb = wg_lower_bound(&mix, &x_val)?;
        lb_trace.push(lb);
        let tail = &lb_trace[lb_trace.len().saturating_sub(window)..];
        let smooth = tail.iter().sum::<f64>() / tail.len() as f64;
        smoothed_lb.push(smooth);
        if smooth > best + config.min_delta {
            best = smooth;
            best_k = k;
            best_clouds = (x_train.clone(), x_val.clone());
            patience = 0;
        } else {
            patience += 1;
            if patience >= config.patience {
                break;
            }
        }
        if k + 1 == config.max_iters {
            break;
        }

        let mut halvings = 0;
        loop {
            let mut next_train = x_train.clone();
            let mut next_val = x_val.clone();
            if advance_cloud(&mix, epsilon, next_train.as_mut_slice(), d)
                && advance_cloud(&mix, epsilon, next_val.as_mut_slice(), d)
            {
                x_train = next_train;
                x_val = next_val;
                break;
            }
            halvings += 1;
            if halvings > config.max_halvings {
                return Err(WgError::Diverged { step: k });
            }
            epsilon *= 0.5;
        }
        steps.push(FlowStep { mixture: mix.clone(), epsilon });
        mixture = Some(mix);
    }

    let iterations = lb_trace.len();
    steps.truncate(best_k);
    let mut transform = WgTransform::new(standardizer, steps)?;
    transform.metadata =
        TrainingMetadata { seed: config.seed, iterations, final_lb: lb_trace[best_k] };
    Ok(WgTraining {
        transform,
        lb_trace,
        smoothed_lb,
        components,
        iterations,
        train_final: best_clouds.0,
        validation_final: best_clouds.1,
    })
}
