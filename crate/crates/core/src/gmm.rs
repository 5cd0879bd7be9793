//! Full-covariance Gaussian mixtures: EM fitting, log-density and its
//! gradient in the point argument.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::linalg;
use crate::rng::{self, tag};
use crate::synlik::LN_2PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmmError {
    #[error("need at least {needed} particles for {k} components in dimension {d}, got {m}")]
    TooFewParticles { m: usize, k: usize, d: usize, needed: usize },
    #[error("mixture needs at least one component")]
    NoComponents,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("non-finite particle coordinate")]
    NonFinite,
}

/// `M` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    d: usize,
    points: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(d: usize, points: Vec<f64>) -> Result<Self, GmmError> {
        if d == 0 || points.len() % d != 0 {
            return Err(GmmError::DimensionMismatch { expected: d, found: points.len() });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::NonFinite);
        }
        Ok(Self { d, points })
    }

    pub fn from_rows<S: AsRef<[f64]>>(rows: &[S]) -> Result<Self, GmmError> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut points = Vec::with_capacity(d * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(GmmError::DimensionMismatch { expected: d, found: r.len() });
            }
            points.extend_from_slice(r);
        }
        if d == 0 {
            return Ok(Self { d: 0, points });
        }
        Self::new(d, points)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.points.len() / self.d
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.d.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.points
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Per-coordinate mean and variance (divisor `M`).
    pub fn coordinate_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.len() as f64;
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (a, v) in mean.iter_mut().zip(row) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; self.d];
        for row in self.rows() {
            for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *a += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|a| *a /= m);
        (mean, var)
    }
}

/// One mixture component with a cached normalizing term.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major lower Cholesky factor of the covariance.
    pub chol: Vec<f64>,
    pub logdet: f64,
    log_norm: f64,
}

impl Component {
    fn new(d: usize, weight: f64, mean: Vec<f64>, chol: Vec<f64>) -> Self {
        let logdet = 2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>();
        let log_norm = weight.ln() - 0.5 * d as f64 * LN_2PI - 0.5 * logdet;
        Self { weight, mean, chol, logdet, log_norm }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let l = linalg::from_row_major(self.mean.len(), &self.chol);
        &l * l.transpose()
    }
}

/// Reusable buffers for density and gradient evaluation.
#[derive(Debug, Clone, Default)]
pub struct MixtureScratch {
    whitened: Vec<f64>,
    terms: Vec<f64>,
    back: Vec<f64>,
}

/// A finite mixture of full-covariance Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    d: usize,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// Builds a mixture from weights, means and row-major lower factors.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        chols: Vec<Vec<f64>>,
    ) -> Result<Self, GmmError> {
        let k = weights.len();
        if k == 0 {
            return Err(GmmError::NoComponents);
        }
        if means.len() != k || chols.len() != k {
            return Err(GmmError::InvalidMixture("component count mismatch".into()));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(GmmError::InvalidMixture("zero dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(GmmError::InvalidMixture("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(GmmError::InvalidMixture(format!("weights sum to {total}")));
        }
        let mut components = Vec::with_capacity(k);
        for ((w, m), l) in weights.into_iter().zip(means).zip(chols) {
            if m.len() != d || l.len() != d * d {
                return Err(GmmError::DimensionMismatch { expected: d, found: m.len() });
            }
            if (0..d).any(|i| !(l[i * d + i] > 0.0) || !l[i * d + i].is_finite()) {
                return Err(GmmError::InvalidMixture("factor diagonal must be positive".into()));
            }
            if (0..d).any(|i| (i + 1..d).any(|j| l[i * d + j] != 0.0)) {
                return Err(GmmError::InvalidMixture("factor must be lower-triangular".into()));
            }
            if m.iter().chain(&l).any(|v| !v.is_finite()) {
                return Err(GmmError::NonFinite);
            }
            components.push(Component::new(d, w, m, l));
        }
        Ok(Self { d, components })
    }

    /// `N(0, I)` as a one-component mixture.
    pub fn standard_normal(d: usize) -> Self {
        Self::gaussian(vec![0.0; d], &DMatrix::identity(d, d)).expect("identity is SPD")
    }

    /// A single Gaussian with the given mean and covariance.
    pub fn gaussian(mean: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self, GmmError> {
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| GmmError::InvalidMixture("covariance not positive definite".into()))?
            .unpack();
        Self::new(vec![1.0], vec![mean], vec![linalg::to_row_major(&chol)])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GmmError> {
        if x.len() == self.d {
            Ok(())
        } else {
            Err(GmmError::DimensionMismatch { expected: self.d, found: x.len() })
        }
    }

    /// Fills `scratch.terms` with per-component log joint terms and
    /// `scratch.whitened` with `L_k⁻¹ (x - m_k)`; returns log-sum-exp.
    fn component_terms(&self, x: &[f64], scratch: &mut MixtureScratch) -> f64 {
        let d = self.d;
        let k = self.components.len();
        scratch.whitened.resize(k * d, 0.0);
        scratch.terms.resize(k, 0.0);
        let mut max = f64::NEG_INFINITY;
        for (idx, c) in self.components.iter().enumerate() {
            let z = &mut scratch.whitened[idx * d..(idx + 1) * d];
            for ((zi, xi), mi) in z.iter_mut().zip(x).zip(&c.mean) {
                *zi = xi - mi;
            }
            linalg::forward_solve(&c.chol, d, z);
            let quad: f64 = z.iter().map(|v| v * v).sum();
            let t = c.log_norm - 0.5 * quad;
            scratch.terms[idx] = t;
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = scratch.terms.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln()
    }

    /// `log Σ_k w_k φ(x; m_k, Σ_k)` via log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_with(x, &mut MixtureScratch::default())
    }

    pub fn log_density_with(&self, x: &[f64], scratch: &mut MixtureScratch) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        self.component_terms(x, scratch)
    }

    /// Checked variant of [`log_density`](Self::log_density).
    pub fn try_log_density(&self, x: &[f64]) -> Result<f64, GmmError> {
        self.check_dim(x)?;
        Ok(self.log_density(x))
    }

    /// Gradient of the log-density in `x`:
    /// `Σ_k r_k(x) · (−Σ_k⁻¹ (x − m_k))` with responsibilities `r_k`.
    pub fn grad_log_density(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.d];
        self.log_density_and_grad(x, &mut grad, &mut MixtureScratch::default());
        grad
    }

    /// Log-density and its gradient in one pass; the gradient goes to `grad`.
    pub fn log_density_and_grad(
        &self,
        x: &[f64],
        grad: &mut [f64],
        scratch: &mut MixtureScratch,
    ) -> f64 {
        let d = self.d;
        debug_assert_eq!(x.len(), d);
        let lse = self.component_terms(x, scratch);
        grad.iter_mut().for_each(|g| *g = 0.0);
        scratch.back.resize(d, 0.0);
        for (idx, c) in self.components.iter().enumerate() {
            let r = (scratch.terms[idx] - lse).exp();
            if r == 0.0 {
                continue;
            }
            let back = &mut scratch.back[..];
            back.copy_from_slice(&scratch.whitened[idx * d..(idx + 1) * d]);
            linalg::backward_solve_transposed(&c.chol, d, back);
            for (g, b) in grad.iter_mut().zip(back.iter()) {
                *g -= r * b;
            }
        }
        lse
    }

    /// Mean log-density over a cloud.
    pub fn mean_log_likelihood(&self, cloud: &ParticleCloud) -> f64 {
        let mut scratch = MixtureScratch::default();
        let total: f64 = cloud.rows().map(|x| self.log_density_with(x, &mut scratch)).sum();
        total / cloud.len() as f64
    }
}

/// EM settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Relative tolerance on the mean log-likelihood change.
    pub tol: f64,
    pub max_iter: usize,
    /// Independent k-means++ initializations; the best final fit is kept.
    pub restarts: usize,
    pub seed: u64,
    /// Eigenvalue floor relative to the cloud's mean coordinate variance.
    pub floor_rel: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 500, restarts: 3, seed: 0, floor_rel: 1e-6 }
    }
}

/// Result of one EM run.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub mixture: GaussianMixture,
    /// Mean training log-likelihood: initialization first, then one entry
    /// per EM iteration.
    pub log_lik_trace: Vec<f64>,
    pub converged: bool,
}

impl FitReport {
    pub fn final_log_lik(&self) -> f64 {
        *self.log_lik_trace.last().expect("trace is never empty")
    }
}

fn min_particles(k: usize, d: usize) -> usize {
    k * (d + 1)
}

fn check_fit_inputs(cloud: &ParticleCloud, k: usize) -> Result<(), GmmError> {
    if k == 0 {
        return Err(GmmError::NoComponents);
    }
    let needed = min_particles(k, cloud.dim());
    if cloud.len() < needed {
        return Err(GmmError::TooFewParticles { m: cloud.len(), k, d: cloud.dim(), needed });
    }
    Ok(())
}

fn variance_scale(cloud: &ParticleCloud) -> f64 {
    let (_, var) = cloud.coordinate_moments();
    let scale = var.iter().sum::<f64>() / var.len() as f64;
    if scale > 0.0 {
        scale
    } else {
        1.0
    }
}

/// Fits a `k`-component mixture by EM from k-means++ starts.
pub fn fit(cloud: &ParticleCloud, k: usize, config: &EmConfig) -> Result<GaussianMixture, GmmError> {
    fit_with_report(cloud, k, config).map(|r| r.mixture)
}

pub fn fit_with_report(
    cloud: &ParticleCloud,
    k: usize,
    config: &EmConfig,
) -> Result<FitReport, GmmError> {
    check_fit_inputs(cloud, k)?;
    let floor = config.floor_rel * variance_scale(cloud);
    let mut best: Option<FitReport> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = rng::stream(config.seed, &[tag::EM, k as u64, restart as u64]);
        let centers = kmeans_plus_plus(cloud, k, &mut rng);
        let init = hard_assignment_mixture(cloud, &centers, floor);
        let report = run_em(cloud, init, config, floor);
        if best.as_ref().is_none_or(|b| report.final_log_lik() > b.final_log_lik()) {
            best = Some(report);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// EM warm-started from an existing mixture.
pub fn refine(
    cloud: &ParticleCloud,
    init: &GaussianMixture,
    config: &EmConfig,
) -> Result<FitReport, GmmError> {
    check_fit_inputs(cloud, init.n_components())?;
    if init.dim() != cloud.dim() {
        return Err(GmmError::DimensionMismatch { expected: cloud.dim(), found: init.dim() });
    }
    let floor = config.floor_rel * variance_scale(cloud);
    Ok(run_em(cloud, init.clone(), config, floor))
}

/// Chooses the component count with the best validation mean log-likelihood.
/// Candidates that need more particles than available are skipped.
pub fn select_components(
    train: &ParticleCloud,
    validation: &ParticleCloud,
    candidates: &[usize],
    config: &EmConfig,
) -> Result<(GaussianMixture, Vec<(usize, f64)>), GmmError> {
    let mut scores = Vec::new();
    let mut best: Option<(f64, GaussianMixture)> = None;
    for &k in candidates {
        if k == 0 || train.len() < min_particles(k, train.dim()) {
            continue;
        }
        let mix = fit(train, k, config)?;
        let score = mix.mean_log_likelihood(validation);
        scores.push((k, score));
        if score.is_finite() && best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, mix));
        }
    }
    match best {
        Some((_, mix)) => Ok((mix, scores)),
        None => {
            let k = candidates.iter().copied().filter(|k| *k > 0).min().unwrap_or(1);
            Err(GmmError::TooFewParticles {
                m: train.len(),
                k,
                d: train.dim(),
                needed: min_particles(k, train.dim()),
            })
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_plus_plus<R: Rng + ?Sized>(cloud: &ParticleCloud, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let m = cloud.len();
    let mut centers = vec![cloud.row(rng.random_range(0..m)).to_vec()];
    let mut dist: Vec<f64> = cloud.rows().map(|x| squared_distance(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, w) in dist.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let center = cloud.row(idx).to_vec();
        for (dst, x) in dist.iter_mut().zip(cloud.rows()) {
            *dst = dst.min(squared_distance(x, &center));
        }
        centers.push(center);
    }
    centers
}

fn hard_assignment_mixture(cloud: &ParticleCloud, centers: &[Vec<f64>], floor: f64) -> GaussianMixture {
    let k = centers.len();
    let m = cloud.len();
    let mut resp = vec![0.0; m * k];
    for (i, x) in cloud.rows().enumerate() {
        let nearest = (0..k)
            .min_by(|&a, &b| {
                squared_distance(x, &centers[a]).total_cmp(&squared_distance(x, &centers[b]))
            })
            .expect("k >= 1");
        resp[i * k + nearest] = 1.0;
    }
    m_step(cloud, &resp, k, floor, None)
}

/// E-step: fills row-major `m x k` responsibilities, returns mean log-lik.
fn e_step(cloud: &ParticleCloud, mix: &GaussianMixture, resp: &mut [f64]) -> f64 {
    let k = mix.n_components();
    let mut scratch = MixtureScratch::default();
    let mut total = 0.0;
    for (i, x) in cloud.rows().enumerate() {
        let lse = mix.component_terms(x, &mut scratch);
        total += lse;
        for j in 0..k {
            resp[i * k + j] = (scratch.terms[j] - lse).exp();
        }
    }
    total / cloud.len() as f64
}

fn floored_factor(cov: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let needs_floor = match nalgebra::Cholesky::new(cov.clone()) {
        Some(c) => c.l().diagonal().iter().any(|v| v * v < floor),
        None => true,
    };
    let cov = if needs_floor {
        let eig = SymmetricEigen::new(cov);
        let clamped = eig.eigenvalues.map(|v| v.max(floor));
        &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
    } else {
        cov
    };
    let d = cov.nrows();
    let sym = (&cov + cov.transpose()) * 0.5;
    nalgebra::Cholesky::new(sym)
        .map(|c| c.unpack())
        .unwrap_or_else(|| DMatrix::identity(d, d) * floor.sqrt())
}

/// M-step from responsibilities. Components that lose all mass keep their
/// previous location and shape (if any) with zero weight.
fn m_step(
    cloud: &ParticleCloud,
    resp: &[f64],
    k: usize,
    floor: f64,
    previous: Option<&GaussianMixture>,
) -> GaussianMixture {
    let d = cloud.dim();
    let m = cloud.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut chols = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = (0..cloud.len()).map(|i| resp[i * k + j]).sum();
        if !(nk > 1e-12 * m) {
            let (mean, chol) = match previous {
                Some(p) => (p.components[j].mean.clone(), p.components[j].chol.clone()),
                None => {
                    let mut l = vec![0.0; d * d];
                    (0..d).for_each(|i| l[i * d + i] = floor.sqrt());
                    (cloud.row(0).to_vec(), l)
                }
            };
            weights.push(0.0);
            means.push(mean);
            chols.push(chol);
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, x) in cloud.rows().enumerate() {
            let r = resp[i * k + j];
            for (a, v) in mean.iter_mut().zip(x) {
                *a += r * v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= nk);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for (i, x) in cloud.rows().enumerate() {
            let r = resp[i * k + j];
            if r == 0.0 {
                continue;
            }
            for ((c, v), mu) in centered.iter_mut().zip(x).zip(&mean) {
                *c = v - mu;
            }
            for b in 0..d {
                for a in b..d {
                    cov[(a, b)] += r * centered[a] * centered[b];
                }
            }
        }
        for b in 0..d {
            for a in b..d {
                let v = cov[(a, b)] / nk;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        weights.push(nk / m);
        means.push(mean);
        chols.push(linalg::to_row_major(&floored_factor(cov, floor)));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let components = weights
        .into_iter()
        .zip(means)
        .zip(chols)
        .map(|((w, mu), l)| Component::new(d, w, mu, l))
        .collect();
    GaussianMixture { d, components }
}

fn run_em(cloud: &ParticleCloud, init: GaussianMixture, config: &EmConfig, floor: f64) -> FitReport {
    let k = init.n_components();
    let mut resp = vec![0.0; cloud.len() * k];
    let mut mixture = init;
    let mut ll = e_step(cloud, &mixture, &mut resp);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..config.max_iter {
        let next = m_step(cloud, &resp, k, floor, Some(&mixture));
        let next_ll = e_step(cloud, &next, &mut resp);
        mixture = next;
        trace.push(next_ll);
        let change = (next_ll - ll).abs();
        ll = next_ll;
        if change <= config.tol * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    FitReport { mixture, log_lik_trace: trace, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_cloud(m: usize, d: usize, seed: u64) -> ParticleCloud {
        let mut rng = crate::rng::SimRng::seed_from_u64(seed);
        let pts: Vec<f64> = (0..m * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        ParticleCloud::new(d, pts).unwrap()
    }

    #[test]
    fn standard_normal_values() {
        let mix = GaussianMixture::standard_normal(1);
        assert!((mix.log_density(&[0.0]) + 0.918_938_533_204_672_7).abs() < 1e-15);
        let x = [0.7, -1.3, 2.0];
        let mix = GaussianMixture::standard_normal(3);
        let g = mix.grad_log_density(&x);
        assert_eq!(g, vec![-0.7, 1.3, -2.0]);
    }

    #[test]
    fn duplicated_component_equals_single() {
        let single = GaussianMixture::standard_normal(2);
        let c = &single.components()[0];
        let twin = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![c.mean.clone(), c.mean.clone()],
            vec![c.chol.clone(), c.chol.clone()],
        )
        .unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [3.5, 0.25]] {
            assert!((twin.log_density(&x) - single.log_density(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn mirror_components_cancel_at_midpoint() {
        let chol = vec![1.2, 0.0, 0.3, 0.8];
        let mix = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![2.0, -1.0], vec![-2.0, 1.0]],
            vec![chol.clone(), chol],
        )
        .unwrap();
        let g = mix.grad_log_density(&[0.0, 0.0]);
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn rejects_bad_mixtures() {
        assert!(GaussianMixture::new(vec![], vec![], vec![]).is_err());
        assert!(GaussianMixture::new(vec![0.6], vec![vec![0.0]], vec![vec![1.0]]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![-1.0]]).is_err());
        assert!(
            GaussianMixture::new(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![1.0, 0.5, 0.0, 1.0]])
                .is_err()
        );
    }

    #[test]
    fn single_component_fit_is_sample_moments() {
        let cloud = normal_cloud(500, 3, 11);
        let mix = fit(&cloud, 1, &EmConfig::default()).unwrap();
        let est = crate::synlik::sample_moments(&cloud.to_rows()).unwrap();
        let c = &mix.components()[0];
        for i in 0..3 {
            assert!((c.mean[i] - est.mean[i]).abs() < 1e-8);
        }
        assert!((c.covariance() - &est.cov).abs().max() < 1e-8);
    }

    #[test]
    fn em_is_monotone() {
        let mut pts = normal_cloud(400, 2, 5).as_slice().to_vec();
        for (i, v) in pts.iter_mut().enumerate() {
            if i % 4 < 2 {
                *v += 4.0;
            }
        }
        let cloud = ParticleCloud::new(2, pts).unwrap();
        for k in [2, 3, 5] {
            let cfg = EmConfig { seed: k as u64, ..EmConfig::default() };
            let report = fit_with_report(&cloud, k, &cfg).unwrap();
            for w in report.log_lik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "k={k}: {} -> {}", w[0], w[1]);
            }
            let total: f64 = report.mixture.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_particles_is_an_error() {
        let cloud = normal_cloud(5, 2, 1);
        assert!(matches!(fit(&cloud, 2, &EmConfig::default()), Err(GmmError::TooFewParticles { .. })));
        assert_eq!(fit(&cloud, 0, &EmConfig::default()).unwrap_err(), GmmError::NoComponents);
    }

    #[test]
    fn collapsed_cluster_is_floored_not_an_error() {
        // Half the cloud sits on a single point.
        let mut rows = normal_cloud(100, 2, 3).to_rows();
        rows.extend(std::iter::repeat_n(vec![5.0, 5.0], 100));
        let cloud = ParticleCloud::from_rows(&rows).unwrap();
        let mix = fit(&cloud, 2, &EmConfig::default()).unwrap();
        assert!(mix.log_density(&[5.0, 5.0]).is_finite());
        for c in mix.components() {
            assert!((0..2).all(|i| c.chol[i * 2 + i] > 0.0));
        }
    }

    #[test]
    fn selection_skips_oversized_candidates() {
        let train = normal_cloud(30, 2, 1);
        let val = normal_cloud(30, 2, 2);
        let (_, scores) = select_components(&train, &val, &[1, 2, 3, 5, 8, 20], &EmConfig::default()).unwrap();
        let ks: Vec<usize> = scores.iter().map(|s| s.0).collect();
        assert_eq!(ks, vec![1, 2, 3, 5, 8]);
    }
}
