use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use wgbsl_core::gmm::{self, EmConfig, GaussianMixture, ParticleCloud};
use wgbsl_core::rng::SimRng;

// Straight density sum with nalgebra inverses; no log-sum-exp.
fn naive_density(mix: &GaussianMixture, x: &[f64]) -> f64 {
    let d = mix.dim();
    let x = DVector::from_column_slice(x);
    mix.components()
        .iter()
        .map(|c| {
            let cov = c.covariance();
            let diff = &x - DVector::from_column_slice(&c.mean);
            let quad = (diff.transpose() * cov.clone().try_inverse().unwrap() * &diff)[0];
            let norm = (2.0 * std::f64::consts::PI).powi(d as i32) * cov.determinant();
            c.weight * (-0.5 * quad).exp() / norm.sqrt()
        })
        .sum()
}

fn random_mixture(rng: &mut SimRng, d: usize, k: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..k - 1].iter().sum();
    weights[k - 1] = 1.0 - head;
    let means = (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let chols = (0..k)
        .map(|_| {
            let mut l = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..i {
                    l[i * d + j] = rng.random_range(-0.5..0.5);
                }
                l[i * d + i] = rng.random_range(0.4..1.5);
            }
            l
        })
        .collect();
    GaussianMixture::new(weights, means, chols).unwrap()
}

fn normal_cloud(rng: &mut SimRng, m: usize, d: usize) -> ParticleCloud {
    ParticleCloud::new(d, (0..m * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

#[test]
fn density_matches_naive_sum() {
    let mut rng = SimRng::seed_from_u64(5);
    for _ in 0..50 {
        let d = rng.random_range(1..4);
        let k = rng.random_range(1..5);
        let mix = random_mixture(&mut rng, d, k);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let expect = naive_density(&mix, &x).ln();
        assert!((mix.log_density(&x) - expect).abs() < 1e-10);
    }
}

#[test]
fn far_tails_stay_finite() {
    let mix = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![vec![-1.0], vec![1.0]],
        vec![vec![0.1], vec![0.1]],
    )
    .unwrap();
    let lp = mix.log_density(&[60.0]);
    assert!(lp.is_finite());
    // Only the right component matters that far out.
    let single = 0.5f64.ln() - 0.5 * (2.0 * std::f64::consts::PI * 0.01).ln() - 0.5 * (59.0f64 / 0.1).powi(2);
    assert!((lp - single).abs() < 1e-9 * single.abs());
    assert!(mix.grad_log_density(&[60.0])[0].is_finite());
}

#[test]
fn density_integrates_to_one() {
    let mut rng = SimRng::seed_from_u64(9);
    let mix = random_mixture(&mut rng, 1, 3);
    let (lo, hi, n) = (-15.0, 15.0, 20_001);
    let h = (hi - lo) / (n - 1) as f64;
    let total: f64 = (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            w * mix.log_density(&[lo + i as f64 * h]).exp()
        })
        .sum::<f64>()
        * h;
    assert!((total - 1.0).abs() < 1e-8, "{total}");

    let mix = random_mixture(&mut rng, 2, 2);
    let n = 801;
    let h = (hi - lo) / (n - 1) as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = |t: usize| if t == 0 || t == n - 1 { 0.5 } else { 1.0 };
            total += w(i) * w(j) * mix.log_density(&[lo + i as f64 * h, lo + j as f64 * h]).exp();
        }
    }
    total *= h * h;
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn gaussian_data_scores_near_entropy_bound() {
    let mut rng = SimRng::seed_from_u64(21);
    let train = normal_cloud(&mut rng, 5000, 2);
    let test = normal_cloud(&mut rng, 5000, 2);
    let mix = gmm::fit(&train, 3, &EmConfig::default()).unwrap();
    // Expected log density of N(0, I) under itself is -(d/2)(1 + ln 2π).
    let entropy = -(1.0 + (2.0 * std::f64::consts::PI).ln());
    let held_out = mix.mean_log_likelihood(&test);
    assert!((held_out - entropy).abs() < 0.05, "{held_out} vs {entropy}");
}

#[test]
fn separated_clusters_are_recovered() {
    let mut rng = SimRng::seed_from_u64(33);
    let mut points = Vec::new();
    for i in 0..2000 {
        let centre = if i % 2 == 0 { 10.0 } else { -10.0 };
        points.push(centre + rng.sample::<f64, _>(StandardNormal));
        points.push(centre + rng.sample::<f64, _>(StandardNormal));
    }
    let cloud = ParticleCloud::new(2, points).unwrap();
    let mix = gmm::fit(&cloud, 2, &EmConfig::default()).unwrap();
    let mut comps: Vec<_> = mix.components().to_vec();
    comps.sort_by(|a, b| a.mean[0].total_cmp(&b.mean[0]));
    for (c, centre) in comps.iter().zip([-10.0, 10.0]) {
        assert!((c.weight - 0.5).abs() < 0.02);
        assert!(c.mean.iter().all(|m| (m - centre).abs() < 0.1), "{:?}", c.mean);
        let cov = c.covariance();
        assert!((cov - DMatrix::identity(2, 2)).amax() < 0.15);
    }
}

#[test]
fn fit_is_reproducible() {
    let mut rng = SimRng::seed_from_u64(2);
    let cloud = normal_cloud(&mut rng, 600, 3);
    let config = EmConfig { seed: 77, ..EmConfig::default() };
    assert_eq!(gmm::fit(&cloud, 3, &config).unwrap(), gmm::fit(&cloud, 3, &config).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), d in 1usize..4, k in 1usize..4) {
        let mut rng = SimRng::seed_from_u64(seed);
        let mix = random_mixture(&mut rng, d, k);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = mix.grad_log_density(&x);
        for i in 0..d {
            let h = 1e-5;
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (mix.log_density(&up) - mix.log_density(&down)) / (2.0 * h);
            prop_assert!((grad[i] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn weights_stay_normalized_after_em(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = SimRng::seed_from_u64(seed);
        let cloud = normal_cloud(&mut rng, 200, 2);
        let mix = gmm::fit(&cloud, k, &EmConfig { seed, ..EmConfig::default() }).unwrap();
        prop_assert!((mix.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(mix.components().iter().all(|c| c.chol.iter().all(|v| v.is_finite())));
    }
}
