use proptest::prelude::*;
use rand::SeedableRng;
use statrs::distribution::{ContinuousCDF, Normal};
use wgbsl_core::rng::{self, SimRng};
use wgbsl_core::sim::{
    alpha_stable_simulate, alpha_stable_summarize, by_name, gnk_quantile, gnk_simulate,
    gnk_summarize, toads_simulate, toads_summarize, toy_simulate, toy_summarize, AlphaStable,
    GAndK, Simulator, Toads, ToadsObservation, Toy,
};

const Z75: f64 = 0.674_489_750_196_081_7;
const Z95: f64 = 1.644_853_626_951_472_2;

#[test]
fn toy_noise_has_exponential_moments() {
    let mut rng = SimRng::seed_from_u64(1);
    let n = 1_000_000;
    let y = toy_simulate(0.0, n, &mut rng).unwrap();
    let [mean, var] = toy_summarize(&y).unwrap();
    // Noise is 2(E - 1) with E ~ Exp(1): mean 0, variance 4, fourth central moment 144.
    assert!(mean.abs() < 5.0 * (4.0 / n as f64).sqrt(), "{mean}");
    assert!((var - 4.0).abs() < 5.0 * (128.0 / n as f64).sqrt(), "{var}");
    let m3 = y.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n as f64;
    assert!((m3 / var.powf(1.5) - 2.0).abs() < 0.1, "{m3}");
    assert!(y.iter().all(|v| *v >= -2.0));
}

#[test]
fn symmetric_stable_is_centred() {
    let mut rng = SimRng::seed_from_u64(2);
    let x = alpha_stable_simulate(&[1.5, 0.0, 1.0, 0.0], 100_000, &mut rng).unwrap();
    let s = alpha_stable_summarize(&x).unwrap();
    // Median and skewness statistic of a symmetric law.
    assert!(s[3].abs() < 0.02, "{s:?}");
    assert!(s[1].abs() < 0.03, "{s:?}");
}

#[test]
fn stable_draws_are_reproducible() {
    let draw = |seed| {
        let mut rng = rng::stream(seed, &[4, 5]);
        alpha_stable_simulate(&[1.7, 0.3, 2.0, -1.0], 1000, &mut rng).unwrap()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}

#[test]
fn quantile_statistics_respect_mirroring_and_affine_maps() {
    let mut rng = SimRng::seed_from_u64(3);
    let x = alpha_stable_simulate(&[1.6, 0.5, 1.0, 0.3], 501, &mut rng).unwrap();
    let s = alpha_stable_summarize(&x).unwrap();
    let mirrored: Vec<f64> = x.iter().map(|v| -v).collect();
    let m = alpha_stable_summarize(&mirrored).unwrap();
    assert_eq!(m, [s[0], -s[1], s[2], -s[3]]);

    let (a, b) = (3.0, -7.0);
    let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
    let t = alpha_stable_summarize(&moved).unwrap();
    assert!((t[0] - s[0]).abs() < 1e-12);
    assert!((t[1] - s[1]).abs() < 1e-12);
    assert!((t[2] - a * s[2]).abs() < 1e-12);
    assert!((t[3] - (a * s[3] + b)).abs() < 1e-12);

    let g = gnk_summarize(&x).unwrap();
    let h = gnk_summarize(&moved).unwrap();
    assert!((h[0] - (a * g[0] + b)).abs() < 1e-12);
    assert!((h[1] - a * g[1]).abs() < 1e-12);
    assert!((h[2] - g[2]).abs() < 1e-12);
    assert!((h[3] - g[3]).abs() < 1e-12);
}

#[test]
fn gaussian_case_matches_normal_quantiles() {
    let mut rng = SimRng::seed_from_u64(4);
    // alpha = 2 is normal with sd gamma * sqrt(2).
    let gamma = 1.5;
    let sd = gamma * 2f64.sqrt();
    let x = alpha_stable_simulate(&[2.0, 0.0, gamma, 0.0], 200_000, &mut rng).unwrap();
    let s = alpha_stable_summarize(&x).unwrap();
    assert!((s[0] - Z95 / Z75).abs() < 0.02, "{s:?}");
    assert!((s[2] - 2.0 * Z75 * sd).abs() < 0.02 * sd, "{s:?}");

    // g = k = 0 is normal with scale B.
    let y = gnk_simulate(&[0.0, 2.0, 0.0, 0.0], 200_000, &mut rng).unwrap();
    let o = gnk_summarize(&y).unwrap();
    let s_b = 2.0 * 2.0 * Z75;
    assert!((o[1] - s_b).abs() < 0.02 * s_b, "{o:?}");
    assert!(o[2] > 0.0 && o[3].abs() < 0.02);
}

#[test]
fn octile_summaries_on_a_seven_point_sample() {
    let data = [13.0, 0.0, 5.0, 2.0, 8.0, 1.0, 3.0];
    // Octiles: 0.75, 1.5, 2.25, 3, 4.5, 6.5, 9.25.
    let s = gnk_summarize(&data).unwrap();
    let expect = [3.0, 5.0, 1.25, 0.4];
    for (got, want) in s.iter().zip(expect) {
        assert!((got - want).abs() < 1e-12, "{s:?}");
    }
}

#[test]
fn gnk_quantile_is_monotone() {
    let mut rng = SimRng::seed_from_u64(6);
    let mut thetas = vec![vec![3.0, 1.0, 2.0, 0.5]];
    for _ in 0..20 {
        use rand::Rng;
        thetas.push(vec![
            rng.random_range(-5.0..5.0),
            rng.random_range(0.1..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.0..3.0),
        ]);
    }
    for theta in thetas {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..2000 {
            let q = gnk_quantile(i as f64 / 2000.0, &theta).unwrap();
            assert!(q > prev, "{theta:?} at {i}");
            prev = q;
        }
    }
}

#[test]
fn heavier_tails_give_larger_spread_ratio() {
    let ratio = |alpha: f64| {
        let mut rng = SimRng::seed_from_u64(7);
        let x = alpha_stable_simulate(&[alpha, 0.0, 1.0, 0.0], 100_000, &mut rng).unwrap();
        alpha_stable_summarize(&x).unwrap()[0]
    };
    let r: Vec<f64> = [1.5, 1.8, 1.95].into_iter().map(ratio).collect();
    assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
}

#[test]
fn pure_walk_return_rate_matches_step_law() {
    let (days, toads) = (63, 66);
    let gamma = 10.0;
    let mut rng = SimRng::seed_from_u64(8);
    let obs = toads_simulate(&[2.0, gamma, 0.0], days, toads, &mut rng).unwrap();
    let s = toads_summarize(&obs);
    // Lag-one steps are N(0, 2 gamma^2); a return is |step| < 10.
    let p = 2.0 * Normal::standard().cdf(10.0 / (gamma * 2f64.sqrt())) - 1.0;
    let pairs = ((days - 1) * toads) as f64;
    let se = (pairs * p * (1.0 - p)).sqrt();
    assert!((s.values[0] - pairs * p).abs() < 4.0 * se, "{} vs {}", s.values[0], pairs * p);

    let home = toads_simulate(&[1.7, 30.0, 1.0], days, toads, &mut rng).unwrap();
    assert!(home.positions().iter().all(|v| *v == 0.0));
}

#[test]
fn doubling_positions_shifts_log_spreads() {
    let (days, toads) = (20, 3);
    let positions: Vec<f64> = (0..days)
        .flat_map(|d| (0..toads).map(move |t| 100.0 * (d * d) as f64 + 37.0 * t as f64 * d as f64))
        .collect();
    let obs = ToadsObservation::new(days, toads, positions.clone()).unwrap();
    let twice = ToadsObservation::new(days, toads, positions.iter().map(|v| 2.0 * v).collect()).unwrap();
    let a = toads_summarize(&obs);
    let b = toads_summarize(&twice);
    assert!(!a.degenerate && !b.degenerate);
    for slot in 0..4 {
        assert_eq!(a.values[3 * slot], 0.0);
        assert_eq!(b.values[3 * slot], 0.0);
        for off in 1..3 {
            let i = 3 * slot + off;
            assert!((b.values[i] - a.values[i] - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }
}

#[test]
fn trait_simulations_are_reproducible() {
    let sims: Vec<(Box<dyn Simulator>, Vec<f64>)> = vec![
        (Box::new(Toy { n: 30 }), vec![1.0]),
        (Box::new(AlphaStable { n: 200 }), vec![1.5, 0.5, 1.0, 0.0]),
        (Box::new(GAndK { n: 200 }), vec![3.0, 1.0, 2.0, 0.5]),
        (Box::new(Toads { days: 63, toads: 66, allow_degenerate: false }), vec![1.7, 35.0, 0.6]),
    ];
    for (sim, theta) in &sims {
        let run = |seed| sim.simulate_summary(theta, &mut rng::stream(seed, &[1])).unwrap();
        let first = run(5);
        assert_eq!(first.len(), sim.summary_dim());
        assert_eq!(first, run(5));
        assert_ne!(first, run(6));
    }
    assert!(by_name("nope", 10, 1).is_err());
}

fn open_theta(name: &str) -> BoxedStrategy<Vec<f64>> {
    match name {
        "toy" => prop::collection::vec(-50.0..50.0f64, 1).boxed(),
        "alpha-stable" => (1.11..1.99f64, -0.99..0.99f64, 0.01..20.0f64, -20.0..20.0f64)
            .prop_map(|(a, b, g, d)| vec![a, b, g, d])
            .boxed(),
        "g-and-k" => (-10.0..10.0f64, 0.01..10.0f64, -5.0..5.0f64, -0.49..5.0f64)
            .prop_map(|(a, b, g, k)| vec![a, b, g, k])
            .boxed(),
        _ => (1.11..1.99f64, 0.5..100.0f64, 0.01..0.99f64).prop_map(|(a, g, p)| vec![a, g, p]).boxed(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reparameterizations_round_trip(
        (name, theta) in prop_oneof![
            Just("toy"), Just("alpha-stable"), Just("g-and-k"), Just("toads")
        ].prop_flat_map(|n| (Just(n), open_theta(n)))
    ) {
        let sim = by_name(name, 10, 2).unwrap();
        let w = sim.unconstrain(&theta).unwrap();
        let back = sim.constrain(&w);
        for (a, b) in theta.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{name}: {theta:?} -> {back:?}");
        }
        let jac = sim.constrain_jacobian(&w);
        for i in 0..w.len() {
            let h = 1e-6;
            let mut up = w.clone();
            let mut down = w.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (sim.constrain(&up)[i] - sim.constrain(&down)[i]) / (2.0 * h);
            prop_assert!((jac[i] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }
}
