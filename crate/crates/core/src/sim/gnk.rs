//! The g-and-k distribution and octile summaries.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::quantile::{sorted, sorted_quantile};
use super::SimError;

/// Fixed asymmetry constant `c` of the g-and-k family.
pub const C: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnkParams {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub k: f64,
}

impl GnkParams {
    pub fn new(a: f64, b: f64, g: f64, k: f64) -> Result<Self, SimError> {
        if !(b > 0.0) || !(k > -0.5) || ![a, b, g, k].iter().all(|v| v.is_finite()) {
            return Err(SimError::InvalidParameter(format!("(A, B, g, k) = ({a}, {b}, {g}, {k})")));
        }
        Ok(Self { a, b, g, k })
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self, SimError> {
        match theta {
            [a, b, g, k] => Self::new(*a, *b, *g, *k),
            _ => Err(SimError::DimensionMismatch { expected: 4, found: theta.len() }),
        }
    }

    /// `Q` as a function of the standard-normal quantile `z`.
    #[inline]
    pub fn quantile_z(&self, z: f64) -> f64 {
        let skew = 1.0 + C * (0.5 * self.g * z).tanh();
        self.a + self.b * skew * (1.0 + z * z).powf(self.k) * z
    }
}

/// `Q(p) = A + B [1 + 0.8 tanh(g z/2)] (1 + z²)^k z`, `z = Φ⁻¹(p)`.
pub fn gnk_quantile(p: f64, theta: &[f64]) -> Result<f64, SimError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SimError::InvalidParameter(format!("p = {p} outside (0, 1)")));
    }
    let params = GnkParams::from_slice(theta)?;
    let z = Normal::standard().inverse_cdf(p);
    Ok(params.quantile_z(z))
}

/// `n` draws `Q(U)`; `Φ⁻¹(U)` is drawn directly as a standard normal.
pub fn gnk_simulate<R: Rng + ?Sized>(theta: &[f64], n: usize, rng: &mut R) -> Result<Vec<f64>, SimError> {
    let params = GnkParams::from_slice(theta)?;
    Ok((0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            params.quantile_z(z)
        })
        .collect())
}

/// `(O₄, O₆−O₂, (O₇−O₅+O₃−O₁)/s_B, (O₆+O₂−2O₄)/s_B)` from type-7 octiles.
pub fn gnk_summarize(data: &[f64]) -> Result<[f64; 4], SimError> {
    if data.len() < 2 {
        return Err(SimError::TooFewObservations { needed: 2, found: data.len() });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite);
    }
    let s = sorted(data);
    let o: Vec<f64> = (0..=8).map(|j| sorted_quantile(&s, j, 8)).collect();
    let s_b = o[6] - o[2];
    if !(s_b > 0.0) {
        return Err(SimError::DegenerateSample);
    }
    Ok([o[4], s_b, (o[7] - o[5] + o[3] - o[1]) / s_b, (o[6] + o[2] - 2.0 * o[4]) / s_b])
}

/// Natural → working: `(A, log B, g, log(k + 1/2))`.
pub fn gnk_unconstrain(theta: &[f64]) -> Result<Vec<f64>, SimError> {
    let p = GnkParams::from_slice(theta)?;
    Ok(vec![p.a, p.b.ln(), p.g, (p.k + 0.5).ln()])
}

pub fn gnk_constrain(working: &[f64]) -> Vec<f64> {
    vec![working[0], working[1].exp(), working[2], working[3].exp() - 0.5]
}

pub fn gnk_constrain_jacobian(working: &[f64]) -> Vec<f64> {
    vec![1.0, working[1].exp(), 1.0, working[3].exp()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_a() {
        for theta in [[3.0, 1.0, 2.0, 0.5], [-1.0, 0.2, -3.0, 0.0]] {
            assert_eq!(gnk_quantile(0.5, &theta).unwrap(), theta[0]);
        }
    }

    #[test]
    fn reduces_to_normal() {
        let normal = Normal::new(1.5, 2.0).unwrap();
        for p in [0.01, 0.2, 0.5, 0.77, 0.999] {
            let q = gnk_quantile(p, &[1.5, 2.0, 0.0, 0.0]).unwrap();
            assert!((q - normal.inverse_cdf(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(gnk_quantile(0.0, &[0.0, 1.0, 0.0, 0.0]).is_err());
        assert!(gnk_quantile(1.0, &[0.0, 1.0, 0.0, 0.0]).is_err());
        assert!(gnk_quantile(0.5, &[0.0, -1.0, 0.0, 0.0]).is_err());
        assert!(gnk_quantile(0.5, &[0.0, 1.0, 0.0, -0.5]).is_err());
        assert_eq!(gnk_summarize(&[2.0; 10]), Err(SimError::DegenerateSample));
    }

    #[test]
    fn reparam_round_trip() {
        let theta = [3.0, 1.0, 2.0, 0.5];
        let back = gnk_constrain(&gnk_unconstrain(&theta).unwrap());
        for (a, b) in back.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
