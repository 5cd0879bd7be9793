//! Mardia's multivariate skewness and kurtosis.

use nalgebra::DMatrix;

use crate::linalg;
use crate::synlik::{self, SlError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mardia {
    /// `b_{1,d} = n⁻² Σ_i Σ_j (z_iᵀ S⁻¹ z_j)³`
    pub skewness: f64,
    /// `b_{2,d} = n⁻¹ Σ_i (z_iᵀ S⁻¹ z_i)²`
    pub kurtosis: f64,
    /// `b_{2,d} − d(d+2)`, zero in expectation for a Gaussian.
    pub excess_kurtosis: f64,
}

/// Mardia statistics with the divisor-`n` covariance.
pub fn mardia<S: AsRef<[f64]>>(points: &[S]) -> Result<Mardia, SlError> {
    let est = synlik::sample_moments(points)?;
    let d = est.dim();
    let n = points.len();
    let l = linalg::to_row_major(&est.chol);
    let mut white = DMatrix::<f64>::zeros(d, n);
    for (i, p) in points.iter().enumerate() {
        let mut z: Vec<f64> = p.as_ref().iter().zip(est.mean.iter()).map(|(x, m)| x - m).collect();
        linalg::forward_solve(&l, d, &mut z);
        white.column_mut(i).copy_from_slice(&z);
    }
    let gram = white.transpose() * &white;
    let nf = n as f64;
    let skewness = gram.iter().map(|g| g * g * g).sum::<f64>() / (nf * nf);
    let kurtosis = gram.diagonal().iter().map(|g| g * g).sum::<f64>() / nf;
    let excess_kurtosis = kurtosis - (d * (d + 2)) as f64;
    Ok(Mardia { skewness, kurtosis, excess_kurtosis })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_cloud_has_zero_skewness() {
        let pts = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![2.0, -1.0], vec![-2.0, 1.0]];
        let m = mardia(&pts).unwrap();
        assert!(m.skewness.abs() < 1e-12);
        assert!(m.kurtosis > 0.0);
    }

    #[test]
    fn univariate_matches_moment_ratios() {
        let xs = [0.0, 1.0, 1.0, 2.0, 7.0];
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let m = mardia(&rows).unwrap();
        assert!((m.skewness - m3 * m3 / (m2 * m2 * m2)).abs() < 1e-10);
        assert!((m.kurtosis - m4 / (m2 * m2)).abs() < 1e-10);
    }
}
