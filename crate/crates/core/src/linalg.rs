//! Small dense linear-algebra helpers shared by the density code.
//!
//! Hot loops work on row-major `&[f64]` lower-triangular factors; everything
//! else uses `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Relative jitter levels tried after an unjittered factorization fails.
pub const JITTER_LEVELS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// A Cholesky factor together with the diagonal jitter it absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct JitteredFactor {
    pub chol: DMatrix<f64>,
    /// Absolute amount added to every diagonal entry before factorizing.
    pub jitter: f64,
}

/// Adds `jitter` to the diagonal of a copy of `matrix`.
pub fn add_diagonal(matrix: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let mut out = matrix.clone();
    if jitter != 0.0 {
        for i in 0..out.nrows() {
            out[(i, i)] += jitter;
        }
    }
    out
}

fn cholesky_lower(matrix: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(matrix)?.unpack();
    if chol.diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(chol)
    } else {
        None
    }
}

/// Cholesky factorization that escalates a trace-scaled ridge
/// `eps * trace(matrix) / d` through [`JITTER_LEVELS`] until it succeeds.
///
/// The bare matrix is tried first. Returns `None` when even the largest
/// level fails (including the all-zero matrix, whose trace is zero).
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Option<JitteredFactor> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(chol) = cholesky_lower(matrix.clone()) {
        return Some(JitteredFactor { chol, jitter: 0.0 });
    }
    let d = matrix.nrows().max(1) as f64;
    let scale = matrix.trace() / d;
    if !(scale > 0.0) {
        return None;
    }
    JITTER_LEVELS.iter().find_map(|eps| {
        let jitter = eps * scale;
        cholesky_lower(add_diagonal(matrix, jitter)).map(|chol| JitteredFactor { chol, jitter })
    })
}

/// `2 * sum(log diag(chol))`.
pub fn chol_logdet(chol: &DMatrix<f64>) -> f64 {
    2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse of `L Lᵀ` from its lower factor.
pub fn chol_inverse(chol: &DMatrix<f64>) -> DMatrix<f64> {
    let d = chol.nrows();
    let identity = DMatrix::<f64>::identity(d, d);
    let l_inv = chol
        .solve_lower_triangular(&identity)
        .expect("factor with positive diagonal is invertible");
    l_inv.transpose() * l_inv
}

/// Solves `L z = b` in place; `l` is row-major lower-triangular `d x d`.
#[inline]
pub fn forward_solve(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let row = &l[i * d..i * d + i];
        let mut acc = b[i];
        for (lij, bj) in row.iter().zip(b.iter()) {
            acc -= lij * bj;
        }
        b[i] = acc / l[i * d + i];
    }
}

/// Solves `Lᵀ x = b` in place; `l` is row-major lower-triangular `d x d`.
#[inline]
pub fn backward_solve_transposed(l: &[f64], d: usize, b: &mut [f64]) {
    for i in (0..d).rev() {
        let mut acc = b[i];
        for j in i + 1..d {
            acc -= l[j * d + i] * b[j];
        }
        b[i] = acc / l[i * d + i];
    }
}

/// Row-major copy of a square matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * m.ncols());
    for i in 0..d {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(d: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, values)
}

/// Half-vectorization: the lower triangle stacked column by column.
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in j..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vech`]; the strict upper triangle is zero.
pub fn unvech(d: usize, values: &[f64]) -> DMatrix<f64> {
    assert_eq!(values.len(), d * (d + 1) / 2, "vech length mismatch");
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            m[(i, j)] = values[k];
            k += 1;
        }
    }
    m
}

pub fn dvec(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}
