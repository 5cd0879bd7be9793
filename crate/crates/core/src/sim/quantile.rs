//! Linear interpolation of order statistics (the "type 7" rule).
//!
//! Levels are rationals `j/den`. Upper levels are computed from the top of
//! the sorted sample with the same interpolation weight as the mirrored
//! lower level, so a sample symmetric about zero gives `q(1−p) = −q(p)`
//! bit for bit.

/// Quantile at level `j/den` of an ascending, non-empty sample.
pub fn sorted_quantile(sorted: &[f64], j: usize, den: usize) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!(j <= den && den > 0, "level outside [0, 1]");
    let n = sorted.len();
    let (lower_j, from_top) = if 2 * j <= den { (j, false) } else { (den - j, true) };
    let h = ((n - 1) * lower_j) as f64 / den as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if from_top {
        let a = sorted[n - 1 - lo];
        if frac == 0.0 {
            a
        } else {
            a - frac * (a - sorted[n - 2 - lo])
        }
    } else {
        let a = sorted[lo];
        if frac == 0.0 {
            a
        } else {
            a + frac * (sorted[lo + 1] - a)
        }
    }
}

/// Ascending copy; NaNs sort last.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
