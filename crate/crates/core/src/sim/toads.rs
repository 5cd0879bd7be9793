//! Fowler's toads movement model (random-return variant) and its
//! 12 lagged-displacement summaries.

use rand::Rng;

use super::quantile::{sorted, sorted_quantile};
use super::stable::{alpha_constrain, alpha_jacobian, alpha_unconstrain, StableParams, StableSampler};
use super::SimError;

pub const LAGS: [usize; 4] = [1, 2, 4, 8];
/// Displacements below this many metres count as returns.
pub const RETURN_THRESHOLD: f64 = 10.0;
/// Value reported for a log-spread statistic that cannot be formed.
pub const SENTINEL: f64 = 0.0;
pub const DEFAULT_DAYS: usize = 63;
pub const DEFAULT_TOADS: usize = 66;

/// Refuge positions: `days` rows by `toads` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToadsObservation {
    days: usize,
    toads: usize,
    positions: Vec<f64>,
}

impl ToadsObservation {
    pub fn new(days: usize, toads: usize, positions: Vec<f64>) -> Result<Self, SimError> {
        if positions.len() != days * toads {
            return Err(SimError::DimensionMismatch { expected: days * toads, found: positions.len() });
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite);
        }
        Ok(Self { days, toads, positions })
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn toads(&self) -> usize {
        self.toads
    }

    pub fn get(&self, day: usize, toad: usize) -> f64 {
        self.positions[day * self.toads + toad]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
}

/// Checks `α ∈ [1.1, 2]`, `γ > 0`, `p0 ∈ [0, 1]`.
fn check_theta(theta: &[f64]) -> Result<(StableParams, f64), SimError> {
    let [alpha, gamma, p0] = theta else {
        return Err(SimError::DimensionMismatch { expected: 3, found: theta.len() });
    };
    if !(0.0..=1.0).contains(p0) {
        return Err(SimError::InvalidParameter(format!("p0 = {p0}")));
    }
    Ok((StableParams::new(*alpha, 0.0, *gamma, 0.0)?, *p0))
}

/// Each toad starts at 0. Every night it either returns to one of its
/// earlier refuges, chosen uniformly (probability `p0`), or moves a
/// symmetric stable distance `S(α, γ)` from where it is.
pub fn toads_simulate<R: Rng + ?Sized>(
    theta: &[f64],
    days: usize,
    toads: usize,
    rng: &mut R,
) -> Result<ToadsObservation, SimError> {
    let (params, p0) = check_theta(theta)?;
    if days == 0 || toads == 0 {
        return Err(SimError::TooFewObservations { needed: 1, found: 0 });
    }
    let sampler = StableSampler::new(params);
    let mut positions = vec![0.0; days * toads];
    let mut history = Vec::with_capacity(days);
    for toad in 0..toads {
        history.clear();
        history.push(0.0);
        for _ in 1..days {
            let current = *history.last().expect("non-empty");
            let next = if rng.random::<f64>() < p0 {
                history[rng.random_range(0..history.len())]
            } else {
                current + sampler.sample(rng)
            };
            history.push(next);
        }
        for (day, pos) in history.iter().enumerate() {
            positions[day * toads + toad] = *pos;
        }
    }
    ToadsObservation::new(days, toads, positions)
}

/// The summary vector together with a flag raised when any log-spread
/// statistic fell back to [`SENTINEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToadsSummary {
    pub values: [f64; 12],
    pub degenerate: bool,
}

/// Per lag: number of returns (`|disp| < 10`), then
/// `log(median − min)` and `log(max − median)` of the non-returns.
pub fn toads_summarize(obs: &ToadsObservation) -> ToadsSummary {
    let mut values = [0.0; 12];
    let mut degenerate = false;
    for (slot, &lag) in LAGS.iter().enumerate() {
        let mut returns = 0usize;
        let mut far = Vec::new();
        for toad in 0..obs.toads {
            for day in 0..obs.days.saturating_sub(lag) {
                let disp = (obs.get(day, toad) - obs.get(day + lag, toad)).abs();
                if disp < RETURN_THRESHOLD {
                    returns += 1;
                } else {
                    far.push(disp);
                }
            }
        }
        values[3 * slot] = returns as f64;
        let (lower, upper) = if far.is_empty() {
            (0.0, 0.0)
        } else {
            let s = sorted(&far);
            let median = sorted_quantile(&s, 1, 2);
            (median - s[0], s[s.len() - 1] - median)
        };
        for (offset, spread) in [(1, lower), (2, upper)] {
            values[3 * slot + offset] = if spread > 0.0 {
                spread.ln()
            } else {
                degenerate = true;
                SENTINEL
            };
        }
    }
    ToadsSummary { values, degenerate }
}

/// Natural → working: `(log((α−1.1)/(2−α)), log γ, logit p0)`.
pub fn toads_unconstrain(theta: &[f64]) -> Result<Vec<f64>, SimError> {
    let (params, p0) = check_theta(theta)?;
    if !(params.alpha > 1.1 && params.alpha < 2.0) || !(p0 > 0.0 && p0 < 1.0) {
        return Err(SimError::InvalidParameter(format!("{theta:?} outside the open region")));
    }
    Ok(vec![alpha_unconstrain(params.alpha), params.gamma.ln(), (p0 / (1.0 - p0)).ln()])
}

pub fn toads_constrain(working: &[f64]) -> Vec<f64> {
    vec![alpha_constrain(working[0]), working[1].exp(), 1.0 / (1.0 + (-working[2]).exp())]
}

pub fn toads_constrain_jacobian(working: &[f64]) -> Vec<f64> {
    let p = 1.0 / (1.0 + (-working[2]).exp());
    vec![alpha_jacobian(working[0]), working[1].exp(), p * (1.0 - p)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn forced_return_stays_home() {
        let obs = toads_simulate(&[1.7, 35.0, 1.0], 20, 3, &mut SimRng::seed_from_u64(2)).unwrap();
        assert!(obs.positions().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn all_zero_matrix_takes_sentinel_path() {
        let obs = ToadsObservation::new(10, 2, vec![0.0; 20]).unwrap();
        let s = toads_summarize(&obs);
        assert!(s.degenerate);
        let counts: Vec<f64> = (0..4).map(|i| s.values[3 * i]).collect();
        assert_eq!(counts, vec![18.0, 16.0, 12.0, 4.0]);
        assert!((0..4).all(|i| s.values[3 * i + 1] == SENTINEL && s.values[3 * i + 2] == SENTINEL));
    }

    #[test]
    fn reparam_round_trip() {
        let theta = [1.7, 35.0, 0.6];
        let back = toads_constrain(&toads_unconstrain(&theta).unwrap());
        for (a, b) in back.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
