//! Summary corpora for training a WG transform.

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use wgbsl_core::rng::{self, tag};
use wgbsl_core::sim::{SimError, Simulator};

/// Redraws allowed per corpus item when simulation fails.
const MAX_REDRAWS: u64 = 5;

/// Integer sizes proportional to `fractions` summing to `total`. Floors are
/// taken first; the leftover units go to the largest remainders, ties to the
/// earlier part.
pub fn split_sizes(total: usize, fractions: &[f64]) -> Vec<usize> {
    let sum: f64 = fractions.iter().sum();
    let exact: Vec<f64> = fractions.iter().map(|f| total as f64 * f / sum).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let leftover = total - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle().take(leftover) {
        sizes[i] += 1;
    }
    sizes
}

pub struct Corpus {
    pub train: Vec<Vec<f64>>,
    pub validation: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

/// `m` summary vectors at natural `theta0`, item `j` drawn from stream
/// `(seed, [CORPUS, j, attempt])`.
pub fn simulate_corpus(sim: &dyn Simulator, theta0: &[f64], m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let items: Vec<Result<Vec<f64>, SimError>> = (0..m as u64)
        .into_par_iter()
        .map(|j| {
            let mut result = Err(SimError::DegenerateSample);
            for attempt in 0..=MAX_REDRAWS {
                let mut rng = rng::stream(seed, &[tag::CORPUS, j, attempt]);
                result = sim.simulate_summary(theta0, &mut rng);
                if result.is_ok() {
                    break;
                }
            }
            result
        })
        .collect();
    let mut out = Vec::with_capacity(m);
    for (j, item) in items.into_iter().enumerate() {
        match item {
            Ok(s) => out.push(s),
            Err(e) => bail!("corpus item {j} failed after {} attempts: {e}", MAX_REDRAWS + 1),
        }
    }
    Ok(out)
}

/// Shuffles with stream `(seed, [SPLIT])` and cuts into train, validation
/// and test parts.
pub fn split(mut summaries: Vec<Vec<f64>>, fractions: [f64; 3], seed: u64) -> Corpus {
    summaries.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    let sizes = split_sizes(summaries.len(), &fractions);
    let test = summaries.split_off(sizes[0] + sizes[1]);
    let validation = summaries.split_off(sizes[0]);
    Corpus { train: summaries, validation, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wgbsl_core::sim::Toy;

    #[test]
    fn rounding_rule() {
        assert_eq!(split_sizes(3000, &[1.0 / 3.0; 3]), vec![1000, 1000, 1000]);
        assert_eq!(split_sizes(5000, &[1.0 / 3.0; 3]), vec![1667, 1667, 1666]);
        assert_eq!(split_sizes(5, &[0.6, 0.2, 0.2]), vec![3, 1, 1]);
        assert_eq!(split_sizes(7, &[0.5, 0.25, 0.25]), vec![3, 2, 2]);
        assert_eq!(split_sizes(0, &[0.5, 0.25, 0.25]), vec![0, 0, 0]);
    }

    #[test]
    fn same_seed_same_split() {
        let toy = Toy { n: 30 };
        let a = split(simulate_corpus(&toy, &[0.0], 50, 9).unwrap(), [0.6, 0.2, 0.2], 9);
        let b = split(simulate_corpus(&toy, &[0.0], 50, 9).unwrap(), [0.6, 0.2, 0.2], 9);
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (30, 10, 10));
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
        let c = split(simulate_corpus(&toy, &[0.0], 50, 10).unwrap(), [0.6, 0.2, 0.2], 10);
        assert_ne!(a.train, c.train);
    }
}
