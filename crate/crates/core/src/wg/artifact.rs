//! Line-based text format for [`WgTransform`].
//!
//! ```text
//! wgbsl-transform 1
//! dim <d>
//! shift <d floats>
//! scale <d floats>
//! meta <seed> <iterations> <final_lb>
//! steps <n>
//! step <epsilon> <K>
//! component <weight>
//! mean <d floats>
//! chol <d*d floats, row-major>
//! ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a reloaded
//! transform is bit-identical.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{FlowStep, Standardizer, TrainingMetadata, WgTransform};
use crate::gmm::GaussianMixture;

const MAGIC: &str = "wgbsl-transform";
const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("transform artifact line {line}: {message}")]
pub struct ArtifactError {
    pub line: usize,
    pub message: String,
}

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

pub(super) fn write(t: &WgTransform) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "dim {}", t.d).unwrap();
    push_floats(&mut out, "shift", &t.standardizer.shift);
    push_floats(&mut out, "scale", &t.standardizer.scale);
    let m = &t.metadata;
    writeln!(out, "meta {} {} {}", m.seed, m.iterations, m.final_lb).unwrap();
    writeln!(out, "steps {}", t.steps.len()).unwrap();
    for step in &t.steps {
        writeln!(out, "step {} {}", step.epsilon, step.mixture.n_components()).unwrap();
        for c in step.mixture.components() {
            writeln!(out, "component {}", c.weight).unwrap();
            push_floats(&mut out, "mean", &c.mean);
            push_floats(&mut out, "chol", &c.chol);
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> ArtifactError {
        ArtifactError { line: self.line, message: message.into() }
    }

    /// Next non-blank line, which must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, ArtifactError> {
        loop {
            let Some((i, raw)) = self.inner.next() else {
                return Err(self.err(format!("unexpected end of input, wanted `{key}`")));
            };
            self.line = i + 1;
            let mut fields = raw.split_whitespace();
            match fields.next() {
                None => continue,
                Some(k) if k == key => return Ok(fields.collect()),
                Some(k) => return Err(self.err(format!("expected `{key}`, found `{k}`"))),
            }
        }
    }

    fn parse<T: FromStr>(&self, field: &str) -> Result<T, ArtifactError> {
        field.parse().map_err(|_| self.err(format!("cannot parse `{field}`")))
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>, ArtifactError> {
        let fields = self.expect(key)?;
        if fields.len() != n {
            return Err(self.err(format!("`{key}` needs {n} values, found {}", fields.len())));
        }
        fields.iter().map(|f| self.parse(f)).collect()
    }

    fn single<T: FromStr>(&mut self, key: &str) -> Result<T, ArtifactError> {
        let fields = self.expect(key)?;
        match fields.as_slice() {
            [f] => self.parse(f),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }
}

pub(super) fn read(text: &str) -> Result<WgTransform, ArtifactError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let version: u32 = lines.single(MAGIC)?;
    if version != VERSION {
        return Err(lines.err(format!("unsupported version {version}")));
    }
    let d: usize = lines.single("dim")?;
    let shift = lines.floats("shift", d)?;
    let scale = lines.floats("scale", d)?;
    let meta = lines.expect("meta")?;
    let metadata = match meta.as_slice() {
        [seed, iters, lb] => TrainingMetadata {
            seed: lines.parse(seed)?,
            iterations: lines.parse(iters)?,
            final_lb: lines.parse(lb)?,
        },
        _ => return Err(lines.err("`meta` takes seed, iterations and final bound")),
    };
    let n_steps: usize = lines.single("steps")?;
    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let head = lines.expect("step")?;
        let (epsilon, k): (f64, usize) = match head.as_slice() {
            [e, k] => (lines.parse(e)?, lines.parse(k)?),
            _ => return Err(lines.err("`step` takes epsilon and component count")),
        };
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut chols = Vec::with_capacity(k);
        for _ in 0..k {
            weights.push(lines.single("component")?);
            means.push(lines.floats("mean", d)?);
            chols.push(lines.floats("chol", d * d)?);
        }
        let mixture =
            GaussianMixture::new(weights, means, chols).map_err(|e| lines.err(e.to_string()))?;
        steps.push(FlowStep { mixture, epsilon });
    }
    lines.expect("end")?;
    let mut transform = WgTransform::new(Standardizer { shift, scale }, steps)
        .map_err(|e| lines.err(e.to_string()))?;
    transform.metadata = metadata;
    Ok(transform)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mix = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![vec![0.1, -1.0 / 3.0], vec![2.5, 1e-17]],
            vec![vec![1.1, 0.0, 0.2, 0.9], vec![0.7, 0.0, -0.4, 1.3]],
        )
        .unwrap();
        let mut t = WgTransform::new(
            Standardizer { shift: vec![0.1, std::f64::consts::PI], scale: vec![2.0, 0.123] },
            vec![FlowStep { mixture: mix, epsilon: 0.05 }],
        )
        .unwrap();
        t.metadata = TrainingMetadata { seed: 42, iterations: 7, final_lb: 1.83 };
        let text = t.to_artifact();
        let back = WgTransform::from_artifact(&text).unwrap();
        assert_eq!(back, t);
        let s = [0.37, -4.2];
        assert_eq!(back.apply(&s).unwrap(), t.apply(&s).unwrap());
    }

    #[test]
    fn rejects_garbage() {
        assert!(WgTransform::from_artifact("").is_err());
        assert!(WgTransform::from_artifact("wgbsl-transform 2\n").is_err());
        let text = WgTransform::identity(1).to_artifact().replace("end", "");
        assert!(WgTransform::from_artifact(&text).is_err());
    }
}
