//! Synthetic data and LIBSVM ingestion.

use std::fs;
use std::path::Path;

use dsgd_core::losses::{norm, PartitionedDataset, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Ingest { line: usize, message: String },
    #[error("need {needed} rows, file has {found}")]
    InsufficientRows { needed: usize, found: usize },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid data request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelRule {
    /// `y = sign(<w*, x>)`, flipped with probability `flip`.
    Sign { flip: f64 },
    /// `y = <w*, x> + noise * N(0, 1)`.
    Linear { noise: f64 },
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::Sign { flip: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub dim: usize,
    pub feature_bound: f64,
    pub label_rule: LabelRule,
    pub seed: u64,
}

/// A generated dataset with the ground truth used to label it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: PartitionedDataset,
    pub truth: Vec<f64>,
    /// Row-major flags, set where a sign label was flipped.
    pub flipped: Vec<bool>,
}

const REPLACEMENT_STREAM: u64 = 0x5245_504c;
const POOL_STREAM: u64 = 0x504f_4f4c;

fn keyed_rng(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_mut(8).zip([seed, stream, a, b]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.m == 0 || self.n == 0 || self.dim == 0 {
            return Err(DataError::Invalid("m, n and dim must be positive".into()));
        }
        if !(self.feature_bound > 0.0 && self.feature_bound.is_finite()) {
            return Err(DataError::Invalid("feature bound must be positive".into()));
        }
        match self.label_rule {
            LabelRule::Sign { flip } if !(0.0..=1.0).contains(&flip) => {
                Err(DataError::Invalid("flip probability must lie in [0, 1]".into()))
            }
            LabelRule::Linear { noise } if !(noise >= 0.0 && noise.is_finite()) => {
                Err(DataError::Invalid("label noise must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    fn truth(&self) -> Vec<f64> {
        let mut rng = keyed_rng(self.seed, 0, 0, 0);
        let w: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let nw = norm(&w);
        if nw > 0.0 {
            w.iter().map(|v| v / nw).collect()
        } else {
            w
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, truth: &[f64]) -> (Sample, bool) {
        let scale = self.feature_bound / (self.dim as f64).sqrt();
        let mut x: Vec<f64> = (0..self.dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let nx = norm(&x);
        if nx > self.feature_bound {
            let s = self.feature_bound / nx;
            x.iter_mut().for_each(|v| *v *= s);
        }
        let margin: f64 = x.iter().zip(truth).map(|(a, b)| a * b).sum();
        match self.label_rule {
            LabelRule::Sign { flip } => {
                let clean = if margin >= 0.0 { 1.0 } else { -1.0 };
                let flipped = rng.random::<f64>() < flip;
                (Sample::new(x, if flipped { -clean } else { clean }), flipped)
            }
            LabelRule::Linear { noise } => {
                let eps: f64 = rng.sample(StandardNormal);
                (Sample::new(x, margin + noise * eps), false)
            }
        }
    }

    /// Largest `|y|` this generator can produce, or a high quantile for the linear rule.
    pub fn label_bound(&self) -> f64 {
        match self.label_rule {
            LabelRule::Sign { .. } => 1.0,
            LabelRule::Linear { noise } => self.feature_bound + 6.0 * noise,
        }
    }
}

/// Deterministic synthetic dataset: features are isotropic Gaussian scaled so
/// the typical norm is `B`, projected onto the `B`-ball when they exceed it.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic, DataError> {
    spec.validate()?;
    let truth = spec.truth();
    let mut rng = keyed_rng(spec.seed, 1, 0, 0);
    let mut shards = Vec::with_capacity(spec.m);
    let mut flipped = Vec::with_capacity(spec.m * spec.n);
    for _ in 0..spec.m {
        let mut shard = Vec::with_capacity(spec.n);
        for _ in 0..spec.n {
            let (s, f) = spec.draw(&mut rng, &truth);
            shard.push(s);
            flipped.push(f);
        }
        shards.push(shard);
    }
    let dataset = PartitionedDataset::new(shards, spec.feature_bound, Some(spec.seed))
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(Synthetic { dataset, truth, flipped })
}

/// Fresh draw from the generating distribution for position `(r, k)` on a dedicated sub-stream.
pub fn fresh_replacement(spec: &SyntheticSpec, r: usize, k: usize) -> Sample {
    let truth = spec.truth();
    let mut rng = keyed_rng(spec.seed, REPLACEMENT_STREAM, r as u64, k as u64);
    spec.draw(&mut rng, &truth).0
}

/// `count` held-out samples from the generating distribution.
pub fn eval_pool(spec: &SyntheticSpec, count: usize) -> Vec<Sample> {
    let truth = spec.truth();
    let mut rng = keyed_rng(spec.seed, POOL_STREAM, 0, 0);
    (0..count).map(|_| spec.draw(&mut rng, &truth).0).collect()
}

/// Reads `label idx:val ...` rows (1-based feature indices), keeps the first
/// `m * n` and rescales features so the largest norm equals `B`.
pub fn ingest_libsvm(path: &Path, m: usize, n: usize, feature_bound: f64) -> Result<PartitionedDataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    parse_libsvm(&text, m, n, feature_bound)
}

pub fn parse_libsvm(text: &str, m: usize, n: usize, feature_bound: f64) -> Result<PartitionedDataset, DataError> {
    if m == 0 || n == 0 {
        return Err(DataError::Invalid("m and n must be positive".into()));
    }
    let needed = m * n;
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::with_capacity(needed);
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| DataError::Ingest { line: lineno, message: format!("bad label {label_tok:?}") })?;
        let mut feats = Vec::new();
        for tok in tokens {
            let bad = || DataError::Ingest { line: lineno, message: format!("malformed feature {tok:?}") };
            let (i, v) = tok.split_once(':').ok_or_else(bad)?;
            let i: usize = i.parse().map_err(|_| bad())?;
            let v: f64 = v.parse().map_err(|_| bad())?;
            if i == 0 || !v.is_finite() {
                return Err(bad());
            }
            feats.push((i - 1, v));
        }
        rows.push((label, feats));
        if rows.len() == needed {
            break;
        }
    }
    if rows.len() < needed {
        return Err(DataError::InsufficientRows { needed, found: rows.len() });
    }
    let dim = rows.iter().flat_map(|(_, f)| f.iter().map(|(i, _)| i + 1)).max().unwrap_or(1);
    let mut dense: Vec<Sample> = rows
        .into_iter()
        .map(|(y, f)| {
            let mut x = vec![0.0; dim];
            for (i, v) in f {
                x[i] = v;
            }
            Sample::new(x, y)
        })
        .collect();
    let max_norm = dense.iter().map(|s| norm(&s.x)).fold(0.0, f64::max);
    if max_norm > 0.0 {
        let scale = feature_bound / max_norm;
        dense.iter_mut().for_each(|s| s.x.iter_mut().for_each(|v| *v *= scale));
    }
    let shards: Vec<Vec<Sample>> = dense.chunks(n).map(<[Sample]>::to_vec).collect();
    PartitionedDataset::new(shards, feature_bound, None).map_err(|e| DataError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec { m: 3, n: 7, dim: 4, feature_bound: 1.5, label_rule: LabelRule::default(), seed }
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = generate_synthetic(&spec(4)).unwrap();
        let b = generate_synthetic(&spec(4)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert!(a.dataset.samples().iter().all(|s| norm(&s.x) <= 1.5 * (1.0 + 1e-12)));
        assert_ne!(generate_synthetic(&spec(5)).unwrap().dataset, a.dataset);
    }

    #[test]
    fn replacement_is_keyed() {
        let s = spec(1);
        assert_eq!(fresh_replacement(&s, 1, 2), fresh_replacement(&s, 1, 2));
        assert_ne!(fresh_replacement(&s, 1, 2), fresh_replacement(&s, 2, 1));
    }

    #[test]
    fn libsvm_rows() {
        let text = "1 1:3 2:4\n-1 2:1\n# comment\n1 1:0.5\n-1 3:2\n";
        let d = parse_libsvm(text, 2, 2, 2.0).unwrap();
        assert_eq!(d.dim(), 3);
        let max = d.samples().iter().map(|s| norm(&s.x)).fold(0.0, f64::max);
        assert!((max - 2.0).abs() < 1e-12);
        assert!(matches!(parse_libsvm(text, 3, 2, 1.0), Err(DataError::InsufficientRows { needed: 6, found: 4 })));
        assert!(matches!(parse_libsvm("1 1:2\n1 x:2\n", 2, 1, 1.0), Err(DataError::Ingest { line: 2, .. })));
    }
}
