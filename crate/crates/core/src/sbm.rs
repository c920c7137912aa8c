//! Stochastic block model graphs with class-correlated sparse features.
//!
//! Node `v` belongs to block `v * blocks / n`, which is also its label. Each
//! block owns a contiguous "topic" slice of the feature space; a node's
//! binary bag-of-words draws each active word from its own topic with
//! probability `feature_signal` and uniformly otherwise.

use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::stratified_split;
use crate::graph::{build_graph, Graph};
use crate::rng::{stream, streams};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SbmError {
    #[error("bad SBM parameter {0}")]
    Parse(String),
    #[error("invalid SBM spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub blocks: usize,
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub words_per_node: usize,
    pub feature_signal: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            blocks: 7,
            n: 2000,
            p_in: 0.05,
            p_out: 0.002,
            feature_dim: 140,
            words_per_node: 12,
            feature_signal: 0.25,
            train_fraction: 0.2,
            val_fraction: 0.4,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<(), SbmError> {
        let bad = |m: &str| Err(SbmError::Invalid(m.to_string()));
        if self.blocks < 2 {
            return bad("blocks must be at least 2");
        }
        if self.n < self.blocks {
            return bad("n must be at least blocks");
        }
        for p in [self.p_in, self.p_out, self.feature_signal] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.feature_dim < self.blocks || self.words_per_node == 0 || self.words_per_node > self.feature_dim {
            return bad("need blocks <= feature_dim and 1 <= words_per_node <= feature_dim");
        }
        if self.train_fraction + self.val_fraction > 1.0 {
            return bad("train_fraction + val_fraction exceeds 1");
        }
        Ok(())
    }
}

/// Parses `key=value` tokens separated by whitespace or commas, e.g.
/// `blocks=7 n=2000 p_in=0.05 p_out=0.002`. Unset keys keep their defaults.
impl FromStr for SbmSpec {
    type Err = SbmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = SbmSpec::default();
        for token in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| SbmError::Parse(token.to_string()))?;
            let err = || SbmError::Parse(token.to_string());
            match key {
                "blocks" => spec.blocks = value.parse().map_err(|_| err())?,
                "n" => spec.n = value.parse().map_err(|_| err())?,
                "p_in" => spec.p_in = value.parse().map_err(|_| err())?,
                "p_out" => spec.p_out = value.parse().map_err(|_| err())?,
                "feature_dim" => spec.feature_dim = value.parse().map_err(|_| err())?,
                "words_per_node" => spec.words_per_node = value.parse().map_err(|_| err())?,
                "feature_signal" => spec.feature_signal = value.parse().map_err(|_| err())?,
                "train_fraction" => spec.train_fraction = value.parse().map_err(|_| err())?,
                "val_fraction" => spec.val_fraction = value.parse().map_err(|_| err())?,
                _ => return Err(err()),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub fn generate_sbm(spec: &SbmSpec, seed: u64) -> Result<Graph, SbmError> {
    spec.validate()?;
    let mut rng = stream(seed, streams::GENERATOR);
    let n = spec.n;
    let block = |v: usize| v * spec.blocks / n;
    let labels: Vec<u32> = (0..n).map(|v| block(v) as u32).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { spec.p_in } else { spec.p_out };
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let topic = spec.feature_dim / spec.blocks;
    let rows: Vec<Vec<(usize, f32)>> = (0..n)
        .map(|v| {
            let mut words: Vec<usize> = Vec::with_capacity(spec.words_per_node);
            while words.len() < spec.words_per_node {
                let w = if rng.gen_bool(spec.feature_signal) {
                    block(v) * topic + rng.gen_range(0..topic)
                } else {
                    rng.gen_range(0..spec.feature_dim)
                };
                if !words.contains(&w) {
                    words.push(w);
                }
            }
            words.into_iter().map(|w| (w, 1.0)).collect()
        })
        .collect();
    let features = CsrMatrix::from_rows(spec.feature_dim, rows);

    let mut split_rng = stream(seed, streams::SPLIT);
    let masks = stratified_split(&labels, spec.blocks, spec.train_fraction, spec.val_fraction, &mut split_rng);
    let (graph, _) = build_graph(&edges, features, labels, spec.blocks, masks)
        .map_err(|e| SbmError::Invalid(e.to_string()))?;
    Ok(graph)
}
