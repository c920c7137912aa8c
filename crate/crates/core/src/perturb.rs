//! Random label and edge sparsification of client graphs.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Masks};
use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    #[serde(default)]
    pub label_drop_p: f64,
    #[serde(default)]
    pub edge_drop_p: f64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<(), PerturbError> {
        check_probability("label_drop_p", self.label_drop_p)?;
        check_probability("edge_drop_p", self.edge_drop_p)
    }

    pub fn is_identity(&self) -> bool {
        self.label_drop_p == 0.0 && self.edge_drop_p == 0.0
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), PerturbError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PerturbError::Probability { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelDropReport {
    pub dropped: usize,
    /// A train node was put back because every label had been dropped.
    pub restored: bool,
}

/// Removes each train node from the train mask with probability `p`. If
/// none would survive, one of the original train nodes is restored.
pub fn drop_labels(g: &Graph, p: f64, rng: &mut Rng) -> Result<(Graph, LabelDropReport), PerturbError> {
    check_probability("label_drop_p", p)?;
    let train_ids = Masks::ids(g.train_mask());
    let mut masks = g.masks().clone();
    let mut dropped = 0;
    for &v in &train_ids {
        if rng.gen_bool(p) {
            masks.train[v] = false;
            dropped += 1;
        }
    }
    let mut restored = false;
    if !train_ids.is_empty() && dropped == train_ids.len() {
        let keep = train_ids[rng.gen_range(0..train_ids.len())];
        masks.train[keep] = true;
        dropped -= 1;
        restored = true;
        log::warn!("label drop removed every train label; restored node {keep}");
    }
    let graph = g.with_masks(masks).expect("train mask only shrinks");
    Ok((graph, LabelDropReport { dropped, restored }))
}

/// Removes each undirected edge (both directions) with probability `p`.
pub fn drop_edges(g: &Graph, p: f64, rng: &mut Rng) -> Result<Graph, PerturbError> {
    check_probability("edge_drop_p", p)?;
    let kept: Vec<(usize, usize)> = g.edges().filter(|_| !rng.gen_bool(p)).collect();
    Ok(g.with_edges(&kept).expect("subset of valid edges").0)
}
