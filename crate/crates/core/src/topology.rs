//! Directed, weighted communication topologies built from client profiles.
//!
//! 1. In-degree: a client receives from every client with strictly lower
//!    WLSD, so `d_i = |{j ≠ i : WLSD_j < WLSD_i}|`.
//! 2. Neighbors: the `d_i` clients with the most similar CSE matrix (cosine
//!    of the flattened matrices), ties to the lower id.
//! 3. Weights: `α_ij ∝ exp(S(i, j)) · WLSD_j` over the aggregation set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heterogeneity::HeterogeneityProfile;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("profiles disagree on class count: {0} vs {1}")]
    ClassMismatch(usize, usize),
    #[error("need at least 2 clients, got {0}")]
    TooFewClients(usize),
    #[error("client {client} asks for {degree} neighbors among {available}")]
    DegreeTooLarge {
        client: usize,
        degree: usize,
        available: usize,
    },
    /// Nothing to aggregate: the caller keeps its local model.
    #[error("client {0} has an empty aggregation set")]
    SelfRetain(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedTopology {
    pub round: usize,
    /// `in_neighbors[i]`: clients whose models client `i` receives.
    pub in_neighbors: Vec<Vec<usize>>,
    /// `weights[i]`: aggregation weight per member of client `i`'s
    /// aggregation set (including `i` itself when `include_self`). Empty
    /// means the client keeps its own model.
    pub weights: Vec<BTreeMap<usize, f64>>,
    pub include_self: bool,
}

impl DirectedTopology {
    pub fn num_clients(&self) -> usize {
        self.in_neighbors.len()
    }

    /// Topology without links: every client keeps its own model.
    pub fn isolated(n: usize, round: usize, include_self: bool) -> Self {
        Self {
            round,
            in_neighbors: vec![Vec::new(); n],
            weights: (0..n)
                .map(|i| {
                    if include_self {
                        BTreeMap::from([(i, 1.0)])
                    } else {
                        BTreeMap::new()
                    }
                })
                .collect(),
            include_self,
        }
    }

    /// Uniform weights over each aggregation set.
    pub fn uniform(round: usize, in_neighbors: Vec<Vec<usize>>, include_self: bool) -> Self {
        let weights = in_neighbors
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                let mut members: Vec<usize> = nbrs.clone();
                if include_self {
                    members.push(i);
                }
                let w = 1.0 / members.len().max(1) as f64;
                members.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        Self {
            round,
            in_neighbors,
            weights,
            include_self,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.in_neighbors.iter().map(Vec::len).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    /// Graphviz digraph; an edge `j -> i` carries `α_ij` as its label.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph topology_round{} {{", self.round);
        let _ = writeln!(out, "  node [shape=circle];");
        for i in 0..self.num_clients() {
            match self.weights[i].get(&i) {
                Some(w) => {
                    let _ = writeln!(out, "  {i} [label=\"{i}\", self_weight=\"{w:.4}\"];");
                }
                None => {
                    let _ = writeln!(out, "  {i} [label=\"{i}\"];");
                }
            }
        }
        for (i, nbrs) in self.in_neighbors.iter().enumerate() {
            for &j in nbrs {
                let w = self.weights[i].get(&j).copied().unwrap_or(0.0);
                let _ = writeln!(out, "  {j} -> {i} [label=\"{w:.4}\", weight={w}];");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// `d_i` = number of other clients with strictly smaller WLSD.
pub fn adaptive_degrees(wlsd_values: &[f64]) -> Vec<usize> {
    wlsd_values
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            wlsd_values
                .iter()
                .enumerate()
                .filter(|&(j, &other)| j != i && other < w)
                .count()
        })
        .collect()
}

/// Cosine similarity of the flattened CSE matrices; 0 when either is zero.
pub fn cse_similarity(a: &HeterogeneityProfile, b: &HeterogeneityProfile) -> Result<f64, TopologyError> {
    if a.num_classes != b.num_classes {
        return Err(TopologyError::ClassMismatch(a.num_classes, b.num_classes));
    }
    let dot: f64 = a.cse.iter().zip(&b.cse).map(|(x, y)| x * y).sum();
    let na = a.cse.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.cse.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Full similarity matrix; the diagonal is 1 for nonzero CSE.
pub fn similarity_matrix(profiles: &[HeterogeneityProfile]) -> Result<Vec<Vec<f64>>, TopologyError> {
    let n = profiles.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = cse_similarity(&profiles[i], &profiles[j])?;
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    Ok(s)
}

/// The `degree` clients other than `i` with the largest similarity; ties
/// go to the lower client id. Returned in selection order.
pub fn select_neighbors(
    i: usize,
    degree: usize,
    similarity_row: &[f64],
) -> Result<Vec<usize>, TopologyError> {
    let available = similarity_row.len().saturating_sub(1);
    if degree > available {
        return Err(TopologyError::DegreeTooLarge {
            client: i,
            degree,
            available,
        });
    }
    let mut candidates: Vec<usize> = (0..similarity_row.len()).filter(|&j| j != i).collect();
    candidates.sort_by(|&a, &b| {
        similarity_row[b]
            .total_cmp(&similarity_row[a])
            .then(a.cmp(&b))
    });
    candidates.truncate(degree);
    Ok(candidates)
}

/// `α_ij = exp(S(i,j))·WLSD_j / Σ_k exp(S(i,k))·WLSD_k` over the aggregation
/// set (the neighbors, plus `i` itself with `S(i,i) = 1` when
/// `include_self`). Falls back to a softmax over similarities when every
/// WLSD in the set is zero.
pub fn aggregation_weights(
    i: usize,
    neighbors: &[usize],
    similarity_row: &[f64],
    wlsd_values: &[f64],
    include_self: bool,
) -> Result<BTreeMap<usize, f64>, TopologyError> {
    let mut members: Vec<(usize, f64)> = neighbors.iter().map(|&j| (j, similarity_row[j])).collect();
    if include_self {
        members.push((i, 1.0));
    }
    if members.is_empty() {
        return Err(TopologyError::SelfRetain(i));
    }
    let mut scores: Vec<f64> = members
        .iter()
        .map(|&(j, s)| s.exp() * wlsd_values[j])
        .collect();
    if scores.iter().all(|&s| s == 0.0) {
        log::warn!("client {i}: all WLSD in aggregation set are zero, weighting by similarity only");
        scores = members.iter().map(|&(_, s)| s.exp()).collect();
    }
    let total: f64 = scores.iter().sum();
    Ok(members
        .iter()
        .zip(scores)
        .map(|(&(j, _), s)| (j, s / total))
        .collect())
}

/// Degrees, neighbors and weights for every client.
pub fn build_topology(
    profiles: &[HeterogeneityProfile],
    round: usize,
    include_self: bool,
) -> Result<DirectedTopology, TopologyError> {
    let n = profiles.len();
    if n < 2 {
        return Err(TopologyError::TooFewClients(n));
    }
    let wlsd_values: Vec<f64> = profiles.iter().map(|p| p.wlsd).collect();
    let degrees = adaptive_degrees(&wlsd_values);
    let similarity = similarity_matrix(profiles)?;
    let mut in_neighbors = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs = select_neighbors(i, degrees[i], &similarity[i])?;
        let w = match aggregation_weights(i, &nbrs, &similarity[i], &wlsd_values, include_self) {
            Ok(w) => w,
            Err(TopologyError::SelfRetain(_)) => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        in_neighbors.push(nbrs);
        weights.push(w);
    }
    Ok(DirectedTopology {
        round,
        in_neighbors,
        weights,
        include_self,
    })
}

/// Paths written by [`export_topology`].
#[derive(Debug, Clone)]
pub struct ExportedSnapshot {
    pub json: PathBuf,
    pub dot: PathBuf,
}

/// Writes `topology_round<r>.json` and `topology_round<r>.dot` into `dir`.
pub fn export_topology(t: &DirectedTopology, dir: &Path) -> io::Result<ExportedSnapshot> {
    fs::create_dir_all(dir)?;
    let stem = format!("topology_round{}", t.round);
    let json = dir.join(format!("{stem}.json"));
    let dot = dir.join(format!("{stem}.dot"));
    crate::io::write_atomic(&json, t.to_json().as_bytes())?;
    crate::io::write_atomic(&dot, t.to_dot().as_bytes())?;
    Ok(ExportedSnapshot { json, dot })
}

pub fn load_topology(path: &Path) -> io::Result<DirectedTopology> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
