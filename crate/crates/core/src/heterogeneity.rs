//! Client heterogeneity profiles.
//!
//! A profile holds two things a client broadcasts before topology
//! construction:
//!
//! * **WLSD**, a scalar: for every class, the mean shortest-path distance
//!   between same-labeled nodes, averaged over classes with weights
//!   proportional to `log(1 + class size)`.
//! * **CSE**, a `K × K` matrix: row `k` averages `½(ŷ_i + ŷ_j) · d(i, j)` over
//!   sampled pairs of class-`k` nodes, where `ŷ` are the model's soft labels.
//!
//! Class membership always comes from ground-truth labels of training nodes.
//! A class takes part only when it has at least two such nodes and at least
//! one pair of them is connected; other classes get zero weight and a zero
//! CSE row.

use std::collections::HashMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcn::Matrix;
use crate::graph::{bfs_distances, DistanceRow, Graph};
use crate::rng::Rng;

/// Pairs sampled per class for CSE rows unless configured otherwise.
pub const DEFAULT_PAIR_BUDGET: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum HeterogeneityError {
    #[error("class needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("no eligible class")]
    NoEligibleClass,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// BFS rows computed on demand and kept for the lifetime of one profile
/// build.
pub struct DistanceCache<'g> {
    graph: &'g Graph,
    rows: HashMap<usize, DistanceRow>,
}

impl<'g> DistanceCache<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Self {
            graph,
            rows: HashMap::new(),
        }
    }

    pub fn row(&mut self, source: usize) -> &DistanceRow {
        let graph = self.graph;
        self.rows
            .entry(source)
            .or_insert_with(|| bfs_distances(graph, source))
    }

    pub fn distance(&mut self, a: usize, b: usize) -> Option<u32> {
        self.row(a).get(b)
    }

    pub fn rows_computed(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDispersion {
    /// Mean distance over reachable ordered pairs; `None` when no pair is
    /// reachable.
    pub mean: Option<f64>,
    pub reachable_pairs: usize,
    pub total_pairs: usize,
}

/// Mean hop distance between distinct nodes of one class, over ordered
/// reachable pairs. All graph nodes may serve as transit.
pub fn class_dispersion(g: &Graph, class_nodes: &[usize]) -> Result<ClassDispersion, HeterogeneityError> {
    class_dispersion_with(&mut DistanceCache::new(g), class_nodes)
}

pub fn class_dispersion_with(
    cache: &mut DistanceCache<'_>,
    class_nodes: &[usize],
) -> Result<ClassDispersion, HeterogeneityError> {
    let n = class_nodes.len();
    if n < 2 {
        return Err(HeterogeneityError::TooFewNodes(n));
    }
    let mut sum: u64 = 0;
    let mut reachable = 0usize;
    for &i in class_nodes {
        let row = cache.row(i);
        for &j in class_nodes {
            if i != j {
                if let Some(d) = row.get(j) {
                    sum += d as u64;
                    reachable += 1;
                }
            }
        }
    }
    Ok(ClassDispersion {
        mean: (reachable > 0).then(|| sum as f64 / reachable as f64),
        reachable_pairs: reachable,
        total_pairs: n * (n - 1),
    })
}

/// `log(1 + |V_k|)` weights normalized over eligible classes; ineligible
/// classes get 0.
pub fn class_weights(class_sizes: &[usize], eligible: &[bool]) -> Result<Vec<f64>, HeterogeneityError> {
    if class_sizes.len() != eligible.len() {
        return Err(HeterogeneityError::Dimension(format!(
            "{} class sizes, {} eligibility flags",
            class_sizes.len(),
            eligible.len()
        )));
    }
    let raw: Vec<f64> = class_sizes
        .iter()
        .zip(eligible)
        .map(|(&s, &e)| if e { (1.0 + s as f64).ln() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    if !eligible.iter().any(|&e| e) || total <= 0.0 {
        return Err(HeterogeneityError::NoEligibleClass);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wlsd {
    pub value: f64,
    pub eligible: Vec<bool>,
    pub dispersions: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    /// Set when no class qualified; `value` is then 0.
    pub no_eligible_class: bool,
}

/// Weighted label spatial dispersion of a graph given the labeled nodes of
/// each class.
pub fn wlsd(g: &Graph, nodes_by_class: &[Vec<usize>]) -> Wlsd {
    wlsd_with(&mut DistanceCache::new(g), nodes_by_class)
}

pub fn wlsd_with(cache: &mut DistanceCache<'_>, nodes_by_class: &[Vec<usize>]) -> Wlsd {
    let k = nodes_by_class.len();
    let mut dispersions = vec![None; k];
    let mut eligible = vec![false; k];
    for (c, nodes) in nodes_by_class.iter().enumerate() {
        if nodes.len() < 2 {
            continue;
        }
        let d = class_dispersion_with(cache, nodes).expect("size checked");
        dispersions[c] = d.mean;
        eligible[c] = d.mean.is_some();
    }
    let sizes: Vec<usize> = nodes_by_class.iter().map(Vec::len).collect();
    match class_weights(&sizes, &eligible) {
        Ok(weights) => {
            let value = weights
                .iter()
                .zip(&dispersions)
                .map(|(&w, d)| w * d.unwrap_or(0.0))
                .sum();
            Wlsd {
                value,
                eligible,
                dispersions,
                weights,
                no_eligible_class: false,
            }
        }
        Err(_) => {
            log::warn!("no class has two connected labeled nodes; WLSD set to 0");
            Wlsd {
                value: 0.0,
                eligible,
                dispersions,
                weights: vec![0.0; k],
                no_eligible_class: true,
            }
        }
    }
}

/// Up to `budget` distinct unordered pairs drawn uniformly without
/// replacement; every pair when the budget covers them all. Pairs are
/// returned as `(a, b)` node ids with `a` earlier than `b` in `class_nodes`,
/// sorted by position.
pub fn sample_pairs(class_nodes: &[usize], budget: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let n = class_nodes.len();
    if n < 2 {
        return Vec::new();
    }
    let total = n * (n - 1) / 2;
    let mut picks: Vec<usize> = if budget >= total {
        (0..total).collect()
    } else {
        index::sample(rng, total, budget).into_vec()
    };
    picks.sort_unstable();
    // Pair index p enumerates (a, b), a < b, row by row.
    let mut out = Vec::with_capacity(picks.len());
    let mut a = 0;
    let mut row_start = 0;
    for p in picks {
        while p >= row_start + (n - 1 - a) {
            row_start += n - 1 - a;
            a += 1;
        }
        let b = a + 1 + (p - row_start);
        out.push((class_nodes[a], class_nodes[b]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticVector {
    pub values: Vec<f64>,
    /// Pairs left after dropping unreachable ones.
    pub pairs_used: usize,
    /// Set when every pair was unreachable (or none given).
    pub empty: bool,
}

/// Mean of `½(ŷ_i + ŷ_j) · d(i, j)` over the reachable pairs.
pub fn class_semantic_vector(
    g: &Graph,
    pairs: &[(usize, usize)],
    soft_labels: &Matrix<f64>,
) -> SemanticVector {
    class_semantic_vector_with(&mut DistanceCache::new(g), pairs, soft_labels)
}

pub fn class_semantic_vector_with(
    cache: &mut DistanceCache<'_>,
    pairs: &[(usize, usize)],
    soft_labels: &Matrix<f64>,
) -> SemanticVector {
    let k = soft_labels.cols();
    let mut values = vec![0.0; k];
    let mut used = 0usize;
    for &(i, j) in pairs {
        let Some(d) = cache.distance(i, j) else {
            continue;
        };
        used += 1;
        let d = d as f64;
        for ((v, &a), &b) in values.iter_mut().zip(soft_labels.row(i)).zip(soft_labels.row(j)) {
            *v += 0.5 * (a + b) * d;
        }
    }
    if used > 0 {
        for v in &mut values {
            *v /= used as f64;
        }
    }
    SemanticVector {
        values,
        pairs_used: used,
        empty: used == 0,
    }
}

/// What a client broadcasts for topology construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityProfile {
    pub num_classes: usize,
    pub wlsd: f64,
    /// Row-major `K × K`; row `k` is the class-`k` semantic vector.
    pub cse: Vec<f64>,
    pub eligible_classes: Vec<bool>,
    /// Reachable sampled pairs behind each CSE row.
    pub pairs_sampled: Vec<usize>,
    #[serde(default)]
    pub no_eligible_class: bool,
}

impl HeterogeneityProfile {
    pub fn cse_row(&self, k: usize) -> &[f64] {
        &self.cse[k * self.num_classes..(k + 1) * self.num_classes]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }
}

/// Profile of one client graph: WLSD over train-labeled nodes and CSE rows
/// from `pair_budget` sampled train pairs per class with the given soft
/// labels.
pub fn build_profile(
    g: &Graph,
    soft_labels: &Matrix<f64>,
    pair_budget: usize,
    rng: &mut Rng,
) -> Result<HeterogeneityProfile, HeterogeneityError> {
    let k = g.num_classes();
    if soft_labels.rows() != g.num_nodes() || soft_labels.cols() != k {
        return Err(HeterogeneityError::Dimension(format!(
            "soft labels are {}x{}, graph has {} nodes and {k} classes",
            soft_labels.rows(),
            soft_labels.cols(),
            g.num_nodes()
        )));
    }
    let by_class = g.nodes_by_class(g.train_mask());
    let mut cache = DistanceCache::new(g);
    let w = wlsd_with(&mut cache, &by_class);
    let mut cse = vec![0.0; k * k];
    let mut pairs_sampled = vec![0; k];
    for c in 0..k {
        // drawn for every class so streams stay aligned across clients
        let pairs = sample_pairs(&by_class[c], pair_budget, rng);
        if !w.eligible[c] {
            continue;
        }
        let v = class_semantic_vector_with(&mut cache, &pairs, soft_labels);
        if v.empty {
            log::warn!("class {c}: all {} sampled pairs unreachable", pairs.len());
        }
        cse[c * k..(c + 1) * k].copy_from_slice(&v.values);
        pairs_sampled[c] = v.pairs_used;
    }
    Ok(HeterogeneityProfile {
        num_classes: k,
        wlsd: w.value,
        cse,
        eligible_classes: w.eligible,
        pairs_sampled,
        no_eligible_class: w.no_eligible_class,
    })
}
