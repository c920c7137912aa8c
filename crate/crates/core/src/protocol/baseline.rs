//! Communication topologies for the comparison methods.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};

use super::config::Method;
use crate::rng::Rng;
use crate::topology::DirectedTopology;

/// Each client receives from `k` distinct other clients drawn uniformly.
pub fn random_in_neighbors(n: usize, k: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let k = k.min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let mut nbrs: Vec<usize> = index::sample(rng, n - 1, k)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect();
            nbrs.sort_unstable();
            nbrs
        })
        .collect()
}

/// Random perfect matching; with odd `n` one client stays unmatched.
pub fn random_matching(n: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut nbrs = vec![Vec::new(); n];
    for pair in order.chunks_exact(2) {
        nbrs[pair[0]].push(pair[1]);
        nbrs[pair[1]].push(pair[0]);
    }
    nbrs
}

pub fn ring_neighbors(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut v = vec![(i + n - 1) % n, (i + 1) % n];
            v.sort_unstable();
            v.dedup();
            v.retain(|&j| j != i);
            v
        })
        .collect()
}

/// Ring plus one random perfect matching of chords, as an undirected graph.
pub fn dpsgd_neighbors(n: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut nbrs = ring_neighbors(n);
    for (i, extra) in random_matching(n, rng).into_iter().enumerate() {
        nbrs[i].extend(extra);
        nbrs[i].sort_unstable();
        nbrs[i].dedup();
    }
    nbrs
}

/// Metropolis–Hastings weights on a symmetric graph:
/// `α_ij = 1 / (1 + max(d_i, d_j))`, self weight takes the remainder.
pub fn metropolis(round: usize, in_neighbors: Vec<Vec<usize>>) -> DirectedTopology {
    let deg: Vec<usize> = in_neighbors.iter().map(Vec::len).collect();
    let weights = in_neighbors
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut w: BTreeMap<usize, f64> = nbrs
                .iter()
                .map(|&j| (j, 1.0 / (1 + deg[i].max(deg[j])) as f64))
                .collect();
            let rest = 1.0 - w.values().sum::<f64>();
            w.insert(i, rest);
            w
        })
        .collect();
    DirectedTopology {
        round,
        in_neighbors,
        weights,
        include_self: true,
    }
}

/// Topology for round `round` of a baseline method. `k` is the in-degree
/// used by `random_k`. Returns `None` for the adaptive method.
pub fn baseline_topology(method: Method, round: usize, n: usize, k: usize, rng: &mut Rng) -> Option<DirectedTopology> {
    let t = match method {
        Method::DfedSst => return None,
        Method::Local => DirectedTopology::isolated(n, round, true),
        Method::Full => DirectedTopology::uniform(round, (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(), true),
        Method::Ring => DirectedTopology::uniform(round, ring_neighbors(n), true),
        Method::Gossip => DirectedTopology::uniform(round, random_matching(n, rng), true),
        Method::RandomK => DirectedTopology::uniform(round, random_in_neighbors(n, k, rng), true),
        Method::Dpsgd => metropolis(round, dpsgd_neighbors(n, rng)),
    };
    Some(t)
}
