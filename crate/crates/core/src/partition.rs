//! Splitting a global graph into client subgraphs.
//!
//! The built-in partitioner grows one region per client from farthest-point
//! seeds with round-robin BFS. Each part has a fixed capacity of
//! `floor(n / k)` or `ceil(n / k)` nodes, so part sizes never differ by more
//! than one. Externally computed assignments (for instance real Metis output)
//! can be loaded with [`load_partition`].

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{bfs_distances, Graph, UNREACHABLE};
use crate::rng::{stream, streams};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("need at least 2 clients, got {0}")]
    TooFewClients(usize),
    #[error("{n_clients} clients requested for only {num_nodes} nodes")]
    TooManyClients { n_clients: usize, num_nodes: usize },
    #[error("length mismatch: partition has {got} entries, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("client id gap: id {0} is never used")]
    ClientIdGap(usize),
    #[error("reading partition file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing partition file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Client id for every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionAssignment {
    client_of: Vec<usize>,
}

impl PartitionAssignment {
    /// Validates that ids are dense: every id below the maximum is used.
    pub fn new(client_of: Vec<usize>) -> Result<Self, PartitionError> {
        let n_clients = client_of.iter().max().map_or(0, |&m| m + 1);
        let mut used = vec![false; n_clients];
        for &c in &client_of {
            used[c] = true;
        }
        if let Some(gap) = used.iter().position(|&u| !u) {
            return Err(PartitionError::ClientIdGap(gap));
        }
        Ok(Self { client_of })
    }

    pub fn client_of(&self) -> &[usize] {
        &self.client_of
    }

    pub fn num_clients(&self) -> usize {
        self.client_of.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clients()];
        for &c in &self.client_of {
            sizes[c] += 1;
        }
        sizes
    }

    /// Global node ids of each client, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_clients()];
        for (v, &c) in self.client_of.iter().enumerate() {
            members[c].push(v);
        }
        members
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.client_of).expect("serializing integers")
    }
}

/// Seeded, balanced BFS region growing.
pub fn greedy_balanced_partition(
    g: &Graph,
    n_clients: usize,
    seed: u64,
) -> Result<PartitionAssignment, PartitionError> {
    let n = g.num_nodes();
    if n_clients < 2 {
        return Err(PartitionError::TooFewClients(n_clients));
    }
    if n_clients > n {
        return Err(PartitionError::TooManyClients {
            n_clients,
            num_nodes: n,
        });
    }
    let mut rng = stream(seed, streams::PARTITION);
    let capacity: Vec<usize> = (0..n_clients)
        .map(|p| n / n_clients + usize::from(p < n % n_clients))
        .collect();

    let seeds = farthest_point_seeds(g, n_clients, rng.gen_range(0..n));

    const FREE: usize = usize::MAX;
    let mut owner = vec![FREE; n];
    let mut size = vec![0usize; n_clients];
    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); n_clients];
    let claim = |v: usize,
                 p: usize,
                 owner: &mut Vec<usize>,
                 size: &mut Vec<usize>,
                 queues: &mut Vec<VecDeque<usize>>| {
        owner[v] = p;
        size[p] += 1;
        queues[p].extend(g.neighbors(v).iter().copied());
    };
    for (p, &s) in seeds.iter().enumerate() {
        claim(s, p, &mut owner, &mut size, &mut queues);
    }
    let mut assigned = n_clients;

    while assigned < n {
        let mut progressed = false;
        for p in 0..n_clients {
            if size[p] >= capacity[p] {
                continue;
            }
            while let Some(v) = queues[p].pop_front() {
                if owner[v] == FREE {
                    claim(v, p, &mut owner, &mut size, &mut queues);
                    assigned += 1;
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed && assigned < n {
            // Every growing region is stuck; restart the part with the most
            // room from the lowest free node (the next unreached component,
            // or a pocket enclosed by full parts).
            let v = owner.iter().position(|&o| o == FREE).expect("free node");
            let p = (0..n_clients)
                .max_by_key(|&p| (capacity[p] - size[p], std::cmp::Reverse(p)))
                .expect("at least one part");
            claim(v, p, &mut owner, &mut size, &mut queues);
            assigned += 1;
        }
    }
    PartitionAssignment::new(owner)
}

/// `k` distinct seeds: the first is the node farthest from `start`, each
/// further seed maximizes its distance to the seeds chosen so far. Nodes in
/// components without a seed count as infinitely far. Ties go to the lower id.
fn farthest_point_seeds(g: &Graph, k: usize, start: usize) -> Vec<usize> {
    let n = g.num_nodes();
    let key = |d: u32| if d == UNREACHABLE { u64::MAX } else { d as u64 };
    let argmax = |dist: &[u32], taken: &[bool]| -> usize {
        let mut best = None;
        for v in 0..n {
            if taken[v] {
                continue;
            }
            let d = key(dist[v]);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((v, d));
            }
        }
        best.expect("fewer seeds than nodes").0
    };
    let mut taken = vec![false; n];
    let from_start = bfs_distances(g, start);
    let first = argmax(&from_start.dist, &taken);
    taken[first] = true;
    let mut seeds = vec![first];
    let mut nearest = bfs_distances(g, first).dist;
    while seeds.len() < k {
        let next = argmax(&nearest, &taken);
        taken[next] = true;
        seeds.push(next);
        for (m, d) in nearest.iter_mut().zip(bfs_distances(g, next).dist) {
            *m = (*m).min(d);
        }
    }
    seeds
}

/// Reads a JSON array of client ids, one per node.
pub fn load_partition(path: &Path, num_nodes: usize) -> Result<PartitionAssignment, PartitionError> {
    let text = fs::read_to_string(path)?;
    let client_of: Vec<usize> = serde_json::from_str(&text)?;
    if client_of.len() != num_nodes {
        return Err(PartitionError::LengthMismatch {
            expected: num_nodes,
            got: client_of.len(),
        });
    }
    PartitionAssignment::new(client_of)
}

/// One client's private graph.
#[derive(Debug, Clone)]
pub struct ClientGraph {
    pub graph: Graph,
    /// Global node id of each local node.
    pub global_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InduceReport {
    pub cross_edges_dropped: usize,
}

/// Per-client induced subgraphs. Edges between clients are dropped.
pub fn induce_subgraphs(g: &Graph, p: &PartitionAssignment) -> (Vec<ClientGraph>, InduceReport) {
    use rayon::prelude::*;
    let members = p.members();
    let parts: Vec<(ClientGraph, usize)> = members
        .into_par_iter()
        .map(|nodes| {
            let (graph, boundary) = g.induced(&nodes);
            (
                ClientGraph {
                    graph,
                    global_ids: nodes,
                },
                boundary,
            )
        })
        .collect();
    let boundary: usize = parts.iter().map(|(_, b)| b).sum();
    (
        parts.into_iter().map(|(c, _)| c).collect(),
        InduceReport {
            cross_edges_dropped: boundary / 2,
        },
    )
}
