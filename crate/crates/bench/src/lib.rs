//! Shared fixtures for the criterion benches.

use dfgl_core::gcn::Matrix;
use dfgl_core::heterogeneity::build_profile;
use dfgl_core::partition::{greedy_balanced_partition, induce_subgraphs};
use dfgl_core::rng::{stream, streams};
use dfgl_core::sbm::{generate_sbm, SbmSpec};
use dfgl_core::{ClientGraph, Graph, HeterogeneityProfile};

/// Cora-sized SBM: 2000 nodes, 7 blocks.
pub fn cora_like(seed: u64) -> Graph {
    let spec: SbmSpec = "blocks=7 n=2000 p_in=0.05 p_out=0.002".parse().expect("valid spec");
    generate_sbm(&spec, seed).expect("generates")
}

pub fn clients(g: &Graph, n: usize, seed: u64) -> Vec<ClientGraph> {
    let p = greedy_balanced_partition(g, n, seed).expect("partitions");
    induce_subgraphs(g, &p).0
}

/// Deterministic, non-uniform soft labels leaning toward the true class.
pub fn soft_labels(g: &Graph) -> Matrix<f64> {
    let k = g.num_classes();
    let mut m = Matrix::zeros(g.num_nodes(), k);
    for v in 0..g.num_nodes() {
        let label = g.labels()[v] as usize;
        let mut total = 0.0;
        for c in 0..k {
            let x = 1.0 + ((v * 31 + c * 17) % 7) as f64 + if c == label { 6.0 } else { 0.0 };
            m.set(v, c, x);
            total += x;
        }
        for c in 0..k {
            m.set(v, c, m.get(v, c) / total);
        }
    }
    m
}

pub fn profiles(clients: &[ClientGraph], pair_budget: usize) -> Vec<HeterogeneityProfile> {
    clients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = stream(i as u64, streams::INIT);
            build_profile(&c.graph, &soft_labels(&c.graph), pair_budget, &mut rng).expect("profile")
        })
        .collect()
}
