//! Deterministic simulator for decentralized federated graph learning.
//!
//! Clients hold induced subgraphs of a citation-style graph, train two-layer
//! GCNs locally and exchange models over a directed, time-varying
//! communication topology. The adaptive topology is rebuilt every `k_topo`
//! rounds from per-client heterogeneity profiles (WLSD and CSE).

pub mod dataset;
pub mod gcn;
pub mod graph;
pub mod heterogeneity;
pub mod io;
pub mod partition;
pub mod perturb;
pub mod protocol;
pub mod rng;
pub mod sbm;
pub mod sparse;
pub mod topology;

pub use graph::{build_graph, BuildReport, Graph, GraphError, Masks};
pub use heterogeneity::HeterogeneityProfile;
pub use partition::{ClientGraph, PartitionAssignment};
pub use perturb::PerturbSpec;
pub use protocol::{run_experiment, ExperimentConfig, Method, MetricsLog, RunOutput};
pub use sparse::CsrMatrix;
pub use topology::DirectedTopology;
