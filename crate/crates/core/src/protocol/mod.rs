//! Round engine: local training, model exchange over the current topology,
//! weighted aggregation and periodic topology reconstruction.
//!
//! Round `t` (0-based) runs
//! 1. `E` local epochs on every client, giving `ŵ_i`;
//! 2. `w_i ← Σ_j α_ij ŵ_j` over client `i`'s aggregation set;
//! 3. evaluation of `w_i` on the local test mask;
//! 4. if `t % k_topo == 0`, profiles from `ŵ` and a new topology that is
//!    in effect from round `t + 1`.
//!
//! Round 0 uses a random topology in which every client has `⌊N/2⌋`
//! in-neighbors. Optimizer moments are reset whenever a client's parameters
//! are replaced by an aggregate.

pub mod baseline;
pub mod config;
pub mod metrics;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use baseline::baseline_topology;
pub use config::{apply_override, ConfigError, ExperimentConfig, Method, Precision};
pub use metrics::{mean_std, MetricRow, MetricsLog, RunSummary, CSV_HEADER};

use crate::gcn::{
    accuracy, loss_and_grad, normalize_adjacency, optimizer_step, predict_soft_labels, real, GcnDims, GcnError,
    GcnParams, NormalizedAdjacency, OptimizerState, Real,
};
use crate::graph::Graph;
use crate::heterogeneity::{build_profile, HeterogeneityError, HeterogeneityProfile};
use crate::partition::{
    greedy_balanced_partition, induce_subgraphs, ClientGraph, InduceReport, PartitionAssignment, PartitionError,
};
use crate::perturb::{drop_edges, drop_labels};
use crate::rng::{client_stream, purpose, stream, streams, Rng};
use crate::sparse::CsrMatrix;
use crate::topology::{build_topology, DirectedTopology, TopologyError};

pub const THREADS_ENV: &str = "DFGL_THREADS";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("partition has {found} clients, config asks for {expected}")]
    ClientCount { expected: usize, found: usize },
    #[error("round {round}, client {client}: {source}")]
    Gcn {
        round: usize,
        client: usize,
        #[source]
        source: GcnError,
    },
    #[error("round {round}, client {client}: parameters became non-finite")]
    NonFinite { round: usize, client: usize },
    #[error("round {round}, client {client}: {source}")]
    Heterogeneity {
        round: usize,
        client: usize,
        #[source]
        source: HeterogeneityError,
    },
    #[error("round {round}: {source}")]
    Topology {
        round: usize,
        #[source]
        source: TopologyError,
    },
    #[error("aggregation: {0}")]
    Aggregate(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub struct ClientState<T: Real> {
    pub id: usize,
    pub graph: Graph,
    /// Global node id of each local node.
    pub global_ids: Vec<usize>,
    pub adjacency: NormalizedAdjacency<T>,
    pub features: CsrMatrix<T>,
    pub params: GcnParams<T>,
    pub optimizer: OptimizerState<T>,
    /// Private stream for CSE pair sampling.
    pub rng: Rng,
    pub profile: Option<HeterogeneityProfile>,
    pub in_neighbors: Vec<usize>,
}

impl<T: Real> ClientState<T> {
    pub fn new(id: usize, local: ClientGraph, params: GcnParams<T>, config: &ExperimentConfig) -> Self {
        let adjacency = normalize_adjacency(&local.graph);
        let features = local.graph.features().cast::<T>();
        let optimizer = OptimizerState::new(config.optimizer, params.num_params());
        Self {
            id,
            graph: local.graph,
            global_ids: local.global_ids,
            adjacency,
            features,
            params,
            optimizer,
            rng: client_stream(config.seed, id, purpose::PAIRS),
            profile: None,
            in_neighbors: Vec::new(),
        }
    }

    pub fn has_train_nodes(&self) -> bool {
        self.graph.train_mask().iter().any(|&m| m)
    }

    pub fn has_test_nodes(&self) -> bool {
        self.graph.test_mask().iter().any(|&m| m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrainReport {
    /// Loss before each step.
    pub losses: Vec<f64>,
    pub skipped: bool,
}

/// `epochs` full-batch steps on the client's train mask. A client without
/// train nodes is left unchanged.
pub fn local_train<T: Real>(client: &mut ClientState<T>, epochs: usize, lr: f64) -> Result<LocalTrainReport, GcnError> {
    if !client.has_train_nodes() {
        log::warn!("client {} has no train nodes; skipping local training", client.id);
        return Ok(LocalTrainReport {
            losses: Vec::new(),
            skipped: true,
        });
    }
    let lr: T = real(lr);
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let lg = loss_and_grad(
            &client.params,
            &client.adjacency,
            &client.features,
            client.graph.labels(),
            client.graph.train_mask(),
        )?;
        losses.push(lg.loss.to_f64().unwrap_or(f64::NAN));
        optimizer_step(&mut client.params, &lg.grad, &mut client.optimizer, lr)?;
    }
    Ok(LocalTrainReport { losses, skipped: false })
}

/// Convex combination `Σ α_j p_j`, computed as `p_0 + Σ α_j (p_j − p_0)`
/// with `p_0` the first member, then clipped to the coordinate-wise range
/// of the inputs. Identical inputs therefore come back unchanged and no
/// coordinate can leave the hull through rounding.
pub fn aggregate<T: Real>(members: &[(f64, &GcnParams<T>)]) -> Result<GcnParams<T>, ProtocolError> {
    let (_, first) = members
        .first()
        .ok_or_else(|| ProtocolError::Aggregate("empty aggregation set".into()))?;
    let total: f64 = members.iter().map(|(a, _)| a).sum();
    if (total - 1.0).abs() > 1e-6 || members.iter().any(|(a, _)| a.is_nan() || *a < 0.0) {
        return Err(ProtocolError::Aggregate(format!("weights must be a convex combination, sum is {total}")));
    }
    if members.iter().any(|(_, p)| p.dims() != first.dims()) {
        return Err(ProtocolError::Aggregate("parameter shapes differ".into()));
    }
    let mut out = (*first).clone();
    for (t, dst) in out.tensors_mut().into_iter().enumerate() {
        for (x, slot) in dst.iter_mut().enumerate() {
            let base = *slot;
            let mut acc = base;
            let mut lo = base;
            let mut hi = base;
            for (a, p) in &members[1..] {
                let v = p.tensors()[t][x];
                acc += real::<T>(*a) * (v - base);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            *slot = acc.max(lo).min(hi);
        }
    }
    Ok(out)
}

/// Replaces the client's parameters by the weighted combination of the
/// received models and resets its optimizer moments. An empty set, or one
/// holding only the client itself, leaves the client untouched. Returns
/// whether the parameters were replaced.
pub fn aggregate_into<T: Real>(
    client: &mut ClientState<T>,
    weights: &BTreeMap<usize, f64>,
    received: &[GcnParams<T>],
) -> Result<bool, ProtocolError> {
    if weights.is_empty() || (weights.len() == 1 && weights.contains_key(&client.id)) {
        return Ok(false);
    }
    let members: Vec<(f64, &GcnParams<T>)> = weights.iter().map(|(&j, &a)| (a, &received[j])).collect();
    client.params = aggregate(&members)?;
    client.optimizer.reset();
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundEvaluation {
    pub per_client: Vec<Option<f64>>,
    /// Unweighted mean over clients that have a test accuracy.
    pub mean: Option<f64>,
    pub excluded: Vec<usize>,
}

pub fn evaluate_round(per_client: &[Option<f64>]) -> RoundEvaluation {
    let excluded: Vec<usize> = (0..per_client.len()).filter(|&i| per_client[i].is_none()).collect();
    let present: Vec<f64> = per_client.iter().flatten().copied().collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    RoundEvaluation {
        per_client: per_client.to_vec(),
        mean,
        excluded,
    }
}

/// Test accuracy of the client's current model; `None` without test nodes.
pub fn evaluate_client<T: Real>(client: &ClientState<T>) -> Result<Option<f64>, GcnError> {
    if !client.has_test_nodes() {
        return Ok(None);
    }
    let probs = predict_soft_labels(&client.params, &client.adjacency, &client.features)?;
    accuracy(&probs, client.graph.labels(), client.graph.test_mask()).map(Some)
}

/// Hook called after every aggregation step.
pub trait RoundObserver: Send {
    /// Whether [`RoundObserver::after_aggregation`] needs parameters.
    fn wants_params(&self) -> bool {
        false
    }

    /// `params[i]` is client `i`'s flattened model (widened to `f64`) when
    /// `wants_params` is true, and empty otherwise.
    fn after_aggregation(&mut self, _round: usize, _topology: &DirectedTopology, _params: &[Vec<f64>]) {}
}

impl RoundObserver for () {}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsLog,
    /// Topology in effect at every snapshot round (`round` set accordingly).
    pub snapshots: Vec<DirectedTopology>,
    /// Rounds at whose end the adaptive topology was rebuilt.
    pub topology_updates: Vec<usize>,
    /// Latest broadcast profile per client (adaptive method only).
    pub profiles: Vec<Option<HeterogeneityProfile>>,
    pub final_params: Vec<GcnParams<f64>>,
    pub partition: PartitionAssignment,
    pub induce_report: InduceReport,
    pub warnings: Vec<String>,
}

/// Worker count from `DFGL_THREADS`; `None` when unset or invalid.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t| t > 0)
}

pub fn run_experiment(
    config: &ExperimentConfig,
    graph: &Graph,
    partition: Option<&PartitionAssignment>,
) -> Result<RunOutput, ProtocolError> {
    run_experiment_with(config, graph, partition, threads_from_env(), &mut ())
}

/// [`run_experiment`] with an explicit worker count and a round observer.
/// Results do not depend on `threads`.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    graph: &Graph,
    partition: Option<&PartitionAssignment>,
    threads: Option<usize>,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput, ProtocolError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| ProtocolError::ThreadPool(e.to_string()))?;
    pool.install(|| match config.precision {
        Precision::F32 => run_typed::<f32>(config, graph, partition, observer),
        Precision::F64 => run_typed::<f64>(config, graph, partition, observer),
    })
}

fn resolve_partition(
    config: &ExperimentConfig,
    graph: &Graph,
    partition: Option<&PartitionAssignment>,
) -> Result<PartitionAssignment, ProtocolError> {
    let p = match partition {
        Some(p) => p.clone(),
        None if config.n_clients == 1 => PartitionAssignment::new(vec![0; graph.num_nodes()])?,
        None => greedy_balanced_partition(graph, config.n_clients, config.seed)?,
    };
    if p.num_clients() != config.n_clients {
        return Err(ProtocolError::ClientCount {
            expected: config.n_clients,
            found: p.num_clients(),
        });
    }
    if p.client_of().len() != graph.num_nodes() {
        return Err(PartitionError::LengthMismatch {
            expected: graph.num_nodes(),
            got: p.client_of().len(),
        }
        .into());
    }
    Ok(p)
}

/// Client graphs after partitioning and perturbation.
pub fn prepare_clients(
    config: &ExperimentConfig,
    graph: &Graph,
    partition: &PartitionAssignment,
    warnings: &mut Vec<String>,
) -> Result<(Vec<ClientGraph>, InduceReport), ProtocolError> {
    let (mut locals, report) = induce_subgraphs(graph, partition);
    for (i, local) in locals.iter_mut().enumerate() {
        if config.perturb.edge_drop_p > 0.0 {
            let mut rng = client_stream(config.seed, i, purpose::EDGE_DROP);
            local.graph = drop_edges(&local.graph, config.perturb.edge_drop_p, &mut rng)
                .map_err(|e| ConfigError::new("perturb.edge_drop_p", e.to_string()))?;
        }
        if config.perturb.label_drop_p > 0.0 {
            let mut rng = client_stream(config.seed, i, purpose::LABEL_DROP);
            let (g, rep) = drop_labels(&local.graph, config.perturb.label_drop_p, &mut rng)
                .map_err(|e| ConfigError::new("perturb.label_drop_p", e.to_string()))?;
            if rep.restored {
                warnings.push(format!("client {i}: every train label dropped, one restored"));
            }
            local.graph = g;
        }
    }
    Ok((locals, report))
}

fn initial_params<T: Real>(config: &ExperimentConfig, dims: GcnDims, client: usize) -> GcnParams<T> {
    if config.independent_init {
        GcnParams::glorot(dims, &mut client_stream(config.seed, client, purpose::INIT))
    } else {
        GcnParams::glorot(dims, &mut stream(config.seed, streams::INIT))
    }
}

fn initial_topology(config: &ExperimentConfig, baseline_rng: &mut Rng) -> DirectedTopology {
    let n = config.n_clients;
    match baseline_topology(config.method, 0, n, config.random_k_degree(), baseline_rng) {
        Some(t) => t,
        None => {
            let mut rng = stream(config.seed, streams::INITIAL_TOPOLOGY);
            DirectedTopology::uniform(0, baseline::random_in_neighbors(n, n / 2, &mut rng), config.include_self)
        }
    }
}

fn flat_f64<T: Real>(p: &GcnParams<T>) -> Vec<f64> {
    p.flatten().into_iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn run_typed<T: Real>(
    config: &ExperimentConfig,
    graph: &Graph,
    partition: Option<&PartitionAssignment>,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput, ProtocolError> {
    let n = config.n_clients;
    let mut warnings = Vec::new();
    let partition = resolve_partition(config, graph, partition)?;
    let (locals, induce_report) = prepare_clients(config, graph, &partition, &mut warnings)?;
    let dims = GcnDims {
        input: graph.num_features(),
        hidden: config.hidden,
        classes: graph.num_classes(),
    };
    let mut clients: Vec<ClientState<T>> = locals
        .into_iter()
        .enumerate()
        .map(|(i, local)| ClientState::new(i, local, initial_params(config, dims, i), config))
        .collect();
    for c in &clients {
        if !c.has_train_nodes() {
            warnings.push(format!("client {}: no train nodes, local training skipped", c.id));
        }
        if !c.has_test_nodes() {
            warnings.push(format!("client {}: no test nodes, excluded from mean accuracy", c.id));
        }
    }

    let mut baseline_rng = stream(config.seed, streams::BASELINE_TOPOLOGY);
    let mut topology = initial_topology(config, &mut baseline_rng);
    let mut metrics = MetricsLog::new(config.method, config.seed);
    let mut snapshots = Vec::new();
    let mut topology_updates = Vec::new();
    let cadence = config.snapshot_cadence();

    for round in 0..config.rounds {
        if round % cadence == 0 {
            let mut snap = topology.clone();
            snap.round = round;
            snapshots.push(snap);
        }
        for (c, nbrs) in clients.iter_mut().zip(&topology.in_neighbors) {
            c.in_neighbors.clone_from(nbrs);
        }

        // (a) local training
        let trained: Vec<(Result<LocalTrainReport, GcnError>, f64)> = clients
            .par_iter_mut()
            .map(|c| {
                let start = Instant::now();
                let r = local_train(c, config.local_epochs, config.lr);
                (r, ms_since(start))
            })
            .collect();
        let mut reports = Vec::with_capacity(n);
        let mut wall = Vec::with_capacity(n);
        for (client, (r, ms)) in trained.into_iter().enumerate() {
            reports.push(r.map_err(|source| ProtocolError::Gcn { round, client, source })?);
            wall.push(ms);
        }
        for c in &clients {
            if !c.params.is_finite() {
                return Err(ProtocolError::NonFinite { round, client: c.id });
            }
        }

        // (b) exchange of post-training models, (c) aggregation
        let sent: Vec<GcnParams<T>> = clients.iter().map(|c| c.params.clone()).collect();
        let aggregated: Vec<(Result<(), ProtocolError>, f64)> = clients
            .par_iter_mut()
            .zip(&topology.weights)
            .map(|(c, w)| {
                let start = Instant::now();
                let r = aggregate_into(c, w, &sent).map(|_| ());
                (r, ms_since(start))
            })
            .collect();
        for (i, (r, ms)) in aggregated.into_iter().enumerate() {
            r?;
            wall[i] += ms;
        }
        if observer.wants_params() {
            let flat: Vec<Vec<f64>> = clients.iter().map(|c| flat_f64(&c.params)).collect();
            observer.after_aggregation(round, &topology, &flat);
        } else {
            observer.after_aggregation(round, &topology, &[]);
        }

        // evaluation
        let evaluated: Vec<(Result<Option<f64>, GcnError>, f64)> = clients
            .par_iter()
            .map(|c| {
                let start = Instant::now();
                (evaluate_client(c), ms_since(start))
            })
            .collect();
        for (client, (r, ms)) in evaluated.into_iter().enumerate() {
            let acc = r.map_err(|source| ProtocolError::Gcn { round, client, source })?;
            metrics.rows.push(MetricRow {
                round,
                client_id: client,
                train_loss: reports[client].losses.last().copied(),
                test_accuracy: acc,
                wall_ms: wall[client] + ms,
            });
        }

        // (d) topology for the next round
        let next = round + 1;
        if next == config.rounds {
            break;
        }
        match config.method {
            Method::DfedSst => {
                if round % config.k_topo == 0 {
                    let profiles: Vec<Result<HeterogeneityProfile, ProtocolError>> = clients
                        .par_iter_mut()
                        .zip(&sent)
                        .map(|(c, w_hat)| {
                            let client = c.id;
                            let probs = predict_soft_labels(w_hat, &c.adjacency, &c.features)
                                .map_err(|source| ProtocolError::Gcn { round, client, source })?;
                            let soft = probs.map(|x| x.to_f64().unwrap_or(f64::NAN));
                            let p = build_profile(&c.graph, &soft, config.pair_sample, &mut c.rng)
                                .map_err(|source| ProtocolError::Heterogeneity { round, client, source })?;
                            c.profile = Some(p.clone());
                            Ok(p)
                        })
                        .collect();
                    let profiles = profiles.into_iter().collect::<Result<Vec<_>, _>>()?;
                    topology = build_topology(&profiles, next, config.include_self)
                        .map_err(|source| ProtocolError::Topology { round, source })?;
                    topology_updates.push(round);
                }
            }
            m if m.is_dynamic_baseline() => {
                topology = baseline_topology(m, next, n, config.random_k_degree(), &mut baseline_rng)
                    .expect("baseline method");
            }
            _ => topology.round = next,
        }
    }

    Ok(RunOutput {
        metrics,
        snapshots,
        topology_updates,
        profiles: clients.iter().map(|c| c.profile.clone()).collect(),
        final_params: clients.iter().map(|c| c.params.cast::<f64>()).collect(),
        partition,
        induce_report,
        warnings,
    })
}
