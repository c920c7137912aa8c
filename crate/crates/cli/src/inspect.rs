use serde::Serialize;

use dfgl_core::graph::{class_homophily, default_metric_sources, structural_metrics, ClassHomophily, StructuralMetrics};
use dfgl_core::heterogeneity::wlsd;
use dfgl_core::partition::{greedy_balanced_partition, induce_subgraphs, load_partition, PartitionAssignment};
use dfgl_core::Graph;

use crate::error::CliError;
use crate::experiment::{load, write_file};
use crate::InspectArgs;

#[derive(Debug, Serialize)]
pub struct ClientReport {
    pub client: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub train_nodes: usize,
    pub class_counts: Vec<usize>,
    pub class_homophily: ClassHomophily,
    pub structural_metrics: StructuralMetrics,
    pub wlsd: f64,
}

#[derive(Debug, Serialize)]
pub struct InspectReport {
    pub dataset: String,
    pub checksum: String,
    pub seed: u64,
    pub n_clients: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_classes: usize,
    pub cross_edges_dropped: usize,
    pub class_homophily: ClassHomophily,
    pub structural_metrics: StructuralMetrics,
    pub clients: Vec<ClientReport>,
}

fn metrics(g: &Graph, seed: u64) -> Result<StructuralMetrics, CliError> {
    structural_metrics(g, default_metric_sources(g.num_nodes()), seed).map_err(CliError::runtime)
}

pub fn partition_for(
    g: &Graph,
    n_clients: usize,
    seed: u64,
    file: Option<&std::path::Path>,
) -> Result<PartitionAssignment, CliError> {
    let p = match file {
        Some(path) => load_partition(path, g.num_nodes()).map_err(|e| CliError::invalid("partition", e))?,
        None if n_clients == 1 => {
            PartitionAssignment::new(vec![0; g.num_nodes()]).map_err(|e| CliError::invalid("n_clients", e))?
        }
        None => greedy_balanced_partition(g, n_clients, seed).map_err(|e| CliError::invalid("n_clients", e))?,
    };
    if p.num_clients() != n_clients {
        return Err(CliError::invalid(
            "n_clients",
            format!("partition has {} clients, expected {n_clients}", p.num_clients()),
        ));
    }
    Ok(p)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<(), CliError> {
    if args.n_clients == 0 {
        return Err(CliError::invalid("n_clients", "must be at least 1"));
    }
    let data = load(&args.dataset, args.seed)?;
    let g = &data.graph;
    let partition = partition_for(g, args.n_clients, args.seed, args.partition.as_deref())?;
    let (locals, induce) = induce_subgraphs(g, &partition);
    let clients = locals
        .iter()
        .enumerate()
        .map(|(i, local)| {
            let lg = &local.graph;
            Ok(ClientReport {
                client: i,
                num_nodes: lg.num_nodes(),
                num_edges: lg.num_edges(),
                train_nodes: lg.train_mask().iter().filter(|&&m| m).count(),
                class_counts: lg.class_counts(),
                class_homophily: class_homophily(lg),
                structural_metrics: metrics(lg, args.seed)?,
                wlsd: wlsd(lg, &lg.nodes_by_class(lg.train_mask())).value,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = InspectReport {
        dataset: args.dataset.clone(),
        checksum: data.checksum.clone(),
        seed: args.seed,
        n_clients: args.n_clients,
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_classes: g.num_classes(),
        cross_edges_dropped: induce.cross_edges_dropped,
        class_homophily: class_homophily(g),
        structural_metrics: metrics(g, args.seed)?,
        clients,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => write_file(path, json.as_bytes()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}
