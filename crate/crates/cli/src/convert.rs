use std::fs;
use std::path::PathBuf;

use clap::Subcommand;
use serde_json::json;

use dfgl_core::dataset::{check_against, known_dataset, parse_linqs, stratified_split, write_dataset};
use dfgl_core::graph::build_graph;
use dfgl_core::partition::induce_subgraphs;
use dfgl_core::rng::{stream, streams};
use dfgl_core::sbm::{generate_sbm, SbmSpec};
use dfgl_core::CsrMatrix;

use crate::error::CliError;
use crate::experiment::{load, write_file};
use crate::inspect::partition_for;
use crate::PartitionArgs;

#[derive(Subcommand)]
pub enum Source {
    /// LINQS dump: `<name>.content` and `<name>.cites` (Cora, CiteSeer).
    Linqs {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        cites: PathBuf,
        /// Name used for the published-statistics check; defaults to the
        /// content file stem.
        #[arg(long)]
        name: Option<String>,
        /// Seed for the 20/40/40 per-class split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stochastic block model, e.g. `--sbm "blocks=7 n=2000 p_in=0.05 p_out=0.002"`.
    Sbm {
        #[arg(long = "sbm", value_name = "SPEC")]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &PathBuf, field: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::invalid(field, format!("{}: {e}", path.display())))
}

pub fn cmd_convert(source: Source) -> Result<(), CliError> {
    match source {
        Source::Linqs {
            content,
            cites,
            name,
            seed,
            out,
        } => {
            let data = parse_linqs(&read(&content, "content")?, &read(&cites, "cites")?)
                .map_err(|e| CliError::invalid("content", e))?;
            let n = data.labels.len();
            let k = data.class_names.len();
            let features = CsrMatrix::from_dense(n, data.num_features, &data.features);
            let masks = stratified_split(&data.labels, k, 0.2, 0.4, &mut stream(seed, streams::SPLIT));
            let (g, report) =
                build_graph(&data.edges, features, data.labels.clone(), k, masks).map_err(|e| CliError::invalid("content", e))?;
            write_dataset(&g, &out).map_err(|e| CliError::io(&out, e))?;
            let name = name.unwrap_or_else(|| {
                content.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let warnings = match known_dataset(&name) {
                Some(known) => check_against(&known, n, data.num_features, data.citation_records, g.num_edges(), k),
                None => vec![format!("{name}: no published statistics to check against")],
            };
            for w in &warnings {
                log::warn!("{w}");
            }
            let summary = json!({
                "out": out,
                "num_nodes": n,
                "num_features": data.num_features,
                "num_classes": k,
                "class_names": data.class_names,
                "citation_records": data.citation_records,
                "undirected_edges": g.num_edges(),
                "dangling_citations": data.dangling_citations,
                "self_loops_dropped": report.self_loops_dropped,
                "duplicates_dropped": report.duplicates_dropped,
                "warnings": warnings,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
        Source::Sbm { spec, seed, out } => {
            let spec: SbmSpec = spec.parse().map_err(|e| CliError::invalid("sbm", e))?;
            let g = generate_sbm(&spec, seed).map_err(|e| CliError::invalid("sbm", e))?;
            write_dataset(&g, &out).map_err(|e| CliError::io(&out, e))?;
            let summary = json!({
                "out": out,
                "num_nodes": g.num_nodes(),
                "num_features": g.num_features(),
                "num_classes": g.num_classes(),
                "undirected_edges": g.num_edges(),
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
    }
}

pub fn cmd_partition(args: &PartitionArgs) -> Result<(), CliError> {
    let data = load(&args.dataset, args.seed)?;
    let p = partition_for(&data.graph, args.n_clients, args.seed, None)?;
    write_file(&args.out, p.to_json().as_bytes())?;
    let (_, report) = induce_subgraphs(&data.graph, &p);
    let summary = json!({
        "out": args.out,
        "sizes": p.sizes(),
        "cross_edges_dropped": report.cross_edges_dropped,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}
