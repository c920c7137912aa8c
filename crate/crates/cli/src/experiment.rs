use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use dfgl_core::dataset::{open_dataset, DatasetError, LoadedDataset, SBM_PREFIX};
use dfgl_core::io::write_atomic;
use dfgl_core::partition::load_partition;
use dfgl_core::protocol::{apply_override, run_experiment, ExperimentConfig, Method, MetricsLog, RunSummary};
use dfgl_core::topology::export_topology;

use crate::error::CliError;
use crate::ExperimentArgs;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CURVES_FILE: &str = "curves.csv";

/// Everything needed to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved config; `seed` is the first seed.
    pub config: ExperimentConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Dataset checksum per seed (identical unless the dataset is generated).
    pub dataset_checksum: BTreeMap<u64, String>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    #[serde(flatten)]
    pub summary: RunSummary,
    pub mean_wall_ms_per_round: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_atomic(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Config file, then `--set` overrides, then dedicated flags.
pub fn resolve_config(args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let mut value = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::invalid("config", format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| CliError::invalid("config", e))?
        }
        None => Value::Object(Default::default()),
    };
    if !value.is_object() {
        return Err(CliError::invalid("config", "top level must be a JSON object"));
    }
    for assignment in &args.set {
        apply_override(&mut value, assignment)?;
    }
    if let Some(seed) = args.seed.or(args.seeds.map(|s| s.first)) {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    if let Some(p) = &args.partition {
        value["partition"] = Value::String(p.display().to_string());
    }
    if let Some(r) = args.snapshot_every {
        value["snapshot_every"] = Value::from(r);
    }
    let config = ExperimentConfig::from_value(value)?;
    config.validate()?;
    if config.dataset.is_empty() {
        return Err(CliError::invalid("dataset", "no dataset given"));
    }
    Ok(config)
}

pub fn seeds(args: &ExperimentArgs, config: &ExperimentConfig) -> Vec<u64> {
    match args.seeds {
        Some(range) => range.seeds(),
        None => vec![config.seed],
    }
}

pub fn load(reference: &str, seed: u64) -> Result<LoadedDataset, CliError> {
    open_dataset(reference, seed).map_err(|e| match e {
        DatasetError::Io(_) => CliError::runtime(format!("dataset {reference}: {e}")),
        other => CliError::invalid("dataset", other),
    })
}

/// Datasets per seed; a directory is loaded once and shared.
fn datasets(config: &ExperimentConfig, seeds: &[u64]) -> Result<BTreeMap<u64, LoadedDataset>, CliError> {
    let mut out = BTreeMap::new();
    if config.dataset.starts_with(SBM_PREFIX) {
        for &s in seeds {
            out.insert(s, load(&config.dataset, s)?);
        }
    } else {
        let d = load(&config.dataset, 0)?;
        for &s in seeds {
            out.insert(s, d.clone());
        }
    }
    Ok(out)
}

fn method_dir(out: &Path, method: Method) -> PathBuf {
    out.join(method.name())
}

pub fn run_dir(out: &Path, method: Method, seed: u64) -> PathBuf {
    method_dir(out, method).join(format!("seed{seed}"))
}

struct MethodRuns {
    logs: Vec<MetricsLog>,
    outputs: Vec<PathBuf>,
}

fn run_method(
    config: &ExperimentConfig,
    seeds: &[u64],
    data: &BTreeMap<u64, LoadedDataset>,
    out: &Path,
) -> Result<MethodRuns, CliError> {
    let mut logs = Vec::new();
    let mut outputs = Vec::new();
    let mut warnings = Vec::new();
    for &seed in seeds {
        let cfg = ExperimentConfig { seed, ..config.clone() };
        let graph = &data[&seed].graph;
        let partition = match &cfg.partition {
            Some(p) => Some(load_partition(Path::new(p), graph.num_nodes()).map_err(|e| CliError::invalid("partition", e))?),
            None => None,
        };
        log::info!("{} seed {seed}: {} rounds on {} clients", cfg.method, cfg.rounds, cfg.n_clients);
        let run = run_experiment(&cfg, graph, partition.as_ref())?;
        let dir = run_dir(out, cfg.method, seed);
        let metrics = dir.join(METRICS_FILE);
        write_file(&metrics, run.metrics.to_csv().as_bytes())?;
        outputs.push(metrics);
        let topo_dir = dir.join("topology");
        for snap in &run.snapshots {
            fs::create_dir_all(&topo_dir).map_err(|e| CliError::io(&topo_dir, e))?;
            let written = export_topology(snap, &topo_dir).map_err(|e| CliError::io(&topo_dir, e))?;
            outputs.push(written.json);
            outputs.push(written.dot);
        }
        for w in run.warnings {
            log::warn!("{} seed {seed}: {w}", cfg.method);
            warnings.push(format!("seed {seed}: {w}"));
        }
        logs.push(run.metrics);
    }
    let summary = MethodSummary {
        summary: RunSummary::from_logs(&logs).expect("at least one seed"),
        mean_wall_ms_per_round: logs.iter().map(MetricsLog::mean_wall_ms_per_round).collect(),
        warnings,
    };
    let path = method_dir(out, config.method).join(SUMMARY_FILE);
    write_file(&path, serde_json::to_string_pretty(&summary).expect("summary serializes").as_bytes())?;
    outputs.push(path);
    Ok(MethodRuns { logs, outputs })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    write_file(
        &out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(manifest).expect("manifest serializes").as_bytes(),
    )
}

pub fn cmd_run(args: &ExperimentArgs) -> Result<(), CliError> {
    let started_at = now();
    let config = resolve_config(args)?;
    let seeds = seeds(args, &config);
    let data = datasets(&config, &seeds)?;
    let runs = run_method(&config, &seeds, &data, &args.out)?;
    let summary = RunSummary::from_logs(&runs.logs).expect("at least one seed");
    println!(
        "{}: final mean accuracy {:.2} ± {:.2} over {} seed(s)",
        config.method,
        100.0 * summary.mean,
        100.0 * summary.std,
        seeds.len()
    );
    let manifest = RunManifest {
        tool: "dfgl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "run".into(),
        methods: vec![config.method],
        dataset_checksum: data.iter().map(|(&s, d)| (s, d.checksum.clone())).collect(),
        config,
        seeds,
        started_at,
        finished_at: now(),
        outputs: runs.outputs,
    };
    write_manifest(&args.out, &manifest)
}

pub fn cmd_compare(args: &ExperimentArgs, methods: &[String]) -> Result<(), CliError> {
    let started_at = now();
    let methods: Vec<Method> = methods
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| CliError::invalid("methods", e.message)))
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(CliError::invalid("methods", "no methods given"));
    }
    let base = resolve_config(args)?;
    let seeds = seeds(args, &base);
    let data = datasets(&base, &seeds)?;
    let mut table = String::from("method,mean,std,seeds\n");
    let mut curves = String::from("method,round,mean_accuracy\n");
    let mut outputs = Vec::new();
    for &method in &methods {
        let config = ExperimentConfig { method, ..base.clone() };
        config.validate()?;
        let runs = run_method(&config, &seeds, &data, &args.out)?;
        let summary = RunSummary::from_logs(&runs.logs).expect("at least one seed");
        table.push_str(&format!("{method},{},{},{}\n", summary.mean, summary.std, seeds.len()));
        println!("{method}: {:.2} ± {:.2}", 100.0 * summary.mean, 100.0 * summary.std);
        for round in 0..config.rounds {
            let per_seed: Vec<f64> = runs.logs.iter().filter_map(|l| l.round_mean(round)).collect();
            let mean = if per_seed.is_empty() {
                String::new()
            } else {
                (per_seed.iter().sum::<f64>() / per_seed.len() as f64).to_string()
            };
            curves.push_str(&format!("{method},{round},{mean}\n"));
        }
        outputs.extend(runs.outputs);
    }
    let table_path = args.out.join(COMPARISON_FILE);
    let curves_path = args.out.join(CURVES_FILE);
    write_file(&table_path, table.as_bytes())?;
    write_file(&curves_path, curves.as_bytes())?;
    outputs.push(table_path);
    outputs.push(curves_path);
    let manifest = RunManifest {
        tool: "dfgl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "compare".into(),
        methods,
        dataset_checksum: data.iter().map(|(&s, d)| (s, d.checksum.clone())).collect(),
        config: base,
        seeds,
        started_at,
        finished_at: now(),
        outputs,
    };
    write_manifest(&args.out, &manifest)
}
