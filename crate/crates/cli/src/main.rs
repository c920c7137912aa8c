//! `dfgl`: run, compare and inspect decentralized federated graph learning
//! experiments.

mod convert;
mod error;
mod experiment;
mod inspect;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "dfgl", version, about = "Decentralized federated graph learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method over one or more seeds.
    Run(RunArgs),
    /// Run several methods and tabulate final accuracy.
    Compare(CompareArgs),
    /// Per-client label, homophily, structure and WLSD report.
    Inspect(InspectArgs),
    /// Build a dataset directory from a public dump or the SBM generator.
    Convert(ConvertArgs),
    /// Write a balanced partition as a JSON array of client ids.
    Partition(PartitionArgs),
}

/// Inclusive seed range `a..b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected a..b, got {s:?}"))?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let first: u64 = a.trim().parse().map_err(|_| format!("bad seed {a:?}"))?;
        let last: u64 = b.trim().parse().map_err(|_| format!("bad seed {b:?}"))?;
        if last < first {
            return Err(format!("empty seed range {s:?}"));
        }
        Ok(Self { first, last })
    }
}

#[derive(Args, Clone)]
pub struct ExperimentArgs {
    /// Experiment JSON; unset fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set method=local` or
    /// `--set perturb.edge_drop_p=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusive range, e.g. `0..4`.
    #[arg(long, conflicts_with = "seed")]
    pub seeds: Option<SeedRange>,
    /// Partition file (JSON array of client ids).
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Emit topology snapshots every R rounds (default: k_topo).
    #[arg(long, value_name = "R")]
    pub snapshot_every: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated methods, e.g. `local,gossip,dfed_sst`.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
}

#[derive(Args)]
pub struct InspectArgs {
    /// Dataset directory or `sbm:<spec>`.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 10)]
    pub n_clients: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ConvertArgs {
    #[command(subcommand)]
    pub source: convert::Source,
}

#[derive(Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 10)]
    pub n_clients: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => experiment::cmd_run(&a.experiment),
        Command::Compare(a) => experiment::cmd_compare(&a.experiment, &a.methods),
        Command::Inspect(a) => inspect::cmd_inspect(&a),
        Command::Convert(a) => convert::cmd_convert(a.source),
        Command::Partition(a) => convert::cmd_partition(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
