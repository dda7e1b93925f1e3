//! `varsort`: simulate data, attack the solver, sweep imperfect attacks,
//! score every DAG and run the solver directly.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for runtime or
//! convergence failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use varsort_core::attack::AttackKind;
use varsort_core::StructureKind;

use crate::config::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "varsort",
    version,
    about = "Variance-rescaling attacks on least-squares DAG learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a dataset from a canonical linear-Gaussian SCM.
    Generate(GenerateArgs),
    /// Run a perfect recipe attack or an imperfect attack per seed.
    Attack(AttackArgs),
    /// Success-ratio table of imperfect chain reversals over scale x lambda.
    Sweep(SweepArgs),
    /// Score every DAG on a dataset, or check the reverse-chain conjecture.
    Oracle(OracleArgs),
    /// Run the solver on a CSV dataset.
    Solve(SolveArgs),
}

fn parse_structure(s: &str) -> Result<StructureKind, varsort_core::Error> {
    s.parse()
}

fn parse_attack_kind(s: &str) -> Result<AttackKind, varsort_core::Error> {
    s.parse()
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    /// JSON file with any of these options; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset CSV; provenance goes to `<stem>.provenance.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    /// chain, fork or collider.
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<StructureKind>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed weight for every edge.
    #[arg(long)]
    pub weight: Option<f64>,
    /// Random weight magnitudes `LO,HI` with random signs.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub weight_range: Option<Vec<f64>>,
    /// Noise standard deviation of every node.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Outcome CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    /// Ground-truth structure: chain, fork or collider.
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<StructureKind>,
    /// reverse, to_fork, to_collider or to_chain.
    #[arg(long, value_parser = parse_attack_kind)]
    pub kind: Option<AttackKind>,
    /// Attack this CSV instead of generating data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub weight_range: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// L1 coefficients; one run per value.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub lambda: Option<Vec<f64>>,
    /// Variance margin of perfect plans.
    #[arg(long)]
    pub margin: Option<f64>,
    /// 1-based columns the attacker controls; selects an imperfect attack.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub accessible: Option<Vec<usize>>,
    /// Imperfect-attack factors applied to the accessible columns.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub scale: Option<Vec<f64>>,
    /// Target edges such as `3>2,2>1` (1-based); defaults to the recipe's.
    #[arg(long)]
    pub target: Option<String>,
    /// Stop at the first successful scale per seed and lambda.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub search: bool,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub h_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Aggregated table CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one row per trial and cell here.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Trial `t` uses seed `seed + t`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub scale: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub lambda: Option<Vec<f64>>,
    /// Chain length.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub weight_range: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub h_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Report CSV; the correlation summary goes to `<stem>.summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    /// Score this CSV instead of generating data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<StructureKind>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds for `--conjecture1`.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub weight_range: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Compare forward and reverse chain MSE after rescaling the root.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub conjecture1: bool,
    /// Root variance as a multiple of the sink variance.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Print the graph-JSON of the best entry to stdout.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub best_dag: bool,
    /// Per-edge penalty for `--best-dag`.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Write the graph-JSON of every entry here.
    #[arg(long)]
    pub graphs: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Result JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub h_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub rho_max: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Attack(a) => commands::attack(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Solve(a) => commands::solve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
