//! `dgplan`: scenario generation, DG investment planning and SAA stability
//! studies from the command line.
//!
//! Exit status: 0 on success, 1 on solver or numeric failure (including
//! failed SAA replicas), 2 on bad input.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad paths, files, flags or case data.
    Input(String),
    /// Solver failures, infeasibility, failed verification.
    Solve(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solve(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Solve(m) => write!(f, "solve error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dgplan", version, about = "Two-stage stochastic DG planning on radial feeders")]
struct Cli {
    /// Run configuration in case-file syntax; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for replicas and subproblems.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate an hourly CSV and optionally write the cleaned series.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Cleaned output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic hourly dataset.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 8760)]
        hours: usize,
        #[arg(long, value_enum, default_value_t = Profile::Tropical)]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster hours into scenarios; writes scenarios.csv and cluster_summary.csv.
    Cluster {
        #[command(flatten)]
        case: CaseArg,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Solve the deterministic equivalent; writes plan.json, operation.csv and costs.csv.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Also export the model as MPS.
        #[arg(long, value_name = "FILE")]
        mps: Option<PathBuf>,
    },
    /// SAA bounds and gaps over replicated scenario samples.
    Saa(SaaArgs),
    /// SAA run plus in-/out-of-sample ratios and capacity mixes.
    Stability(SaaArgs),
    /// Export the deterministic equivalent as MPS with a `.names` sidecar.
    ExportMps {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an MPS file with HiGHS and write `status` and `column value`
    /// lines; a stand-in external solver.
    #[command(hide = true)]
    SolveMps {
        #[arg(long)]
        mps: PathBuf,
        #[arg(long)]
        sol: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct CaseArg {
    /// Case file, or the name of a bundled case (case4, case34).
    #[arg(long)]
    case: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Hourly CSV: timestamp, ghi, wind, temp, demand_kw.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    gap_policy: Option<GapPolicyArg>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[command(flatten)]
    case: CaseArg,
    #[command(flatten)]
    data: DataArgs,
    /// Scenario CSV; replaces clustering of --data.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Investment budget in $; overrides the case.
    #[arg(long)]
    budget: Option<f64>,
    /// $/kWh of unserved demand; enables load shedding.
    #[arg(long)]
    shed_price: Option<f64>,
    #[arg(long)]
    polygon_sides: Option<usize>,
    #[arg(long)]
    sqrt_breakpoints: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long)]
    mip_gap: Option<f64>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// `external` runs the command template in DGPLAN_SOLVER_CMD.
    #[arg(long, value_enum, default_value_t = SolverKind::Highs)]
    solver: SolverKind,
}

#[derive(Args, Debug, Clone)]
struct SaaArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Scenario counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    /// Clusters behind the ground truth; default every hour.
    #[arg(long)]
    ground_truth_n: Option<usize>,
    /// Clusters for upper-bound evaluation; default every hour.
    #[arg(long)]
    eval_n: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Profile {
    Tropical,
    Temperate,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GapPolicyArg {
    Reject,
    ForwardFill,
}

impl std::str::FromStr for GapPolicyArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SolverKind {
    Highs,
    External,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let result = cfg.and_then(|cfg| commands::run(cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dgplan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
