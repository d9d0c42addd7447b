use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod manifest;

/// Oblivious and partial-knowledge routing within per-destination DAGs.
#[derive(Debug, Parser)]
#[command(name = "oblite", version, about)]
struct Cli {
    /// Worker threads for parallel LP work (default: all cores).
    #[arg(long, global = true, env = "OBLITE_THREADS")]
    threads: Option<usize>,
    /// Write every LP solved to this directory.
    #[arg(long, global = true, value_name = "DIR")]
    lp_dump: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build per-destination DAGs from link weights.
    BuildDags(BuildDagsArgs),
    /// Optimize splitting ratios inside fixed DAGs.
    Optimize(OptimizeArgs),
    /// Performance ratio of a configuration over a demand set.
    Evaluate(EvaluateArgs),
    /// ECMP, base-optimal, oblivious and partial-knowledge routing over
    /// uncertainty margins around a base matrix.
    ///
    /// The base row holds the optimal in-DAG routing of the base matrix
    /// fixed and evaluates it over every margin box.
    Compare(CompareArgs),
    /// Expected hop count per pair relative to the fewest-hop path.
    Stretch(StretchArgs),
    /// Quantize ratios to ECMP multiplicities and emit the lie plan.
    Translate(TranslateArgs),
    /// Write a constructed instance.
    Fixture(FixtureArgs),
    /// The routing from a bipartition's equal-sum split.
    Lemma1(Lemma1Args),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Heuristic {
    InverseCapacity,
    LocalSearch,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Discrete,
    Oblivious,
    Box,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NormalizationArg {
    InDag,
    AnyPd,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Auto,
    Vertices,
    Certificate,
}

#[derive(Debug, Args, Serialize)]
struct BuildDagsArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, value_enum, default_value = "inverse-capacity")]
    heuristic: Heuristic,
    /// Demand file; required for local search, and picks the destinations.
    #[arg(long)]
    demands: Option<PathBuf>,
    /// Destination labels, comma separated (default: from demands, else all).
    #[arg(long, value_delimiter = ',')]
    destinations: Vec<String>,
    /// Local search: stop once the worst-case ECMP ratio is at most this.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    /// Local search: iteration cap.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct OptimizeArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    dags: PathBuf,
    /// Matrices (JSON), or a point matrix or box (CSV `src,dst,dmin,dmax`).
    #[arg(long)]
    demands: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Starting configuration (default: even split over each DAG).
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "in-dag")]
    normalization: NormalizationArg,
    /// Box bounds apply at a fixed scale rather than up to scaling.
    #[arg(long)]
    fixed_scale: bool,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Certificate (JSON), oblivious and box modes only.
    #[arg(long)]
    certificate: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    dags: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    demands: PathBuf,
    /// Default: discrete for JSON and point CSV files, box otherwise.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum, default_value = "in-dag")]
    normalization: NormalizationArg,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[arg(long)]
    fixed_scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    certificate: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Base matrix: a single matrix in JSON or a point CSV.
    #[arg(long)]
    demands: PathBuf,
    /// Margins, comma separated, each at least 1.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    margins: Vec<f64>,
    /// Name in the first column (default: topology file stem).
    #[arg(long)]
    network: Option<String>,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct StretchArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    dags: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Pairs to report (default: every node that reaches a destination).
    #[arg(long)]
    demands: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TranslateArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    dags: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Extra announcements per next hop, pooled per interface.
    #[arg(long, default_value_t = 3)]
    budget: u32,
    /// Also evaluate the quantized routing over this demand set.
    #[arg(long)]
    demands: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "in-dag")]
    normalization: NormalizationArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantized ratios as a configuration file.
    #[arg(long)]
    quantized: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FixtureArgs {
    #[command(subcommand)]
    kind: FixtureKind,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FixtureKind {
    /// The four-node running example with its two extreme matrices.
    RunningExample,
    /// The running example for the golden-ratio split.
    GoldenVariant {
        /// Capacity of s1-s2, s1-v and s2-v.
        #[arg(long, default_value_t = 1.0)]
        inner_capacity: f64,
    },
    /// Network from a bipartition instance.
    Bipartition {
        #[arg(long, value_delimiter = ',', required = true)]
        weights: Vec<u64>,
    },
    /// Path network with a unit arc from every node to the sink.
    PathGap {
        #[arg(long)]
        n: usize,
    },
    /// Random connected network with a gravity matrix.
    Random {
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        total: f64,
    },
}

#[derive(Debug, Args, Serialize)]
struct Lemma1Args {
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<u64>,
    /// 1-based indices of the integers in the first half.
    #[arg(long, value_delimiter = ',')]
    p1: Vec<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    // Usage errors exit 1; clap's own code 2 is reserved for solver trouble.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    if let Some(dir) = &cli.lp_dump {
        std::fs::create_dir_all(dir)?;
        std::env::set_var("OBLITE_LP_DUMP", dir);
    }
    match cli.command {
        Command::BuildDags(a) => commands::build_dags(&a),
        Command::Optimize(a) => commands::optimize(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Stretch(a) => commands::stretch(&a),
        Command::Translate(a) => commands::translate(&a),
        Command::Fixture(a) => commands::fixture(&a),
        Command::Lemma1(a) => commands::lemma1(&a),
    }
}
