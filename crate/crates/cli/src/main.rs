//! `rdgd` — resilient distributed gradient descent simulator.
//!
//! Subcommands: generate | analyze | bounds | run | suite.
//! Exit codes: 0 = checks pass or skip, 1 = a check failed,
//! 2 = configuration or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rdgd_cli::{
    cmd_analyze, cmd_bounds, cmd_generate, cmd_run, cmd_suite, AnalyzeArgs, BoundsArgs,
    GenerateArgs, RunArgs, SuiteArgs,
};

#[derive(Parser)]
#[command(
    name = "rdgd",
    version,
    about = "Resilient distributed gradient descent simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random quadratic cost family and print its certificate.
    Generate(GenerateCli),
    /// Compute the redundancy parameter of a family.
    Analyze(AnalyzeCli),
    /// Evaluate the closed-form bound constants for a run config.
    Bounds(BoundsCli),
    /// Execute one run config; write trace and summary files.
    Run(RunCli),
    /// Execute every config in a manifest; one pass/fail line each.
    Suite(SuiteCli),
}

#[derive(Args)]
struct GenerateCli {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of agents.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Problem dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Minimizers are drawn uniformly from [-spread, spread]^d.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Smallest curvature eigenvalue.
    #[arg(long, default_value_t = 0.5)]
    eig_lo: f64,
    /// Largest curvature eigenvalue.
    #[arg(long, default_value_t = 1.5)]
    eig_hi: f64,
    /// Emit a named fixture (e.g. "line3") instead of random costs.
    #[arg(long)]
    preset: Option<String>,
    /// Output family JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Smallest subset size certified for the strong-convexity constant.
    #[arg(long, default_value_t = 1)]
    subset_floor: usize,
}

#[derive(Args)]
struct AnalyzeCli {
    /// Family JSON path.
    #[arg(long)]
    family: PathBuf,
    /// Byzantine budget.
    #[arg(long, default_value_t = 0)]
    f: usize,
    /// Straggler budget.
    #[arg(long, default_value_t = 0)]
    r: usize,
    /// Emit a CSV of epsilon over every feasible (f, r) pair.
    #[arg(long)]
    grid: bool,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsCli {
    /// Run config JSON path.
    #[arg(long)]
    config: PathBuf,
    /// Radius slack for the CGE bound (default 1e-3 * Gamma).
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct RunCli {
    /// Run config JSON path.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (RDGD_OUT_DIR overrides).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write the trace as JSON.
    #[arg(long)]
    json_trace: bool,
    /// Embed full vectors in the JSON trace.
    #[arg(long)]
    full_vectors: bool,
    /// Tail window for bound checks (default: max(T/10, 100)).
    #[arg(long)]
    tail_window: Option<usize>,
    /// User-supplied radius for filters without a closed-form bound.
    #[arg(long)]
    dstar: Option<f64>,
    /// Radius slack for the CGE bound (default 1e-3 * Gamma).
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct SuiteCli {
    /// Manifest JSON listing named configs.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (RDGD_OUT_DIR overrides).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(&GenerateArgs {
            seed: args.seed,
            n: args.n,
            d: args.d,
            spread: args.spread,
            eig_lo: args.eig_lo,
            eig_hi: args.eig_hi,
            preset: args.preset,
            out: args.out,
            subset_floor: args.subset_floor,
        }),
        Command::Analyze(args) => cmd_analyze(&AnalyzeArgs {
            family: args.family,
            f: args.f,
            r: args.r,
            grid: args.grid,
            out: args.out,
        }),
        Command::Bounds(args) => cmd_bounds(&BoundsArgs {
            config: args.config,
            delta: args.delta,
        }),
        Command::Run(args) => cmd_run(&RunArgs {
            config: args.config,
            out_dir: args.out_dir,
            json_trace: args.json_trace,
            full_vectors: args.full_vectors,
            tail_window: args.tail_window,
            dstar: args.dstar,
            delta: args.delta,
        }),
        Command::Suite(args) => cmd_suite(&SuiteArgs {
            manifest: args.manifest,
            out_dir: args.out_dir,
        }),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
