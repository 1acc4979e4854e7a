//! graphflow: mean curvature flow of graphs, minimal surface solves, and
//! the verification/analysis pipeline around them.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "graphflow",
    about = "Non-parametric mean curvature flow and minimal surface system at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration (spec_version "1").
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results are identical for any value); falls back to
    /// GRAPHFLOW_THREADS, then 1.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed override for randomized scenarios.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mean curvature flow and write monitors + summary.
    RunFlow(CommonArgs),
    /// Solve the minimal surface Dirichlet problem by Picard iteration.
    Solve(CommonArgs),
    /// Run the invariant and refinement-study suite for a scenario.
    Verify(CommonArgs),
    /// Density ratios and blow-up rescalings of a field.
    Analyze(CommonArgs),
    /// List the built-in scenario catalogue.
    ListScenarios,
}

fn setup_threads(args: &CommonArgs) {
    let k = args
        .threads
        .or_else(|| {
            std::env::var("GRAPHFLOW_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(1);
    graphflow_core::exec::set_thread_count(k);
}

fn out_dir(args: &CommonArgs, cfg: &config::RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::ListScenarios => Ok(commands::cmd_list_scenarios()),
        Command::RunFlow(args) | Command::Solve(args) | Command::Verify(args)
        | Command::Analyze(args) => {
            setup_threads(args);
            let cfg = config::load_config(&args.config)?;
            let dir = out_dir(args, &cfg);
            match cmd {
                Command::RunFlow(_) => commands::cmd_run_flow(&cfg, &dir, args.seed),
                Command::Solve(_) => commands::cmd_solve(&cfg, &dir, args.seed),
                Command::Verify(_) => commands::cmd_verify(&cfg, &dir, args.seed),
                Command::Analyze(_) => commands::cmd_analyze(&cfg, &dir, args.seed),
                Command::ListScenarios => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            // machine-readable diagnostic on the error path
            eprintln!(
                "{{\"error\":{}}}",
                serde_json::to_string(&format!("{e:#}")).unwrap()
            );
            ExitCode::from(1)
        }
    }
}
