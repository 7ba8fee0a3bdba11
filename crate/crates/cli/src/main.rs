//! Command-line experiment runner for the coupled heat/wave multirate
//! solver.

mod config;
mod experiments;
mod report;
mod svg;

use clap::{Parser, Subcommand};
use config::ExperimentKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatwave", about = "Multirate solver experiments for the interface-coupled heat/wave problem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for report.json, CSV tables and mesh diagrams.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    /// Seed recorded in the report; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the primal problem with the configured decoupling method.
    Solve { config: PathBuf },
    /// Run relaxation and shooting side by side and tabulate their costs.
    CompareDecouplers { config: PathBuf },
    /// Uniform mesh family with indicators, extrapolated reference and
    /// effectivities.
    Convergence { config: PathBuf },
    /// Goal-driven adaptive time-mesh refinement.
    Adapt { config: PathBuf },
    /// Render the configured time partition without solving.
    RenderMesh { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), String> {
    let (path, kind) = match &cli.command {
        Command::Solve { config } => (config, Some(ExperimentKind::Primal)),
        Command::CompareDecouplers { config } => (config, Some(ExperimentKind::DecouplerCompare)),
        Command::Convergence { config } => (config, Some(ExperimentKind::Convergence)),
        Command::Adapt { config } => (config, Some(ExperimentKind::Adaptive)),
        Command::RenderMesh { config } => (config, None),
    };
    let mut cfg = config::parse_config(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(kind) = kind {
        cfg.experiment = kind;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let report = match &cli.command {
        Command::RenderMesh { .. } => experiments::render_mesh_only(&cfg),
        _ => experiments::run_experiment(&cfg),
    }
    .map_err(|e| e.to_string())?;
    let written = report::emit_reports(&report, &cli.out).map_err(|e| e.to_string())?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
