//! `kolmoc` command line: run the solve/analysis pipeline described by a
//! TOML config.
//!
//! Exit codes: 0 success, 1 I/O trouble, 2 config error, 3 solver
//! non-convergence, 4 analysis precondition failure.

use clap::{Parser, Subcommand};
use kolmoc::config::RunConfig;
use kolmoc::pipeline::{self, RunOptions, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kolmoc", version, about = "optimal on/off diffusion control workbench")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the backward equation to steady state and emit the fields.
    Solve,
    /// Solve and extract the no-diffusion boundary polylines.
    Boundaries,
    /// Solve and fit the near-field entrance-boundary exponent.
    FitScaling,
    /// Solve and compare the boundaries with the far-field asymptotics.
    Wkb,
    /// Solve and validate the field with Monte Carlo paths.
    Mc,
    /// Solve and run the snap (degeneration) diagnostics.
    Snap,
    /// Render SVG plots from an existing artifact directory.
    Plot,
    /// Run every analysis enabled in the config.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config.as_ref() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let cfg = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out_dir: cli.out.clone(),
        seed: cli.seed,
        quiet: cli.quiet,
    };

    if let Cmd::Plot = cli.cmd {
        let dir = opts
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        return match kolmoc::plot::render_all(&dir, &cfg) {
            Ok(files) => {
                if !cli.quiet {
                    for f in files {
                        eprintln!("[kolmoc] wrote {f}");
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("plot error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }

    let stage = match cli.cmd {
        Cmd::Solve => Stage::Solve,
        Cmd::Boundaries => Stage::Boundaries,
        Cmd::FitScaling => Stage::FitScaling,
        Cmd::Wkb => Stage::Wkb,
        Cmd::Mc => Stage::Mc,
        Cmd::Snap => Stage::Snap,
        Cmd::All => Stage::All,
        Cmd::Plot => unreachable!(),
    };
    match pipeline::run(&cfg, stage, &opts) {
        Ok(dir) => {
            if !cli.quiet {
                eprintln!("[kolmoc] artifacts in {}", dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
