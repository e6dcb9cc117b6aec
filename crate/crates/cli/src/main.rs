use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcfuse_cli::commands::{self, Stage};
use mcfuse_cli::metrics::MethodKind;
use mcfuse_cli::CliError;

#[derive(Parser)]
#[command(name = "mcfuse", about = "Multi-camera odometry fusion experiments")]
struct Cli {
    /// Experiment config (TOML). Defaults to <out>/config.toml, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (or output file for plot and compare).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train, validation and test scenarios.
    Simulate,
    /// Train per-camera networks (mdn), the fusion network (fusion), or both (all).
    Train {
        #[arg(long, default_value = "all")]
        stage: String,
    },
    /// Evaluate methods on the test split and write metrics.csv.
    Eval {
        /// Comma-separated subset of per-camera,fusion,ekf,ivw,raw.
        #[arg(long, default_value = "per-camera,fusion,ekf,ivw,raw")]
        methods: String,
    },
    /// Plot a ground-truth trajectory file followed by estimate files as SVG.
    Plot {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Per-cell differences between two metrics files.
    Compare { a: PathBuf, b: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    match cli.command {
        Command::Simulate => {
            let cfg = commands::resolve_config(cli.config.as_deref(), &out, cli.seed)?;
            let dirs = commands::cmd_simulate(&cfg, &out)?;
            println!("wrote {} scenarios under {}", dirs.len(), out.join("scenarios").display());
        }
        Command::Train { stage } => {
            let stages = Stage::parse(&stage)?;
            let cfg = commands::resolve_config(cli.config.as_deref(), &out, cli.seed)?;
            for p in commands::cmd_train(&cfg, &out, &stages)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval { methods } => {
            let cfg = commands::resolve_config(cli.config.as_deref(), &out, cli.seed)?;
            let groups: Vec<&str> = methods.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            let methods = MethodKind::select(&cfg.rig(), &groups)?;
            let report = commands::cmd_eval(&cfg, &out, &methods)?;
            print!("{}", report.to_csv());
        }
        Command::Plot { files } => {
            let target = cli.out.unwrap_or_else(|| PathBuf::from("plot.svg"));
            commands::cmd_plot(&files, &target)?;
            println!("wrote {}", target.display());
        }
        Command::Compare { a, b } => {
            let text = commands::cmd_compare(&a, &b)?;
            match cli.out {
                Some(p) => std::fs::write(&p, &text).map_err(|e| CliError::io(&p, e))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(match e {
                CliError::Prerequisite(_) => 3,
                CliError::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
