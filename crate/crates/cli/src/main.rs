use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualcheck::builtins::list_builtins;
use dualcheck::runner::{
    run, Emit, GridOverride, Overrides, RunConfig, ScenarioSource, EXIT_ERROR,
};
use dualcheck::scenario::Direction;

#[derive(Parser)]
#[command(name = "dualcheck", version, about = "Check Markov duality relations with error terms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a builtin scenario.
    Run(RunArgs),
    /// List the builtin scenarios.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to a TOML scenario or the name of a builtin.
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Grid override `a:b:step` (a must be 0).
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridOverride>,
    #[arg(long, env = "DUALCHECK_OUT", default_value = "dualcheck-out")]
    out: PathBuf,
    /// Comma-separated outputs: csv, json, paths.
    #[arg(long, default_value = "csv,json", value_parser = parse_emit)]
    emit: Emit,
    /// `comparison=ge` or `comparison=le`.
    #[arg(long, value_parser = parse_check)]
    check: Option<Direction>,
    /// Worker threads (defaults to every core).
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_grid(s: &str) -> Result<GridOverride, String> {
    s.parse()
}

fn parse_emit(s: &str) -> Result<Emit, String> {
    s.parse()
}

fn parse_check(s: &str) -> Result<Direction, String> {
    match s.split_once('=') {
        Some(("comparison", d)) => d.parse(),
        _ => Err(format!("unknown check '{s}' (use comparison=ge or comparison=le)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, about) in list_builtins() {
                println!("{name:<24} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let config = RunConfig {
                source: ScenarioSource::resolve(&args.scenario),
                out_dir: Some(args.out),
                overrides: Overrides {
                    seed: args.seed,
                    replicas: args.replicas,
                    grid: args.grid,
                    comparison: args.check,
                },
                emit: args.emit,
                workers: args.workers,
            };
            match run(&config) {
                Ok(report) => {
                    print!("{}", report.summary());
                    for f in &report.files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    if let dualcheck::DualityError::Validation(vs) = &e {
                        for v in vs {
                            eprintln!("  {v}");
                        }
                    }
                    ExitCode::from(EXIT_ERROR as u8)
                }
            }
        }
    }
}
