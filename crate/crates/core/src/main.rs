use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfg_core::commands::{self, Context};
use mfg_core::config::RunConfig;
use mfg_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mfg", version, about = "Forward, linearised and inverse mean-field game experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    serial: bool,
    /// Archive directory (default `<out>/archive`).
    #[arg(long, global = true)]
    archive: Option<PathBuf>,
    /// Ground-truth JSON written by `measure`; enables error reporting.
    #[arg(long, global = true)]
    ground_truth: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Solve the baseline forward problems.
    Forward,
    /// First- and second-order linearisations and the Frechet check.
    Linearize,
    /// CGO remainder decay study.
    Probe,
    /// Generate a measurement archive from the configured ground truth.
    Measure,
    /// Recover coefficients from an archive.
    Reconstruct,
    /// Run the built-in verification suite.
    Verify,
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let load = || -> Result<RunConfig> {
        let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    };
    let cfg = match (cli.cmd, &cli.config) {
        (Cmd::Verify, None) => None,
        _ => Some(load()?),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context { out, parallel: !cli.serial, ground_truth: cli.ground_truth.clone(), archive: cli.archive.clone() };
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(20240521);
    commands::execute(cli.cmd.name(), cfg.as_ref(), seed, &ctx)
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Forward => "forward",
            Cmd::Linearize => "linearize",
            Cmd::Probe => "probe",
            Cmd::Measure => "measure",
            Cmd::Reconstruct => "reconstruct",
            Cmd::Verify => "verify",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
