//! `fqs`: batch runs of the fqs-core sweeps.
//!
//! ```text
//! fqs <command> [--config run.toml] [--out DIR] [--threads N] [--seed S] [--format csv|json]
//! ```
//!
//! Exit codes: 0 ok, 1 I/O or internal error, 2 configuration error,
//! 3 optimizer made no progress, 4 sensing slope unresolved at some point.
//!
//! NMR signals use `s = 2·P(|x⟩) − 1`: 1 means full coherence and −1 means the
//! sensor ended in the opposite state.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Context};
use config::{Format, NmrMode, RunConfig};
use output::RunMeta;

#[derive(Parser, Debug)]
#[command(name = "fqs", version, about = "Flip-quality sweeps, pulse design and sensing simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// F_QS and F_QC of a pulse over a detuning × amplitude-error grid.
    FidelityMap,
    /// Gradient-ascent composite pulse design.
    Optimize,
    /// Spin-echo magnetometry sensitivity versus detuning.
    EchoSense,
    /// CPMG spin-bath detection.
    Nmr {
        #[arg(long, value_enum)]
        mode: Option<NmrMode>,
    },
    /// Simulated process tomography of a pulse.
    Qpt,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FidelityMap => "fidelity-map",
            Command::Optimize => "optimize",
            Command::EchoSense => "echo-sense",
            Command::Nmr { .. } => "nmr",
            Command::Qpt => "qpt",
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.common.threads {
        cfg.threads = Some(t);
    }
    if let Some(f) = cli.common.format {
        cfg.format = f;
    }
    if let Some(out) = &cli.common.out {
        cfg.out = Some(out.clone());
    }
    if let Command::Nmr { mode: Some(m) } = &cli.command {
        cfg.nmr.mode = *m;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(Vec<String>, Vec<String>), CliError> {
    let cfg = load_config(cli)?;
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let meta = RunMeta { command: cli.command.name().into(), config_hash: cfg.hash(), seed: cfg.seed };
    let ctx = Context {
        base_dir: commands::base_dir(cli.common.config.as_deref()),
        out_dir: cfg.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        cfg,
        meta,
    };
    let mut warnings = Vec::new();
    let written = pool.install(|| match &cli.command {
        Command::FidelityMap => commands::fidelity_map(&ctx),
        Command::Optimize => commands::optimize(&ctx),
        Command::EchoSense => commands::echo_sense(&ctx),
        Command::Nmr { .. } => commands::nmr(&ctx, &mut warnings),
        Command::Qpt => commands::qpt(&ctx),
    })?;
    Ok((written, warnings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((written, warnings)) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            for path in written {
                println!("{path}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fqs {}: {}", cli.command.name(), e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
