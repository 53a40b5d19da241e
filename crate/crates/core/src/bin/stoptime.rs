use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stoptime::bench::config::FileConfig;
use stoptime::bench::{execute, exit_code, override_seed, Command};
use stoptime::{Result, StopTimeError};

#[derive(Parser)]
#[command(name = "stoptime", about = "Differentiable stopping-time experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// TOML configuration; defaults apply to anything left out
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// replace every seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// discrete versus continuous stopping-time gradients
    Validate,
    /// optimizer comparison on one problem
    Compare,
    /// meta-train a learned optimizer through its stopping time
    L2o,
    /// a single Adam-OLA run
    Ola,
    /// check the meta-gradient identity on random instances
    Identity,
    /// quick closed-form and oracle checks
    Selftest,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Validate => Command::Validate,
            Sub::Compare => Command::Compare,
            Sub::L2o => Command::L2o,
            Sub::Ola => Command::Ola,
            Sub::Identity => Command::Identity,
            Sub::Selftest => Command::Selftest,
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| StopTimeError::Io { path: path.clone(), source: e })?;
            FileConfig::parse(&text)?
        }
        None => FileConfig::default(),
    };
    if let Some(seed) = cli.seed {
        override_seed(&mut cfg, seed);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(StopTimeError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| StopTimeError::Config(e.to_string()))?;
    }
    let outcome = execute(cli.command.into(), &cfg, &cli.out, cli.seed, cli.threads)?;
    for c in &outcome.manifest.cells {
        println!("{}: {}", c.cell, c.status);
    }
    println!("wrote {} to {}", outcome.manifest.outputs.join(", "), cli.out.display());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
