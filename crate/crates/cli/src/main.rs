use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sysid_cli::config::LoadedConfig;
use sysid_cli::{exit, run, simulate, table};

/// Identification of linear dynamical systems from trajectories.
#[derive(Parser)]
#[command(name = "sysid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write trajectory and observation files for the configured system.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured estimator and write a run record.
    Identify {
        #[arg(long)]
        config: PathBuf,
        /// Run record (JSON) path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for sweep grids.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Merge run records into a CSV table.
    Report {
        /// Run record files.
        records: Vec<PathBuf>,
        /// Table path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = LoadedConfig::from_file(&config)?;
            let sys = cfg
                .config
                .system
                .as_ref()
                .context("config has no `system` section to simulate")?;
            let data = simulate::synthesize(sys, seed.or(cfg.config.seed).unwrap_or(0))?;
            simulate::write_files(&out, &data)?;
            Ok(exit::SUCCESS)
        }
        Command::Identify { config, out, seed, jobs } => {
            let cfg = LoadedConfig::from_file(&config)?;
            let record = run::identify(&cfg, seed.or(cfg.config.seed).unwrap_or(0), jobs)?;
            write_json(&out, &record)?;
            if record.converged() {
                Ok(exit::SUCCESS)
            } else {
                eprintln!("warning: iteration budget exhausted or descent failed; record written to {}", out.display());
                Ok(exit::NOT_CONVERGED)
            }
        }
        Command::Report { records, out } => {
            let records = table::load_records(&records)?;
            match out {
                Some(p) => {
                    let f = File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
                    table::write_table(&records, f)?;
                }
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    table::write_table(&records, &mut lock)?;
                    lock.flush()?;
                }
            }
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::INPUT_ERROR)
        }
    }
}
