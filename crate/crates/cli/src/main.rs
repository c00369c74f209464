use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fdreg_cli::{runner, ExperimentConfig};

/// Federated distillation experiments for RSSI localization.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one scheme and write metrics.csv, errors.csv and config.toml.
    Run(Common),
    /// Run every point of the `[sweep]` grid and write summary.csv.
    Sweep(Common),
    /// Write the synthetic dataset to CSV with a metadata sidecar.
    GenData(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    config: PathBuf,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(c) => {
            let out = runner::run(&c.load()?)?;
            println!("{}", out.dir.display());
        }
        Command::Sweep(c) => {
            println!("{}", runner::sweep(&c.load()?)?.display());
        }
        Command::GenData(c) => {
            let cfg = c.load()?;
            println!("{}", runner::gen_data(&cfg, &cfg.out_dir)?.display());
        }
    }
    Ok(())
}
