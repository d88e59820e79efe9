//! Experiment CLI: dataset generation, batch runs and table reproduction.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use seqmc_cli::config::{AlgoName, ExperimentConfig};
use seqmc_cli::dataset::{generate_dataset, save_dataset};
use seqmc_cli::runner::run_experiment;
use seqmc_cli::tables::{reproduce_table, TableId};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "seqmc",
    about = "Sequential MCMC and particle filtering experiments on sensor fields",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward-simulate and persist the dataset for a configuration.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured experiment (all replications) and emit CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override run.n_runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Override output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce a down-scaled result table.
    Table {
        /// One of: mse_gaussian, ess_gaussian, mse_poisson, ess_poisson.
        id: String,
        /// Fraction of the reference 100-run grid (0 = dry run).
        #[arg(long, default_value_t = 0.25)]
        scale: f64,
        /// State dimension.
        #[arg(long, default_value_t = 144)]
        d: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out/tables")]
        out: PathBuf,
    },
    /// List the available algorithms.
    ListAlgos,
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    runs: Option<usize>,
    out: Option<PathBuf>,
) {
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(r) = runs {
        cfg.run.n_runs = r;
    }
    if let Some(o) = out {
        cfg.output.dir = o;
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            apply_overrides(&mut cfg, seed, None, out);
            let ds = generate_dataset(&cfg)?;
            let path = cfg.output.dir.join("dataset.csv");
            save_dataset(&ds, &path).context("saving dataset")?;
            println!(
                "wrote {} ({} time steps, d = {})",
                path.display(),
                ds.len(),
                cfg.model.d
            );
        }
        Command::Run {
            config,
            seed,
            runs,
            out,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            apply_overrides(&mut cfg, seed, runs, out);
            let outputs = run_experiment(&cfg)?;
            let failed = outputs.iter().filter(|r| r.result.is_err()).count();
            println!(
                "{}: {} runs ({} failed) -> {}",
                cfg.algorithm.name.as_str(),
                outputs.len(),
                failed,
                cfg.output.dir.display()
            );
        }
        Command::Table {
            id,
            scale,
            d,
            seed,
            out,
        } => {
            let table = TableId::parse(&id)?;
            let csv = reproduce_table(table, scale, d, seed, &out)?;
            print!("{csv}");
        }
        Command::ListAlgos => {
            for algo in AlgoName::ALL {
                println!("{:<18} {}", algo.as_str(), algo.description());
            }
        }
    }
    Ok(())
}
