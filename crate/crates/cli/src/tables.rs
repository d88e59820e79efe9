//! Down-scaled reproduction of the paper-style result tables.
//!
//! Each table bundles a scenario (model, dimension, sample count) with a set
//! of methods and emits one CSV row per method. `scale` is the fraction of
//! the reference 100-run grid to execute: `--scale 0.25` runs 25
//! replications; `--scale 0` emits a header-only dry run listing the planned
//! cells.

use crate::algo::run_mse;
use crate::config::{AlgoName, ExperimentConfig, ModelKind};
use crate::dataset::load_or_generate;
use crate::runner::{execute_runs, kalman_oracle, summary_csv, RunOutput};
use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    MseGaussian,
    EssGaussian,
    MsePoisson,
    EssPoisson,
}

impl TableId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "mse_gaussian" => TableId::MseGaussian,
            "ess_gaussian" => TableId::EssGaussian,
            "mse_poisson" => TableId::MsePoisson,
            "ess_poisson" => TableId::EssPoisson,
            other => bail!(
                "unknown table `{other}`; expected one of mse_gaussian, ess_gaussian, \
                 mse_poisson, ess_poisson"
            ),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TableId::MseGaussian => "mse_gaussian",
            TableId::EssGaussian => "ess_gaussian",
            TableId::MsePoisson => "mse_poisson",
            TableId::EssPoisson => "ess_poisson",
        }
    }

    fn model_kind(&self) -> ModelKind {
        match self {
            TableId::MseGaussian | TableId::EssGaussian => ModelKind::Gaussian,
            TableId::MsePoisson | TableId::EssPoisson => ModelKind::GhPoisson,
        }
    }

    fn bank_size(&self) -> usize {
        match self {
            TableId::EssGaussian => 500,
            _ => 200,
        }
    }

    /// Methods in the row order of the corresponding published table.
    fn methods(&self) -> Vec<(AlgoName, usize)> {
        // The second element is K for Resample-Move rows.
        match self {
            TableId::MseGaussian => vec![
                (AlgoName::Smhmc, 0),
                (AlgoName::SirRm, 1),
                (AlgoName::SirRm, 2),
                (AlgoName::SirRm, 3),
            ],
            TableId::EssGaussian => vec![
                (AlgoName::SmcmcPrior, 0),
                (AlgoName::Smmala, 0),
                (AlgoName::Shmc, 0),
                (AlgoName::Smhmc, 0),
            ],
            TableId::MsePoisson => vec![
                (AlgoName::Sir, 0),
                (AlgoName::SirRm, 1),
                (AlgoName::SirRm, 2),
                (AlgoName::SirRm, 3),
                (AlgoName::BlockSir, 0),
                (AlgoName::SmcmcPrior, 0),
                (AlgoName::SimplifiedSmmala, 0),
                (AlgoName::Smmala, 0),
                (AlgoName::Shmc, 0),
                (AlgoName::Smhmc, 0),
            ],
            TableId::EssPoisson => vec![
                (AlgoName::SmcmcPrior, 0),
                (AlgoName::SimplifiedSmmala, 0),
                (AlgoName::Smmala, 0),
                (AlgoName::Shmc, 0),
                (AlgoName::Smhmc, 0),
            ],
        }
    }
}

/// Scenario config for one table cell.
pub fn cell_config(
    table: TableId,
    method: AlgoName,
    k_moves: usize,
    d: usize,
    runs: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<ExperimentConfig> {
    let model_type = match table.model_kind() {
        ModelKind::Gaussian => "gaussian",
        ModelKind::GhPoisson => "gh_poisson",
    };
    let block_proposal = match table.model_kind() {
        ModelKind::Gaussian => "conditional_prior",
        ModelKind::GhPoisson => "random_walk",
    };
    let method_dir = if method == AlgoName::SirRm {
        format!("{}{}", method.as_str(), k_moves)
    } else {
        method.as_str().to_string()
    };
    let text = format!(
        "model.type = {model_type}\n\
         model.d = {d}\n\
         algorithm.name = {}\n\
         algorithm.n = {}\n\
         algorithm.k_moves = {}\n\
         algorithm.block_proposal = {block_proposal}\n\
         run.t = 10\n\
         run.n_runs = {runs}\n\
         run.seed = {seed}\n\
         output.dir = {}\n",
        method.as_str(),
        table.bank_size(),
        k_moves.max(1),
        out_dir.join(table.as_str()).join(method_dir).display(),
    );
    ExperimentConfig::from_str(&text)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.4}")
    }
}

struct CellResult {
    method: String,
    time_per_step_s: f64,
    mse: f64,
    log_rel_mse: f64,
    ess: (f64, f64, f64, f64),
    runs_ok: usize,
}

fn aggregate_cell(
    cfg: &ExperimentConfig,
    method_label: &str,
    runs: &[RunOutput],
    kal_mse: Option<f64>,
    data: &crate::dataset::Dataset,
) -> CellResult {
    let mut mse_sum = 0.0;
    let mut wall = 0.0;
    let mut steps = 0.0f64;
    let mut ess = [0.0f64; 4];
    let mut ok = 0usize;
    for run in runs {
        if let Ok(records) = &run.result {
            ok += 1;
            mse_sum += run_mse(records, data);
            for r in records {
                wall += r.wall_ms;
                steps += 1.0;
                ess[0] += r.ess_min;
                ess[1] += r.ess_med;
                ess[2] += r.ess_mean;
                ess[3] += r.ess_max;
            }
        }
    }
    let mse = mse_sum / ok.max(1) as f64;
    let log_rel_mse = kal_mse
        .map(|k| seqmc::diagnostics::log_mse_ratio(mse, k))
        .unwrap_or(f64::NAN);
    let _ = cfg;
    CellResult {
        method: method_label.to_string(),
        time_per_step_s: wall / steps.max(1.0) / 1e3,
        mse,
        log_rel_mse,
        ess: (
            ess[0] / steps.max(1.0),
            ess[1] / steps.max(1.0),
            ess[2] / steps.max(1.0),
            ess[3] / steps.max(1.0),
        ),
        runs_ok: ok,
    }
}

/// Runs a down-scaled table grid and writes `<table>.csv` under `out_dir`.
///
/// Returns the CSV text. `scale` multiplies the reference 100-run grid;
/// zero emits the planned cells without running anything.
pub fn reproduce_table(table: TableId, scale: f64, d: usize, seed: u64, out_dir: &Path) -> Result<String> {
    std::fs::create_dir_all(out_dir)?;
    let runs = (100.0 * scale).round() as usize;
    let header = "table,method,d,n,runs,time_per_step_s,mse,log_rel_mse,\
                  ess_min,ess_med,ess_mean,ess_max\n";
    let mut out = String::from(header);

    if runs == 0 {
        // Dry run: planned cell coordinates only.
        for (method, k) in table.methods() {
            let label = if method == AlgoName::SirRm {
                format!("{}{}", method.as_str(), k)
            } else {
                method.as_str().to_string()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},0,,,,,,,",
                table.as_str(),
                label,
                d,
                table.bank_size()
            );
        }
        std::fs::write(out_dir.join(format!("{}.csv", table.as_str())), &out)?;
        return Ok(out);
    }

    for (method, k) in table.methods() {
        let cfg = cell_config(table, method, k, d, runs, seed, out_dir)?;
        std::fs::create_dir_all(&cfg.output.dir)?;
        let model = cfg.build_model()?;
        let data = load_or_generate(&cfg, &cfg.output.dir.join("dataset.csv"))?;
        let oracle = kalman_oracle(&cfg, &model, &data)?;
        let kal_mse = oracle
            .as_ref()
            .map(|o| o.mse.iter().sum::<f64>() / o.mse.len() as f64);
        let cell_runs = execute_runs(&cfg, &model, &data);
        std::fs::write(
            cfg.output.dir.join("summary.csv"),
            summary_csv(&cfg, &data, oracle.as_ref(), &cell_runs),
        )
        .context("writing cell summary")?;
        let label = if method == AlgoName::SirRm {
            format!("{}{}", method.as_str(), k)
        } else {
            method.as_str().to_string()
        };
        let cell = aggregate_cell(&cfg, &label, &cell_runs, kal_mse, &data);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            table.as_str(),
            cell.method,
            d,
            table.bank_size(),
            cell.runs_ok,
            fmt(cell.time_per_step_s),
            fmt(cell.mse),
            fmt(cell.log_rel_mse),
            fmt(cell.ess.0),
            fmt(cell.ess.1),
            fmt(cell.ess.2),
            fmt(cell.ess.3),
        );
    }
    std::fs::write(out_dir.join(format!("{}.csv", table.as_str())), &out)?;
    Ok(out)
}
