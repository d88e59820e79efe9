//! Dataset generation and persistence.
//!
//! A dataset is the forward-simulated latent trajectory and observation
//! sequence for one scenario, regenerable bit-exactly from the master seed
//! and the model block of the configuration. On disk it is a CSV with header
//! `n,kind,k,value` where `kind` is `x` (latent state) or `y` (observation),
//! preceded by comment lines carrying the seed and the config fingerprint.

use crate::config::ExperimentConfig;
use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;
use seqmc::hmm::{Observation, StateVector};
use seqmc::rng::{derive_rng, tag};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub states: Vec<StateVector>,
    pub observations: Vec<Observation>,
    pub seed: u64,
    pub fingerprint: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Forward-simulates the configured scenario.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let model = cfg.build_model()?;
    let model = model.as_model();
    let seed = cfg.run.seed;
    let mut states = Vec::with_capacity(cfg.run.t);
    let mut observations = Vec::with_capacity(cfg.run.t);
    let mut x_prev = model.initial_anchor();
    for n in 1..=cfg.run.t {
        let mut rng = derive_rng(seed, &[tag::DATASET, n as u64]);
        let x = model.sample_transition(&x_prev, &mut rng);
        let y = model.sample_observation(&x, &mut rng);
        states.push(x.clone());
        observations.push(y);
        x_prev = x;
    }
    Ok(Dataset {
        states,
        observations,
        seed,
        fingerprint: cfg.dataset_fingerprint(),
    })
}

/// Serializes to the `n,kind,k,value` CSV format.
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# seed: {}", ds.seed);
    let _ = writeln!(out, "# fingerprint: {}", ds.fingerprint);
    out.push_str("n,kind,k,value\n");
    for (i, (x, y)) in ds.states.iter().zip(&ds.observations).enumerate() {
        let n = i + 1;
        for k in 0..x.len() {
            let _ = writeln!(out, "{n},x,{k},{}", x[k]);
        }
        for k in 0..y.len() {
            let _ = writeln!(out, "{n},y,{k},{}", y[k]);
        }
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, dataset_to_csv(ds))
        .with_context(|| format!("writing dataset {}", path.display()))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    let mut seed = None;
    let mut fingerprint = String::new();
    let mut rows: Vec<(usize, char, usize, f64)> = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("seed:") {
                seed = Some(v.trim().parse()?);
            } else if let Some(v) = rest.strip_prefix("fingerprint:") {
                fingerprint = v.trim().to_string();
            }
            continue;
        }
        if !header_seen {
            if line != "n,kind,k,value" {
                bail!("dataset header must be `n,kind,k,value`, got `{line}`");
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("dataset line {}: expected 4 fields", lineno + 1);
        }
        let kind = fields[1]
            .chars()
            .next()
            .filter(|c| *c == 'x' || *c == 'y')
            .ok_or_else(|| anyhow!("dataset line {}: kind must be x or y", lineno + 1))?;
        rows.push((
            fields[0].parse()?,
            kind,
            fields[2].parse()?,
            fields[3].parse()?,
        ));
    }
    let t = rows.iter().map(|r| r.0).max().unwrap_or(0);
    if t == 0 {
        bail!("empty dataset");
    }
    let dx = rows
        .iter()
        .filter(|r| r.0 == 1 && r.1 == 'x')
        .count();
    let dy = rows
        .iter()
        .filter(|r| r.0 == 1 && r.1 == 'y')
        .count();
    let mut states = vec![DVector::zeros(dx); t];
    let mut observations = vec![DVector::zeros(dy); t];
    for (n, kind, k, value) in rows {
        match kind {
            'x' => states[n - 1][k] = value,
            _ => observations[n - 1][k] = value,
        }
    }
    Ok(Dataset {
        states,
        observations,
        seed: seed.ok_or_else(|| anyhow!("dataset missing `# seed:` line"))?,
        fingerprint,
    })
}

/// Loads a matching dataset or generates (and persists) a fresh one.
pub fn load_or_generate(cfg: &ExperimentConfig, path: &Path) -> Result<Dataset> {
    if path.exists() {
        let ds = load_dataset(path)?;
        if ds.fingerprint == cfg.dataset_fingerprint() && ds.len() >= cfg.run.t {
            return Ok(ds);
        }
        bail!(
            "dataset {} does not match this configuration (fingerprint {} vs {}); \
             delete it or change output.dir",
            path.display(),
            ds.fingerprint,
            cfg.dataset_fingerprint()
        );
    }
    let ds = generate_dataset(cfg)?;
    save_dataset(&ds, path)?;
    Ok(ds)
}
