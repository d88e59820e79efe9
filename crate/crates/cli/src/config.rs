//! Experiment configuration: a flat key-value text format with dotted
//! section prefixes.
//!
//! Grammar (one assignment per line):
//!
//! ```text
//! # comment
//! model.type = gaussian          # gaussian | gh_poisson
//! model.d = 144
//! algorithm.name = smhmc
//! algorithm.n = 200
//! run.t = 10
//! run.n_runs = 25
//! run.seed = 42
//! output.dir = out/example1
//! ```
//!
//! Keys are `section.field` with sections `model`, `algorithm`, `run`,
//! `output`; values are plain tokens (no quoting). Unknown keys are errors.
//! Omitted model parameters default to the spatial-sensor-field values. The
//! only environment override honored is `OUTPUT_DIR`.

use anyhow::{anyhow, bail, Context, Result};
use seqmc::models::gaussian::{build_dispersion, GaussianModel, GaussianModelParams};
use seqmc::models::gh::GHParams;
use seqmc::models::poisson::{GhPoissonModel, PoissonObsParams};
use seqmc::models::SensorGrid;
use seqmc::smcmc::AncestorMode;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gaussian,
    GhPoisson,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub d: usize,
    pub alpha: f64,
    pub sigma_y2: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
    /// Skewed-t degrees of freedom (count model).
    pub nu: f64,
    /// Skewness, replicated across dimensions (count model).
    pub gamma: f64,
    pub m1: f64,
    pub m2: f64,
    /// Optional `k,sx,sy` sensor-location CSV; defaults to the integer grid.
    pub locations: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gaussian,
            d: 64,
            alpha: 0.9,
            sigma_y2: 2.0,
            alpha0: 3.0,
            alpha1: 0.01,
            beta: 20.0,
            nu: 7.0,
            gamma: 0.3,
            m1: 1.0,
            m2: 1.0 / 3.0,
            locations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoName {
    Sir,
    BlockSir,
    SirRm,
    SmcmcPrior,
    SmcmcOptimal,
    Smala,
    Smmala,
    SimplifiedSmmala,
    Shmc,
    Smhmc,
}

impl AlgoName {
    pub const ALL: [AlgoName; 10] = [
        AlgoName::Sir,
        AlgoName::BlockSir,
        AlgoName::SirRm,
        AlgoName::SmcmcPrior,
        AlgoName::SmcmcOptimal,
        AlgoName::Smala,
        AlgoName::Smmala,
        AlgoName::SimplifiedSmmala,
        AlgoName::Shmc,
        AlgoName::Smhmc,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sir" => AlgoName::Sir,
            "block_sir" => AlgoName::BlockSir,
            "sir_rm" => AlgoName::SirRm,
            "smcmc_prior" => AlgoName::SmcmcPrior,
            "smcmc_optimal" => AlgoName::SmcmcOptimal,
            "smala" => AlgoName::Smala,
            "smmala" => AlgoName::Smmala,
            "simplified_smmala" => AlgoName::SimplifiedSmmala,
            "shmc" => AlgoName::Shmc,
            "smhmc" => AlgoName::Smhmc,
            other => bail!("unknown algorithm `{other}`"),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AlgoName::Sir => "sir",
            AlgoName::BlockSir => "block_sir",
            AlgoName::SirRm => "sir_rm",
            AlgoName::SmcmcPrior => "smcmc_prior",
            AlgoName::SmcmcOptimal => "smcmc_optimal",
            AlgoName::Smala => "smala",
            AlgoName::Smmala => "smmala",
            AlgoName::SimplifiedSmmala => "simplified_smmala",
            AlgoName::Shmc => "shmc",
            AlgoName::Smhmc => "smhmc",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            AlgoName::Sir => "sequential importance resampling particle filter",
            AlgoName::BlockSir => "block particle filter (per-block resampling, biased)",
            AlgoName::SirRm => "SIR with K invariant manifold-HMC moves per particle",
            AlgoName::SmcmcPrior => "sequential MCMC, composite kernel with prior proposals",
            AlgoName::SmcmcOptimal => {
                "sequential MCMC, exact independent kernel (linear-Gaussian only)"
            }
            AlgoName::Smala => "sequential MCMC, pre-conditioned MALA kernel",
            AlgoName::Smmala => "sequential MCMC, manifold MALA kernel",
            AlgoName::SimplifiedSmmala => "sequential MCMC, manifold MALA without drift",
            AlgoName::Shmc => "sequential MCMC, HMC kernel (identity mass)",
            AlgoName::Smhmc => "sequential MCMC, manifold HMC kernel",
        }
    }

    pub fn is_smcmc(&self) -> bool {
        matches!(
            self,
            AlgoName::SmcmcPrior
                | AlgoName::SmcmcOptimal
                | AlgoName::Smala
                | AlgoName::Smmala
                | AlgoName::SimplifiedSmmala
                | AlgoName::Shmc
                | AlgoName::Smhmc
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockProposalKind {
    ConditionalPrior,
    RandomWalk,
}

#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    pub name: AlgoName,
    /// Particle count / retained chain length.
    pub n: usize,
    pub burn_in_fraction: f64,
    pub epsilon0: f64,
    /// Leapfrog steps; 0 picks the defaults (20 classical, 10 generalized).
    pub n_lf: usize,
    pub n_fp: usize,
    /// MCMC moves per particle (Resample-Move).
    pub k_moves: usize,
    /// Refinement / Block-SIR block size.
    pub block_size: usize,
    /// Resampling threshold as a fraction of N.
    pub resample_threshold: f64,
    pub ancestor_mode: AncestorMode,
    pub block_proposal: BlockProposalKind,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            name: AlgoName::Sir,
            n: 200,
            burn_in_fraction: 0.1,
            epsilon0: 0.5,
            n_lf: 0,
            n_fp: 2,
            k_moves: 1,
            block_size: 4,
            resample_threshold: 0.5,
            ancestor_mode: AncestorMode::Uniform,
            block_proposal: BlockProposalKind::ConditionalPrior,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t: usize,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t: 10,
            n_runs: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub per_dim: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            per_dim: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub algorithm: AlgorithmConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in &entries {
            cfg.apply(key, value)
                .with_context(|| format!("config key `{key}`"))?;
        }
        if let Ok(dir) = std::env::var("OUTPUT_DIR") {
            cfg.output.dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_f64 = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| anyhow!("expected a number, got `{value}`"))
        };
        let parse_usize = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| anyhow!("expected a count, got `{value}`"))
        };
        match key {
            "model.type" => {
                self.model.kind = match value {
                    "gaussian" => ModelKind::Gaussian,
                    "gh_poisson" => ModelKind::GhPoisson,
                    other => bail!("unknown model type `{other}`"),
                }
            }
            "model.d" => self.model.d = parse_usize()?,
            "model.alpha" => self.model.alpha = parse_f64()?,
            "model.sigma_y2" => self.model.sigma_y2 = parse_f64()?,
            "model.alpha0" => self.model.alpha0 = parse_f64()?,
            "model.alpha1" => self.model.alpha1 = parse_f64()?,
            "model.beta" => self.model.beta = parse_f64()?,
            "model.nu" => self.model.nu = parse_f64()?,
            "model.gamma" => self.model.gamma = parse_f64()?,
            "model.m1" => self.model.m1 = parse_f64()?,
            "model.m2" => self.model.m2 = parse_f64()?,
            "model.locations" => self.model.locations = Some(PathBuf::from(value)),
            "algorithm.name" => self.algorithm.name = AlgoName::parse(value)?,
            "algorithm.n" => self.algorithm.n = parse_usize()?,
            "algorithm.burn_in_fraction" => self.algorithm.burn_in_fraction = parse_f64()?,
            "algorithm.epsilon0" => self.algorithm.epsilon0 = parse_f64()?,
            "algorithm.n_lf" => self.algorithm.n_lf = parse_usize()?,
            "algorithm.n_fp" => self.algorithm.n_fp = parse_usize()?,
            "algorithm.k_moves" => self.algorithm.k_moves = parse_usize()?,
            "algorithm.block_size" => self.algorithm.block_size = parse_usize()?,
            "algorithm.resample_threshold" => {
                self.algorithm.resample_threshold = parse_f64()?
            }
            "algorithm.ancestor_mode" => {
                self.algorithm.ancestor_mode = match value {
                    "uniform" => AncestorMode::Uniform,
                    "predictive" => AncestorMode::PredictiveLikelihood,
                    "gibbs" => AncestorMode::PerfectGibbs,
                    other => bail!("unknown ancestor mode `{other}`"),
                }
            }
            "algorithm.block_proposal" => {
                self.algorithm.block_proposal = match value {
                    "conditional_prior" => BlockProposalKind::ConditionalPrior,
                    "random_walk" => BlockProposalKind::RandomWalk,
                    other => bail!("unknown block proposal `{other}`"),
                }
            }
            "run.t" => self.run.t = parse_usize()?,
            "run.n_runs" => self.run.n_runs = parse_usize()?,
            "run.seed" => {
                self.run.seed = value
                    .parse()
                    .map_err(|_| anyhow!("expected a u64 seed, got `{value}`"))?
            }
            "output.dir" => self.output.dir = PathBuf::from(value),
            "output.per_dim" => {
                self.output.per_dim = match value {
                    "true" => true,
                    "false" => false,
                    other => bail!("expected true/false, got `{other}`"),
                }
            }
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithm.name == AlgoName::SmcmcOptimal && self.model.kind != ModelKind::Gaussian
        {
            bail!("smcmc_optimal requires the gaussian model");
        }
        if self.algorithm.block_proposal == BlockProposalKind::ConditionalPrior
            && self.model.kind != ModelKind::Gaussian
            && self.algorithm.name == AlgoName::SmcmcPrior
        {
            bail!(
                "conditional-prior block proposals need the gaussian model; \
                 use `algorithm.block_proposal = random_walk`"
            );
        }
        if self.model.locations.is_none() {
            let side = (self.model.d as f64).sqrt().round() as usize;
            if side * side != self.model.d {
                bail!(
                    "model.d = {} is not a perfect square; grid mode needs one \
                     (or provide model.locations)",
                    self.model.d
                );
            }
        }
        if self.algorithm.n < 2 {
            bail!("algorithm.n must be at least 2");
        }
        if !(0.0..1.0).contains(&self.algorithm.burn_in_fraction) {
            bail!("algorithm.burn_in_fraction must lie in [0, 1)");
        }
        if self.run.t == 0 {
            bail!("run.t must be positive");
        }
        Ok(())
    }

    /// Instantiates the configured model.
    pub fn build_model(&self) -> Result<ModelHandle> {
        let grid = match &self.model.locations {
            Some(path) => SensorGrid::from_csv(path)?,
            None => SensorGrid::unit_grid(self.model.d)?,
        };
        if grid.len() != self.model.d {
            bail!(
                "sensor grid has {} locations but model.d = {}",
                grid.len(),
                self.model.d
            );
        }
        match self.model.kind {
            ModelKind::Gaussian => {
                let params = GaussianModelParams {
                    alpha: self.model.alpha,
                    sigma_y2: self.model.sigma_y2,
                    alpha0: self.model.alpha0,
                    alpha1: self.model.alpha1,
                    beta: self.model.beta,
                };
                Ok(ModelHandle::Gaussian(Arc::new(GaussianModel::new(
                    params, &grid,
                )?)))
            }
            ModelKind::GhPoisson => {
                let sigma =
                    build_dispersion(&grid, self.model.alpha0, self.model.alpha1, self.model.beta)?;
                let gamma = nalgebra::DVector::from_element(self.model.d, self.model.gamma);
                let gh = GHParams::skewed_t(self.model.nu, gamma, sigma, self.model.alpha)?;
                let obs = PoissonObsParams {
                    m1: self.model.m1,
                    m2: self.model.m2,
                };
                Ok(ModelHandle::GhPoisson(Arc::new(GhPoissonModel::new(
                    gh, obs,
                )?)))
            }
        }
    }

    /// Stable fingerprint of everything that determines the dataset.
    pub fn dataset_fingerprint(&self) -> String {
        let m = &self.model;
        let tag = format!(
            "{:?}|d={}|alpha={}|sy2={}|a0={}|a1={}|beta={}|nu={}|gamma={}|m1={}|m2={}|t={}|seed={}",
            m.kind,
            m.d,
            m.alpha,
            m.sigma_y2,
            m.alpha0,
            m.alpha1,
            m.beta,
            m.nu,
            m.gamma,
            m.m1,
            m.m2,
            self.run.t,
            self.run.seed
        );
        // FNV-1a.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tag.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// A constructed model behind an `Arc`, with access to the concrete
/// linear-Gaussian type where exact machinery (Kalman, optimal kernel)
/// needs it.
#[derive(Clone)]
pub enum ModelHandle {
    Gaussian(Arc<GaussianModel>),
    GhPoisson(Arc<GhPoissonModel>),
}

impl ModelHandle {
    pub fn as_model(&self) -> &dyn seqmc::Model {
        match self {
            ModelHandle::Gaussian(m) => m.as_ref(),
            ModelHandle::GhPoisson(m) => m.as_ref(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&Arc<GaussianModel>> {
        match self {
            ModelHandle::Gaussian(m) => Some(m),
            ModelHandle::GhPoisson(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        seqmc::Model::dim(self.as_model())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "
            # Example 1 at desk scale
            model.type = gaussian
            model.d = 16
            algorithm.name = smhmc
            algorithm.n = 100
            run.t = 5
            run.n_runs = 3
            run.seed = 7
            output.dir = /tmp/x
        ";
        let cfg = ExperimentConfig::from_str(text).unwrap();
        assert_eq!(cfg.model.d, 16);
        assert_eq!(cfg.algorithm.name, AlgoName::Smhmc);
        assert_eq!(cfg.run.n_runs, 3);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
        // Paper defaults survive.
        assert_eq!(cfg.model.alpha, 0.9);
        assert_eq!(cfg.model.sigma_y2, 2.0);
    }

    #[test]
    fn rejects_incompatible_algorithm() {
        let text = "
            model.type = gh_poisson
            model.d = 16
            algorithm.name = smcmc_optimal
        ";
        assert!(ExperimentConfig::from_str(text).is_err());
    }

    #[test]
    fn rejects_non_square_grid_without_locations() {
        let text = "model.d = 10";
        assert!(ExperimentConfig::from_str(text).is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_str("model.unknown = 3").is_err());
    }

    #[test]
    fn accepts_paper_scale_configs() {
        // The harness must accept the full-scale configurations even though
        // reproducing them is out of desk-scale scope.
        for d in [400, 1024] {
            let text = format!(
                "model.type = gh_poisson\nmodel.d = {d}\nalgorithm.name = smhmc\n\
                 algorithm.n = 200\nrun.t = 10\nrun.n_runs = 100"
            );
            let cfg = ExperimentConfig::from_str(&text).unwrap();
            assert_eq!(cfg.model.d, d);
        }
    }
}
