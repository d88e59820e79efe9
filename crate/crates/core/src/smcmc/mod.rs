//! Sequential MCMC: one Markov chain per time step over (ancestor, current
//! state), targeting the filtering posterior with the previous marginal
//! replaced by the empirical sample bank retained from the last step.
//!
//! A time step runs `N_b + N` transitions of a [`ChainKernel`], discards the
//! first `N_b = burn_in_fraction * N`, and returns the `N` retained current
//! states as the next bank. Step-size and proposal-scale adaptation happens
//! during burn-in only.

mod ancestor;
mod kernels;

pub use ancestor::{
    ancestor_move, ancestor_weights_precompute, perfect_ancestor_gibbs, AncestorMode,
    AncestorWeights,
};
pub use kernels::{
    prior_independent_kernel, ChainKernel, CompositeBlockProposal, CompositeKernel,
    GradMoveKernel, KernelStats, OptimalGaussianKernel,
};

use crate::diagnostics::{chain_ess, ChainDiagnostics};
use crate::error::{Error, Result};
use crate::hmm::{Model, Observation, StateVector};
use rand::Rng;
use std::time::Instant;

/// The retained post-burn-in samples approximating the previous filtering
/// marginal; the discrete ancestor support at the current time step.
#[derive(Debug, Clone)]
pub struct SampleBank {
    states: Vec<StateVector>,
}

impl SampleBank {
    pub fn from_states(states: Vec<StateVector>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParameter("empty sample bank".into()));
        }
        Ok(Self { states })
    }

    /// A bank of `n` copies of the anchor state; the transition from it
    /// realizes the initial prior, so time step 1 needs no special casing.
    pub fn anchor(anchor: StateVector, n: usize) -> Self {
        Self {
            states: vec![anchor; n],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &StateVector {
        &self.states[i]
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }
}

/// One SMCMC chain element: an ancestor index into the previous bank plus
/// the current-state vector (the path prefix is represented by its index;
/// only the previous marginal is ever stored).
#[derive(Debug, Clone)]
pub struct ChainSample {
    pub ancestor: usize,
    pub current: StateVector,
}

/// Engine configuration for one run.
#[derive(Debug, Clone, Copy)]
pub struct SmcmcConfig {
    /// Retained samples per time step (bank size).
    pub n: usize,
    /// Burn-in as a fraction of `n` (default 0.1).
    pub burn_in_fraction: f64,
    pub ancestor_mode: AncestorMode,
}

impl SmcmcConfig {
    pub fn new(n: usize, burn_in_fraction: f64, ancestor_mode: AncestorMode) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "bank size must be at least 2, got {n}"
            )));
        }
        if !(0.0..1.0).contains(&burn_in_fraction) {
            return Err(Error::InvalidParameter(format!(
                "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
            )));
        }
        Ok(Self {
            n,
            burn_in_fraction,
            ancestor_mode,
        })
    }

    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.n as f64).round() as usize
    }
}

/// Per-time-step kernel context.
pub struct TimeStepCtx<'a> {
    pub model: &'a dyn Model,
    pub bank: &'a SampleBank,
    pub y: &'a Observation,
    pub ancestors: &'a AncestorWeights,
    pub ancestor_mode: AncestorMode,
}

/// One SMCMC time step: `N_b + N` kernel transitions targeting the
/// bank-approximated posterior; returns the new bank and diagnostics.
pub fn smcmc_timestep<R: Rng>(
    bank: &SampleBank,
    y: &Observation,
    model: &dyn Model,
    cfg: &SmcmcConfig,
    kernel: &mut dyn ChainKernel,
    rng: &mut R,
) -> Result<(SampleBank, ChainDiagnostics)> {
    let start = Instant::now();
    let n = cfg.n;
    let n_b = cfg.burn_in();

    let ancestors = match cfg.ancestor_mode {
        AncestorMode::PredictiveLikelihood => {
            ancestor_weights_precompute(bank, Some(y), model, AncestorMode::PredictiveLikelihood)?
        }
        _ => AncestorWeights::uniform(bank.len()),
    };
    let ctx = TimeStepCtx {
        model,
        bank,
        y,
        ancestors: &ancestors,
        ancestor_mode: cfg.ancestor_mode,
    };
    kernel.prepare(&ctx)?;
    kernel.set_adapting(true);

    // Chain initialization: uniform ancestor, one prior-transition draw.
    let a0 = rng.random_range(0..bank.len());
    let x0 = model.sample_transition(bank.state(a0), &mut *rng);
    let mut chain = ChainSample {
        ancestor: a0,
        current: x0,
    };

    let mut retained_states: Vec<StateVector> = Vec::with_capacity(n);
    let mut unique_ancestors = 0usize;
    for j in 0..(n_b + n) {
        if j == n_b {
            kernel.set_adapting(false);
            kernel.take_stats();
        }
        kernel.transition(&mut chain, &ctx, &mut *rng)?;
        if j >= n_b {
            // The retained bank is the ancestor support of the next time
            // step; count its distinct atoms (rejections duplicate the
            // previous retained sample).
            if retained_states.last() != Some(&chain.current) {
                unique_ancestors += 1;
            }
            retained_states.push(chain.current.clone());
        }
    }
    let stats = kernel.take_stats();

    // Per-dimension chain ESS over the retained samples.
    let d = model.dim();
    let mut ess: Vec<f64> = (0..d)
        .map(|i| {
            let series: Vec<f64> = retained_states.iter().map(|x| x[i]).collect();
            chain_ess(&series).min(n as f64)
        })
        .collect();
    ess.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ess_min = ess[0];
    let ess_max = ess[d - 1];
    let ess_med = if d % 2 == 1 {
        ess[d / 2]
    } else {
        0.5 * (ess[d / 2 - 1] + ess[d / 2])
    };
    let ess_mean = ess.iter().sum::<f64>() / d as f64;

    let diag = ChainDiagnostics {
        accept_joint: stats.joint.rate(),
        accept_refine: stats.refine.rate(),
        accept_kernel: stats.kernel.rate(),
        ess_min,
        ess_med,
        ess_mean,
        ess_max,
        unique_ancestors,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((SampleBank::from_states(retained_states)?, diag))
}
