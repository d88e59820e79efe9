//! Ancestor-selection moves: which bank element plays the role of the
//! previous state for the current chain element.

use crate::error::{Error, Result};
use crate::hmm::{Model, Observation};
use crate::kernels::metropolis_accept;
use crate::math::stats::log_sum_exp;
use crate::smcmc::{ChainSample, SampleBank};
use rand::{Rng, RngCore};

/// How the previous-state component of the chain is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncestorMode {
    /// Propose uniformly from the bank (the empirical approximation itself
    /// as proposal); O(1) per iteration. The default.
    Uniform,
    /// Propose from weights proportional to the likelihood evaluated at each
    /// bank entry's prior predictive mean; weights precomputed per step.
    PredictiveLikelihood,
    /// Exact conditional (Gibbs) draw, always accepted; O(N) per iteration.
    PerfectGibbs,
}

/// Normalized ancestor-proposal weights with a sampling CDF.
#[derive(Debug, Clone)]
pub struct AncestorWeights {
    log_beta: Vec<f64>,
    cdf: Vec<f64>,
    uniform: bool,
}

impl AncestorWeights {
    pub fn uniform(n: usize) -> Self {
        let log_beta = vec![-(n as f64).ln(); n];
        Self {
            log_beta,
            cdf: Vec::new(),
            uniform: true,
        }
    }

    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        let lse = log_sum_exp(&log_weights);
        if !lse.is_finite() {
            return Err(Error::WeightCollapse);
        }
        let log_beta: Vec<f64> = log_weights.into_iter().map(|w| w - lse).collect();
        let mut cdf = Vec::with_capacity(log_beta.len());
        let mut acc = 0.0;
        for lb in &log_beta {
            acc += lb.exp();
            cdf.push(acc);
        }
        Ok(Self {
            log_beta,
            cdf,
            uniform: false,
        })
    }

    pub fn len(&self) -> usize {
        self.log_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_beta.is_empty()
    }

    pub fn log_beta(&self, i: usize) -> f64 {
        self.log_beta[i]
    }

    /// Categorical draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.len();
        if self.uniform {
            return rng.random_range(0..n);
        }
        let u: f64 = rng.random();
        match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(n - 1),
            Err(i) => i.min(n - 1),
        }
    }
}

/// Precomputes ancestor-proposal weights for a time step.
///
/// `Uniform` ignores the observation; `PredictiveLikelihood` requires it and
/// sets `beta_j ∝ g(y | E[X_n | X_{n-1} = bank_j])`.
pub fn ancestor_weights_precompute(
    bank: &SampleBank,
    y: Option<&Observation>,
    model: &dyn Model,
    mode: AncestorMode,
) -> Result<AncestorWeights> {
    match mode {
        AncestorMode::Uniform => Ok(AncestorWeights::uniform(bank.len())),
        AncestorMode::PredictiveLikelihood => {
            let y = y.ok_or_else(|| {
                Error::InvalidParameter(
                    "predictive-likelihood ancestor weights need the observation".into(),
                )
            })?;
            let log_w: Vec<f64> = bank
                .states()
                .iter()
                .map(|x_prev| {
                    let mean = model.transition_mean(x_prev);
                    model.log_likelihood(y, &mean)
                })
                .collect();
            if log_w.iter().any(|w| w.is_nan()) {
                return Err(Error::NonFinite {
                    term: "predictive ancestor weight".into(),
                    value: f64::NAN,
                });
            }
            AncestorWeights::from_log_weights(log_w)
        }
        AncestorMode::PerfectGibbs => Err(Error::InvalidParameter(
            "perfect-Gibbs ancestors are drawn per iteration, not precomputed".into(),
        )),
    }
}

/// Metropolis ancestor move: propose `a* ~ beta`, accept with
/// `min(1, f(x | bank[a*]) beta(a_old) / (f(x | bank[a_old]) beta(a*)))`.
///
/// Returns whether the proposal was accepted. A proposal equal to the
/// current ancestor is accepted outright.
pub fn ancestor_move(
    chain: &mut ChainSample,
    bank: &SampleBank,
    weights: &AncestorWeights,
    model: &dyn Model,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    let rng = &mut *rng;
    let proposal = weights.sample(rng);
    if proposal == chain.ancestor {
        return Ok(true);
    }
    let lf_new = model.log_transition(&chain.current, bank.state(proposal));
    let lf_old = model.log_transition(&chain.current, bank.state(chain.ancestor));
    if lf_new.is_nan() || lf_old.is_nan() {
        return Err(Error::NonFinite {
            term: "transition density in ancestor move".into(),
            value: f64::NAN,
        });
    }
    let log_ratio =
        lf_new - lf_old + weights.log_beta(chain.ancestor) - weights.log_beta(proposal);
    // Reject on a non-finite ratio rather than erroring.
    let accepted = metropolis_accept(log_ratio, rng);
    if accepted {
        chain.ancestor = proposal;
    }
    Ok(accepted)
}

/// Exact conditional (Gibbs) ancestor draw: `a ~ f(x | bank_j)` over the
/// bank, always accepted. O(N) transition evaluations per call.
pub fn perfect_ancestor_gibbs(
    chain: &mut ChainSample,
    bank: &SampleBank,
    model: &dyn Model,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let rng = &mut *rng;
    let log_w: Vec<f64> = bank
        .states()
        .iter()
        .map(|x_prev| model.log_transition(&chain.current, x_prev))
        .collect();
    if log_w.iter().any(|w| w.is_nan()) {
        return Err(Error::NonFinite {
            term: "transition density in Gibbs ancestor draw".into(),
            value: f64::NAN,
        });
    }
    let weights = AncestorWeights::from_log_weights(log_w)?;
    chain.ancestor = weights.sample(rng);
    Ok(())
}
