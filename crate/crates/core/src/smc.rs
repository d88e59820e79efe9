//! SMC baselines: SIR, Block SIR and Resample-Move.
//!
//! Only the current-time marginal is stored. Propagation always uses the
//! prior transition as proposal, so the incremental log-weight is exactly the
//! log-likelihood of the new observation. Per-particle randomness is derived
//! from a step-scoped seed, making results independent of evaluation order.

use crate::error::{Error, Result};
use crate::hmm::{ConditionalTarget, Model, Observation, StateVector};
use crate::kernels::GradKernel;
use crate::math::stats::log_sum_exp;
use crate::rng::{derive_rng, tag};
use rand::Rng;

/// Weighted particle approximation of the filtering distribution.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    states: Vec<StateVector>,
    /// Log-weights, normalized so that exp sums to one.
    log_weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(states: Vec<StateVector>, log_weights: Vec<f64>) -> Result<Self> {
        if states.len() < 2 || states.len() != log_weights.len() {
            return Err(Error::InvalidParameter(format!(
                "particle set needs N >= 2 matching states/weights, got {}/{}",
                states.len(),
                log_weights.len()
            )));
        }
        let lse = log_sum_exp(&log_weights);
        if !lse.is_finite() {
            return Err(Error::WeightCollapse);
        }
        let log_weights = log_weights.into_iter().map(|w| w - lse).collect();
        Ok(Self {
            states,
            log_weights,
        })
    }

    /// Equally weighted particles.
    pub fn uniform(states: Vec<StateVector>) -> Result<Self> {
        let n = states.len();
        let lw = vec![-(n as f64).ln(); n];
        Self::new(states, lw)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Weighted posterior-mean estimate.
    pub fn mean(&self) -> StateVector {
        let d = self.states[0].len();
        let mut m = StateVector::zeros(d);
        for (x, lw) in self.states.iter().zip(&self.log_weights) {
            m += x * lw.exp();
        }
        m
    }

    /// Weighted per-dimension variance estimate.
    pub fn variance(&self) -> StateVector {
        let mean = self.mean();
        let d = mean.len();
        let mut v = StateVector::zeros(d);
        for (x, lw) in self.states.iter().zip(&self.log_weights) {
            let w = lw.exp();
            for i in 0..d {
                v[i] += w * (x[i] - mean[i]).powi(2);
            }
        }
        v
    }
}

/// Per-step summary emitted by the SMC algorithms.
#[derive(Debug, Clone, Copy)]
pub struct SmcStepInfo {
    /// Weight-based effective sample size before any resampling.
    pub weight_ess: f64,
    pub resampled: bool,
    /// Distinct ancestors surviving the (per-block) resampling; N when no
    /// resampling was triggered.
    pub unique_ancestors: usize,
    /// Pooled MCMC move acceptance (Resample-Move only, NaN otherwise).
    pub move_acceptance: f64,
}

/// Effective sample size `1 / sum(W_j^2)` of normalized importance weights.
///
/// Accepts unnormalized log-weights; errors on total collapse.
pub fn weight_ess(log_weights: &[f64]) -> Result<f64> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(Error::WeightCollapse);
    }
    let log_sq: Vec<f64> = log_weights.iter().map(|w| 2.0 * (w - lse)).collect();
    Ok((-log_sum_exp(&log_sq)).exp())
}

/// Systematic resampling: one uniform positions N equally spaced points on
/// the weight CDF. Copy counts differ from `N W_j` by less than one.
pub fn systematic_resample_indices<R: Rng + ?Sized>(
    log_weights: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = log_weights.len();
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(Error::WeightCollapse);
    }
    let u0: f64 = rng.random();
    let mut indices = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut j = 0usize;
    for i in 0..n {
        let p = (i as f64 + u0) / n as f64;
        while j < n {
            let next = cum + (log_weights[j] - lse).exp();
            if p < next || j == n - 1 {
                break;
            }
            cum = next;
            j += 1;
        }
        indices.push(j);
    }
    Ok(indices)
}

/// Resamples to N equally weighted particles.
pub fn systematic_resample<R: Rng + ?Sized>(
    ps: &ParticleSet,
    rng: &mut R,
) -> Result<ParticleSet> {
    let idx = systematic_resample_indices(&ps.log_weights, rng)?;
    let states = idx.iter().map(|&j| ps.states[j].clone()).collect();
    ParticleSet::uniform(states)
}

fn count_unique(mut indices: Vec<usize>) -> usize {
    indices.sort_unstable();
    indices.dedup();
    indices.len()
}

/// One SIR step: propagate through the prior, reweight by the likelihood,
/// resample when the weight ESS falls below `gamma`.
pub fn sir_step<M: Model + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    y: &Observation,
    model: &M,
    gamma: f64,
    rng: &mut R,
) -> Result<(ParticleSet, SmcStepInfo)> {
    let n = ps.len();
    let prop_seed = rng.next_u64();
    let mut states = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for j in 0..n {
        let mut prng = derive_rng(prop_seed, &[tag::PARTICLE, j as u64]);
        let x = model.sample_transition(&ps.states[j], &mut prng);
        let lg = model.log_likelihood(y, &x);
        if lg.is_nan() {
            return Err(Error::NonFinite {
                term: format!("log_likelihood (particle {j})"),
                value: lg,
            });
        }
        log_weights.push(ps.log_weights[j] + lg);
        states.push(x);
    }
    let ess = weight_ess(&log_weights)?;
    let set = ParticleSet::new(states, log_weights)?;
    if ess < gamma {
        let idx = systematic_resample_indices(&set.log_weights, rng)?;
        let unique = count_unique(idx.clone());
        let states = idx.iter().map(|&j| set.states[j].clone()).collect();
        Ok((
            ParticleSet::uniform(states)?,
            SmcStepInfo {
                weight_ess: ess,
                resampled: true,
                unique_ancestors: unique,
                move_acceptance: f64::NAN,
            },
        ))
    } else {
        Ok((
            set,
            SmcStepInfo {
                weight_ess: ess,
                resampled: false,
                unique_ancestors: n,
                move_acceptance: f64::NAN,
            },
        ))
    }
}

/// One Block SIR step: the state is propagated jointly, then each contiguous
/// index block is weighted by its own likelihood factors and resampled
/// independently; the recombined state mixes block values across particles.
///
/// Blocks are `[0..B), [B..2B), ...`; a final smaller block absorbs any
/// remainder. Requires a coordinate-factorized likelihood.
pub fn block_sir_step<M: Model + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    y: &Observation,
    model: &M,
    block_size: usize,
    rng: &mut R,
) -> Result<(ParticleSet, SmcStepInfo)> {
    if block_size == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    let n = ps.len();
    let d = model.dim();
    let prop_seed = rng.next_u64();
    let mut propagated = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n);
    for j in 0..n {
        let mut prng = derive_rng(prop_seed, &[tag::PARTICLE, j as u64]);
        let x = model.sample_transition(&ps.states[j], &mut prng);
        let f = model
            .log_likelihood_factors(y, &x)
            .ok_or_else(|| Error::Unsupported(
                "Block SIR requires a coordinate-factorized likelihood".into(),
            ))?;
        propagated.push(x);
        factors.push(f);
    }

    // Per-block weights include the carried particle weights so that a
    // single full-width block reproduces plain SIR exactly.
    let mut states = vec![StateVector::zeros(d); n];
    let mut ess_min = f64::INFINITY;
    let mut all_indices: Vec<usize> = Vec::new();
    let mut start = 0usize;
    while start < d {
        let end = (start + block_size).min(d);
        let block_lw: Vec<f64> = (0..n)
            .map(|j| {
                ps.log_weights[j] + factors[j].rows(start, end - start).sum()
            })
            .collect();
        ess_min = ess_min.min(weight_ess(&block_lw)?);
        let idx = systematic_resample_indices(&block_lw, rng)?;
        for (i, &src) in idx.iter().enumerate() {
            for k in start..end {
                states[i][k] = propagated[src][k];
            }
        }
        all_indices.extend_from_slice(&idx);
        start = end;
    }
    let unique = count_unique(all_indices);
    Ok((
        ParticleSet::uniform(states)?,
        SmcStepInfo {
            weight_ess: ess_min,
            resampled: true,
            unique_ancestors: unique.min(n),
            move_acceptance: f64::NAN,
        },
    ))
}

/// One Resample-Move step: SIR with forced resampling, then `k_moves`
/// applications of an invariant MCMC kernel to each particle's current state
/// (fixed lag one: the particle's ancestor state stays fixed).
pub fn resample_move_step<M: Model + ?Sized, R: Rng + ?Sized>(
    ps: &ParticleSet,
    y: &Observation,
    model: &M,
    kernel: &mut GradKernel,
    k_moves: usize,
    rng: &mut R,
) -> Result<(ParticleSet, SmcStepInfo)> {
    let n = ps.len();
    let prop_seed = rng.next_u64();
    let mut propagated = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for j in 0..n {
        let mut prng = derive_rng(prop_seed, &[tag::PARTICLE, j as u64]);
        let x = model.sample_transition(&ps.states[j], &mut prng);
        let lg = model.log_likelihood(y, &x);
        if lg.is_nan() {
            return Err(Error::NonFinite {
                term: format!("log_likelihood (particle {j})"),
                value: lg,
            });
        }
        log_weights.push(ps.log_weights[j] + lg);
        propagated.push(x);
    }
    let ess = weight_ess(&log_weights)?;
    let idx = systematic_resample_indices(&log_weights, rng)?;
    let unique = count_unique(idx.clone());

    let move_seed = rng.next_u64();
    let mut accepted = 0usize;
    let mut states = Vec::with_capacity(n);
    for (i, &src) in idx.iter().enumerate() {
        let x_prev = &ps.states[src];
        let mut x = propagated[src].clone();
        let target = ConditionalTarget::new(model, y, x_prev);
        let mut mrng = derive_rng(move_seed, &[tag::CHAIN, i as u64]);
        for _ in 0..k_moves {
            if kernel.step(&mut x, &target, &mut mrng)? {
                accepted += 1;
            }
        }
        states.push(x);
    }
    let move_acceptance = if k_moves == 0 {
        f64::NAN
    } else {
        accepted as f64 / (n * k_moves) as f64
    };
    Ok((
        ParticleSet::uniform(states)?,
        SmcStepInfo {
            weight_ess: ess,
            resampled: true,
            unique_ancestors: unique,
            move_acceptance,
        },
    ))
}
