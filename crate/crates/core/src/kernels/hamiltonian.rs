//! Hamiltonian kernels: classical leapfrog HMC and manifold HMC with the
//! generalized (implicit) leapfrog integrator.
//!
//! The manifold Hamiltonian is
//! `H~(x, q) = U(x) + 0.5 log((2 pi)^d |G(x)|) + 0.5 q^T G^-1(x) q`
//! and is not separable: position and momentum sub-steps become implicit
//! fixed-point updates. For a constant metric the manifold kernel drops to
//! the classical integrator with mass `G`, matching the plain HMC kernel
//! draw for draw.

use crate::error::{Error, Result};
use crate::hmm::{StateVector, Target};
use crate::kernels::{metropolis_accept, KernelConfig, Momentum};
use crate::math::spd::SpdMatrix;
use crate::metric::MetricBundle;
use nalgebra::DVector;
use rand::{Rng, RngCore};

fn check_finite(v: &DVector<f64>, term: &str) -> Result<()> {
    if let Some(bad) = v.iter().cloned().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            term: term.to_string(),
            value: bad,
        });
    }
    Ok(())
}

/// Guards a fixed-point iterate against runaway growth.
fn check_growth(v: &DVector<f64>, base: f64, term: &str) -> Result<()> {
    check_finite(v, term)?;
    let norm = v.norm();
    if norm > 10.0 * base {
        return Err(Error::FixedPointDiverged { norm });
    }
    Ok(())
}

/// Classical leapfrog: `n_lf` iterations of half-kick / drift / half-kick
/// with potential gradient `grad_u` and constant mass matrix `mass`.
pub fn leapfrog(
    x0: &StateVector,
    q0: &Momentum,
    grad_u: &dyn Fn(&StateVector) -> Result<DVector<f64>>,
    mass: &SpdMatrix,
    eps: f64,
    n_lf: usize,
) -> Result<(StateVector, Momentum)> {
    let mut x = x0.clone();
    let mut q = q0.clone();
    let mut g = grad_u(&x)?;
    for _ in 0..n_lf {
        q -= &g * (eps / 2.0);
        x += mass.solve(&q) * eps;
        check_finite(&x, "leapfrog position")?;
        g = grad_u(&x)?;
        q -= &g * (eps / 2.0);
        check_finite(&q, "leapfrog momentum")?;
    }
    Ok((x, q))
}

/// dH~/dx at `(x, q)` given the metric bundle at `x`:
/// `-grad log pi(x) + 0.5 [ Tr(G^-1 dG/dx(i)) - q^T G^-1 dG/dx(i) G^-1 q ]_i`.
fn grad_x_manifold_h(
    grad_log_pi: &DVector<f64>,
    bundle: &MetricBundle,
    q: &Momentum,
) -> DVector<f64> {
    if bundle.is_constant() {
        return -grad_log_pi;
    }
    let v = bundle.g().solve(q);
    let trace = bundle.trace_g_inv_dg();
    let quad = bundle.quad_dg(&v);
    -grad_log_pi + (trace - quad) * 0.5
}

/// Generalized leapfrog for the non-separable manifold Hamiltonian.
///
/// Each step runs `n_fp` fixed-point iterations for the implicit momentum
/// half-step, `n_fp` for the implicit position step (with `dH~/dq = G^-1 q`
/// averaged at the old and trial positions), then one explicit momentum
/// half-step. Returns the end state with the metric bundle evaluated there.
pub fn generalized_leapfrog(
    x0: &StateVector,
    q0: &Momentum,
    target: &dyn Target,
    eps: f64,
    n_lf: usize,
    n_fp: usize,
) -> Result<(StateVector, Momentum, MetricBundle)> {
    let mut x = x0.clone();
    let mut q = q0.clone();
    let mut bundle = target.metric(&x)?;
    let mut grad_pi = target.grad_log_density(&x)?;

    for _ in 0..n_lf {
        // Implicit momentum half-step.
        let q_base = q.norm().max(1.0);
        let mut q_half = q.clone();
        for _ in 0..n_fp {
            let gh = grad_x_manifold_h(&grad_pi, &bundle, &q_half);
            q_half = &q - gh * (eps / 2.0);
            check_growth(&q_half, q_base, "generalized leapfrog momentum")?;
        }

        // Implicit position step: dH~/dq averaged at old and trial points.
        let v_old = bundle.g().solve(&q_half);
        let x_base = x.norm().max(1.0);
        let mut x_new = x.clone();
        for _ in 0..n_fp {
            let bundle_trial = if target.metric_is_constant() {
                bundle.clone()
            } else {
                target.metric(&x_new)?
            };
            let v_trial = bundle_trial.g().solve(&q_half);
            x_new = &x + (&v_old + v_trial) * (eps / 2.0);
            check_growth(&x_new, x_base, "generalized leapfrog position")?;
        }

        // Explicit final momentum half-step at the settled position.
        bundle = if target.metric_is_constant() {
            bundle
        } else {
            target.metric(&x_new)?
        };
        grad_pi = target.grad_log_density(&x_new)?;
        let gh = grad_x_manifold_h(&grad_pi, &bundle, &q_half);
        q = q_half - gh * (eps / 2.0);
        check_finite(&q, "generalized leapfrog momentum")?;
        x = x_new;
    }
    Ok((x, q, bundle))
}

fn jittered_eps(eps: f64, cfg: &KernelConfig, rng: &mut dyn RngCore) -> f64 {
    if cfg.jitter_epsilon {
        let rng = &mut *rng;
        let u: f64 = rng.random();
        eps * (0.8 + 0.4 * u)
    } else {
        eps
    }
}

/// One HMC transition: momentum refresh, leapfrog trajectory, Metropolis
/// correction with `rho = min(1, exp(H - H*))`.
///
/// A diverged trajectory counts as a rejection so the step-size controller
/// can recover; errors at the current state still propagate.
pub fn hmc_kernel(
    x: &mut StateVector,
    target: &dyn Target,
    mass: &SpdMatrix,
    eps: f64,
    cfg: &KernelConfig,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    let eps = jittered_eps(eps, cfg, rng);
    let zero = DVector::zeros(x.len());
    let q0 = mass.sample_covariance(&zero, &mut &mut *rng);

    let lp0 = target.log_density(x);
    if lp0.is_nan() {
        return Err(Error::NonFinite {
            term: "log target at current state".into(),
            value: lp0,
        });
    }
    let grad_u = |v: &StateVector| target.grad_log_density(v).map(|g| -g);
    let trajectory = leapfrog(x, &q0, &grad_u, mass, eps, cfg.n_lf);
    let (x_star, q_star) = match trajectory {
        Ok(t) => t,
        Err(Error::NonFinite { .. }) | Err(Error::OutsideSupport) => return Ok(false),
        Err(e) => return Err(e),
    };

    let lp_star = target.log_density(&x_star);
    // -(H* - H) = (lp* - lp) + (K - K*)
    let log_ratio = (lp_star - lp0)
        + 0.5 * (mass.inv_quad_form(&q0) - mass.inv_quad_form(&q_star));
    let accepted = metropolis_accept(log_ratio, &mut &mut *rng);
    if accepted {
        *x = x_star;
    }
    Ok(accepted)
}

/// One manifold HMC transition with momentum `q ~ N(0, G(x))` and the
/// generalized leapfrog integrator; the acceptance ratio includes the
/// `0.5 log |G|` difference of the state-dependent kinetic normalizer.
///
/// With a constant metric this reduces exactly to [`hmc_kernel`] with mass
/// `G`: same draws, same trajectory, identical accept decision.
pub fn mhmc_kernel(
    x: &mut StateVector,
    target: &dyn Target,
    bundle_x: &MetricBundle,
    eps: f64,
    cfg: &KernelConfig,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    if bundle_x.is_constant() {
        return hmc_kernel(x, target, bundle_x.g(), eps, cfg, rng);
    }
    let eps = jittered_eps(eps, cfg, rng);
    let zero = DVector::zeros(x.len());
    let q0 = bundle_x.g().sample_covariance(&zero, &mut &mut *rng);

    let lp0 = target.log_density(x);
    if lp0.is_nan() {
        return Err(Error::NonFinite {
            term: "log target at current state".into(),
            value: lp0,
        });
    }
    let trajectory = generalized_leapfrog(x, &q0, target, eps, cfg.n_lf, cfg.n_fp);
    let (x_star, q_star, bundle_star) = match trajectory {
        Ok(t) => t,
        Err(Error::NonFinite { .. })
        | Err(Error::OutsideSupport)
        | Err(Error::FixedPointDiverged { .. }) => return Ok(false),
        Err(e) => return Err(e),
    };

    let lp_star = target.log_density(&x_star);
    let log_ratio = (lp_star - lp0)
        + 0.5 * (bundle_x.g().inv_quad_form(&q0) - bundle_star.g().inv_quad_form(&q_star))
        + 0.5 * (bundle_x.log_det() - bundle_star.log_det());
    let accepted = metropolis_accept(log_ratio, &mut &mut *rng);
    if accepted {
        *x = x_star;
    }
    Ok(accepted)
}
