//! Gradient-informed move kernels on the conditional target
//! `pi~(x) ∝ g(y | x) f(x | x_prev)`: pre-conditioned MALA, manifold MALA
//! (full and simplified), HMC with the leapfrog integrator and manifold HMC
//! with the generalized (implicit) leapfrog.
//!
//! [`GradKernel`] packages a kernel kind with its step-size controller so the
//! SMCMC engine and Resample-Move share one mutation interface.

pub mod hamiltonian;
pub mod langevin;
pub mod tuning;

use crate::error::{Error, Result};
use crate::hmm::{StateVector, Target};
use crate::math::spd::SpdMatrix;
use crate::metric::MetricBundle;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use tuning::StepSizeController;

/// Auxiliary momentum vector.
pub type Momentum = DVector<f64>;

/// A proposal with both transition log-densities for the MH ratio.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub x_star: StateVector,
    pub log_q_fwd: f64,
    pub log_q_rev: f64,
}

/// Integrator and tuning parameters.
#[derive(Debug, Clone, Copy)]
pub struct KernelConfig {
    /// Initial step size, adapted during burn-in.
    pub epsilon0: f64,
    /// Leapfrog steps per proposal (Hamiltonian kernels).
    pub n_lf: usize,
    /// Fixed-point iterations per implicit sub-step (generalized leapfrog).
    pub n_fp: usize,
    /// Target acceptance band for the step-size controller.
    pub accept_band: (f64, f64),
    /// Draw epsilon uniformly from [0.8, 1.2] x nominal on each Hamiltonian
    /// proposal to break periodic trajectories.
    pub jitter_epsilon: bool,
    /// Controller window length (iterations per adjustment).
    pub tune_window: usize,
}

impl KernelConfig {
    /// Langevin-family defaults: acceptance band 40-70%.
    pub fn langevin() -> Self {
        Self {
            epsilon0: 0.2,
            n_lf: 1,
            n_fp: 1,
            accept_band: (0.4, 0.7),
            jitter_epsilon: false,
            tune_window: 20,
        }
    }

    /// Hamiltonian defaults: 20 classical leapfrog steps, band 70-90%.
    pub fn hamiltonian() -> Self {
        Self {
            epsilon0: 0.5,
            n_lf: 20,
            n_fp: 1,
            accept_band: (0.7, 0.9),
            jitter_epsilon: true,
            tune_window: 20,
        }
    }

    /// Manifold-Hamiltonian defaults: 10 generalized leapfrog steps with two
    /// fixed-point iterations.
    pub fn manifold_hamiltonian() -> Self {
        Self {
            n_lf: 10,
            n_fp: 2,
            ..Self::hamiltonian()
        }
    }
}

/// Kernel families selectable at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradKernelKind {
    Mala,
    Smmala,
    SimplifiedSmmala,
    Hmc,
    Mhmc,
}

/// Log-space Metropolis accept step; a non-finite ratio rejects without
/// evaluating exp. Always consumes exactly one uniform.
pub fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// A move kernel with adaptive step size, shared by SMCMC and Resample-Move.
pub struct GradKernel {
    kind: GradKernelKind,
    cfg: KernelConfig,
    ctrl: StepSizeController,
    /// Momentum covariance / preconditioning metric for Mala and Hmc.
    mass: SpdMatrix,
    /// Cache for targets whose metric does not depend on the state.
    const_metric: Option<MetricBundle>,
}

impl GradKernel {
    pub fn new(kind: GradKernelKind, cfg: KernelConfig, dim: usize) -> Self {
        let mass = SpdMatrix::new(DMatrix::identity(dim, dim), "identity mass")
            .expect("identity is SPD");
        Self {
            kind,
            cfg,
            ctrl: StepSizeController::new(cfg.epsilon0, cfg.accept_band, cfg.tune_window),
            mass,
            const_metric: None,
        }
    }

    /// Replaces the identity preconditioner of Mala/Hmc. The matrix is the
    /// momentum covariance for HMC and the inverse proposal covariance for
    /// MALA (the two coincide under the single-step equivalence).
    pub fn with_mass(mut self, mass: SpdMatrix) -> Self {
        self.mass = mass;
        self
    }

    pub fn kind(&self) -> GradKernelKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.ctrl.eps()
    }

    pub fn set_adapting(&mut self, on: bool) {
        self.ctrl.set_adapting(on);
    }

    /// One stochastic-approximation nudge from an externally pooled
    /// acceptance rate (Resample-Move adapts between time steps).
    pub fn adjust_from_rate(&mut self, rate: f64) {
        self.ctrl.adjust_once(rate);
    }

    pub fn controller_warning(&self) -> Option<&str> {
        self.ctrl.warning()
    }

    fn metric_at(&mut self, target: &dyn Target, x: &StateVector) -> Result<MetricBundle> {
        if target.metric_is_constant() {
            if self.const_metric.is_none() {
                self.const_metric = Some(target.metric(x)?);
            }
            Ok(self.const_metric.clone().unwrap())
        } else {
            target.metric(x)
        }
    }

    /// One Metropolis move of `x`; returns whether the proposal was accepted.
    ///
    /// A diverged or out-of-support trajectory rejects rather than aborting,
    /// so the controller can shrink the step size out of a bad regime; model
    /// NaN at the current point still surfaces as an error.
    pub fn step(
        &mut self,
        x: &mut StateVector,
        target: &dyn Target,
        rng: &mut dyn RngCore,
    ) -> Result<bool> {
        let eps = self.ctrl.eps();
        let accepted = match self.kind {
            GradKernelKind::Mala => self.mala_step(x, target, eps, rng)?,
            GradKernelKind::Smmala => self.manifold_mala_step(x, target, eps, false, rng)?,
            GradKernelKind::SimplifiedSmmala => {
                self.manifold_mala_step(x, target, eps, true, rng)?
            }
            GradKernelKind::Hmc => {
                hamiltonian::hmc_kernel(x, target, &self.mass, eps, &self.cfg, rng)?
            }
            GradKernelKind::Mhmc => {
                let bundle = self.metric_at(target, x)?;
                hamiltonian::mhmc_kernel(x, target, &bundle, eps, &self.cfg, rng)?
            }
        };
        self.ctrl.observe(accepted);
        Ok(accepted)
    }

    fn mala_step(
        &mut self,
        x: &mut StateVector,
        target: &dyn Target,
        eps: f64,
        rng: &mut dyn RngCore,
    ) -> Result<bool> {
        let grad = |v: &StateVector| target.grad_log_density(v);
        let proposal = match langevin::mala_propose(x, &grad, &self.mass, eps, rng) {
            Ok(p) => p,
            Err(Error::OutsideSupport) => return Ok(false),
            Err(e) => return Err(e),
        };
        let lp_cur = target.log_density(x);
        let lp_star = target.log_density(&proposal.x_star);
        let log_ratio = lp_star - lp_cur + proposal.log_q_rev - proposal.log_q_fwd;
        let accepted = metropolis_accept(log_ratio, &mut &mut *rng);
        if accepted {
            *x = proposal.x_star;
        }
        Ok(accepted)
    }

    fn manifold_mala_step(
        &mut self,
        x: &mut StateVector,
        target: &dyn Target,
        eps: f64,
        simplified: bool,
        rng: &mut dyn RngCore,
    ) -> Result<bool> {
        let bundle = self.metric_at(target, x)?;
        let result = if simplified {
            langevin::simplified_smmala_propose(x, target, &bundle, eps, rng)
        } else {
            langevin::smmala_propose(x, target, &bundle, eps, rng)
        };
        let proposal = match result {
            Ok(p) => p,
            Err(Error::OutsideSupport) => return Ok(false),
            Err(e) => return Err(e),
        };
        let lp_cur = target.log_density(x);
        let lp_star = target.log_density(&proposal.x_star);
        let log_ratio = lp_star - lp_cur + proposal.log_q_rev - proposal.log_q_fwd;
        let accepted = metropolis_accept(log_ratio, &mut &mut *rng);
        if accepted {
            *x = proposal.x_star;
        }
        Ok(accepted)
    }
}
