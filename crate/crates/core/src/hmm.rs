//! The hidden Markov model contract consumed by every filter in the crate.
//!
//! Concrete models supply the transition and likelihood log-densities, their
//! gradients with respect to the current state, forward samplers, and a
//! metric for the manifold kernels. Density evaluations return `-inf`
//! outside the support; errors are reserved for NaN propagation and
//! dimension mismatches.

use crate::error::{Error, Result};
use crate::metric::MetricBundle;
use nalgebra::DVector;
use rand::RngCore;

/// Latent field value at the sensor sites, a point in R^d.
pub type StateVector = DVector<f64>;

/// Sensor readings at one time step (counts are stored as nonnegative reals).
pub type Observation = DVector<f64>;

/// A state-space model: transition `f_n`, likelihood `g_n`, their gradients
/// and samplers, and the metric used by manifold kernels.
///
/// The time-1 prior is the transition evaluated from [`Model::initial_anchor`]
/// rather than a separate interface member.
///
/// Implementations must be pure and reentrant for all density and gradient
/// evaluations; sampling takes the caller's RNG.
pub trait Model: Sync {
    /// State dimension d.
    fn dim(&self) -> usize;

    /// Observation dimension.
    fn obs_dim(&self) -> usize {
        self.dim()
    }

    /// log f_n(x | x_prev).
    fn log_transition(&self, x: &StateVector, x_prev: &StateVector) -> f64;

    /// log g_n(y | x).
    fn log_likelihood(&self, y: &Observation, x: &StateVector) -> f64;

    /// Gradient of `log_transition` with respect to `x`.
    fn grad_log_transition(&self, x: &StateVector, x_prev: &StateVector) -> DVector<f64>;

    /// Gradient of `log_likelihood` with respect to `x`.
    fn grad_log_likelihood(&self, y: &Observation, x: &StateVector) -> DVector<f64>;

    /// Draw x_n ~ f_n(. | x_prev).
    fn sample_transition(&self, x_prev: &StateVector, rng: &mut dyn RngCore) -> StateVector;

    /// Draw y_n ~ g_n(. | x).
    fn sample_observation(&self, x: &StateVector, rng: &mut dyn RngCore) -> Observation;

    /// E[X_n | X_{n-1} = x_prev], used for predictive ancestor weights.
    fn transition_mean(&self, x_prev: &StateVector) -> StateVector;

    /// Metric G(x) for the conditional target given `x_prev`.
    fn metric(&self, x: &StateVector, x_prev: &StateVector) -> Result<MetricBundle>;

    /// True when `metric` does not depend on `x` (then the manifold drift is
    /// zero and the classical leapfrog applies).
    fn metric_is_constant(&self) -> bool;

    /// The designated anchor state x_0 whose outgoing transition realizes the
    /// initial prior mu(x_1).
    fn initial_anchor(&self) -> StateVector {
        DVector::zeros(self.dim())
    }

    /// Per-coordinate log-likelihood factors when the likelihood is a product
    /// over coordinates; `None` otherwise. Block SIR requires `Some`.
    fn log_likelihood_factors(&self, _y: &Observation, _x: &StateVector) -> Option<DVector<f64>> {
        None
    }

    /// Redraws the coordinates in `block` from the conditional transition
    /// prior `f(x_block | x_rest, x_prev)`, returning the full state, when
    /// the model supports exact conditional sampling; `None` otherwise.
    fn sample_transition_conditional(
        &self,
        _x: &StateVector,
        _x_prev: &StateVector,
        _block: &[usize],
        _rng: &mut dyn RngCore,
    ) -> Option<StateVector> {
        None
    }
}

fn check_dims(model: &dyn Model, x: &StateVector, x_prev: &StateVector, y: &Observation) -> Result<()> {
    if x.len() != model.dim() || x_prev.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "state vector",
            expected: model.dim(),
            got: if x.len() != model.dim() { x.len() } else { x_prev.len() },
        });
    }
    if y.len() != model.obs_dim() {
        return Err(Error::DimensionMismatch {
            context: "observation",
            expected: model.obs_dim(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Unnormalized log of the conditional filtering target
/// `pi~(x) ∝ g_n(y | x) f_n(x | x_prev)`.
pub fn log_conditional_target(
    model: &dyn Model,
    x: &StateVector,
    x_prev: &StateVector,
    y: &Observation,
) -> Result<f64> {
    check_dims(model, x, x_prev, y)?;
    let lf = Error::check_log_density(model.log_transition(x, x_prev), "log_transition")?;
    let lg = Error::check_log_density(model.log_likelihood(y, x), "log_likelihood")?;
    Ok(lf + lg)
}

/// Gradient of [`log_conditional_target`] with respect to `x`.
///
/// Errors when `x` lies outside the support (where the log-density is -inf).
pub fn grad_log_conditional_target(
    model: &dyn Model,
    x: &StateVector,
    x_prev: &StateVector,
    y: &Observation,
) -> Result<DVector<f64>> {
    check_dims(model, x, x_prev, y)?;
    if log_conditional_target(model, x, x_prev, y)? == f64::NEG_INFINITY {
        return Err(Error::OutsideSupport);
    }
    let grad = model.grad_log_transition(x, x_prev) + model.grad_log_likelihood(y, x);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            term: "grad_log_conditional_target".into(),
            value: grad.iter().cloned().find(|v| !v.is_finite()).unwrap(),
        });
    }
    Ok(grad)
}

/// The conditional target `pi~` for a fixed `(y, x_prev)` pair, packaged for
/// the move kernels. Also implementable by toy targets in tests.
pub trait Target {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &StateVector) -> f64;
    fn grad_log_density(&self, x: &StateVector) -> Result<DVector<f64>>;
    fn metric(&self, x: &StateVector) -> Result<MetricBundle>;
    fn metric_is_constant(&self) -> bool;
}

/// [`Target`] view over `(model, y, x_prev)`.
pub struct ConditionalTarget<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub y: &'a Observation,
    pub x_prev: &'a StateVector,
}

impl<'a, M: Model + ?Sized> ConditionalTarget<'a, M> {
    pub fn new(model: &'a M, y: &'a Observation, x_prev: &'a StateVector) -> Self {
        Self { model, y, x_prev }
    }
}

impl<M: Model + ?Sized> Target for ConditionalTarget<'_, M> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density(&self, x: &StateVector) -> f64 {
        self.model.log_transition(x, self.x_prev) + self.model.log_likelihood(self.y, x)
    }

    fn grad_log_density(&self, x: &StateVector) -> Result<DVector<f64>> {
        if self.log_density(x) == f64::NEG_INFINITY {
            return Err(Error::OutsideSupport);
        }
        Ok(self.model.grad_log_transition(x, self.x_prev)
            + self.model.grad_log_likelihood(self.y, x))
    }

    fn metric(&self, x: &StateVector) -> Result<MetricBundle> {
        self.model.metric(x, self.x_prev)
    }

    fn metric_is_constant(&self) -> bool {
        self.model.metric_is_constant()
    }
}
