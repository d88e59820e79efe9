//! Skewed-t field dynamics observed through per-sensor Poisson counts.
//!
//! Likelihood `prod_k Po(y(k); m1 exp(m2 x(k)))`. The prior is not
//! log-concave, so the metric replaces its Hessian with the inverse of the
//! exact prior covariance (Gaussian-approximation metric):
//! `G(x) = Lambda(x) + SigmaTilde^-1` with
//! `Lambda_kk(x) = m1 m2^2 exp(m2 x(k))`. The metric derivatives are
//! single-entry diagonal matrices with `m1 m2^3 exp(m2 x(i))` at `(i, i)`.

use crate::error::{Error, Result};
use crate::hmm::{Model, Observation, StateVector};
use crate::math::spd::SpdMatrix;
use crate::metric::{MetricBundle, MetricDerivatives};
use crate::models::gh::{
    gh_logpdf, grad_gh_logpdf, sample_gh, skewed_t_covariance, skewed_t_mean_shift, GHParams,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::Poisson;
use statrs::function::gamma::ln_gamma;

/// Counts whose Poisson mean exceeds this are treated as an overflow error.
const MEAN_OVERFLOW: f64 = 1e12;

#[derive(Debug, Clone, Copy)]
pub struct PoissonObsParams {
    pub m1: f64,
    pub m2: f64,
}

impl PoissonObsParams {
    /// Count-sensor parameters used in the experiments: mean exp(x/3).
    pub fn field_defaults() -> Self {
        Self { m1: 1.0, m2: 1.0 / 3.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.m1 <= 0.0 || self.m2 == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Poisson observation needs m1 > 0 and m2 != 0, got m1={}, m2={}",
                self.m1, self.m2
            )));
        }
        Ok(())
    }
}

/// GH skewed-t dynamics with Poisson count observations.
pub struct GhPoissonModel {
    gh: GHParams,
    obs: PoissonObsParams,
    sigma_tilde_inv: DMatrix<f64>,
    mean_shift: DVector<f64>,
    d: usize,
}

impl GhPoissonModel {
    /// Requires the skewed-t regime with nu > 4 so the prior covariance (and
    /// with it the metric) exists.
    pub fn new(gh: GHParams, obs: PoissonObsParams) -> Result<Self> {
        obs.validate()?;
        let cov = skewed_t_covariance(&gh)?;
        let mean_shift = skewed_t_mean_shift(&gh)?;
        let sigma_tilde = SpdMatrix::new(cov, "skewed-t covariance")?;
        let sigma_tilde_inv = sigma_tilde.inverse();
        let d = gh.dim();
        Ok(Self {
            gh,
            obs,
            sigma_tilde_inv,
            mean_shift,
            d,
        })
    }

    pub fn gh(&self) -> &GHParams {
        &self.gh
    }

    pub fn obs_params(&self) -> &PoissonObsParams {
        &self.obs
    }

    fn location(&self, x_prev: &StateVector) -> StateVector {
        x_prev * self.gh.alpha
    }

    /// Fisher information of one count sensor at x(k).
    fn lambda_kk(&self, xk: f64) -> f64 {
        self.obs.m1 * self.obs.m2 * self.obs.m2 * (self.obs.m2 * xk).exp()
    }
}

impl Model for GhPoissonModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_transition(&self, x: &StateVector, x_prev: &StateVector) -> f64 {
        gh_logpdf(x, &self.location(x_prev), &self.gh).unwrap_or(f64::NAN)
    }

    /// NaN signals a mean overflow; the `Result` wrappers upstream convert it
    /// into an error naming the term.
    fn log_likelihood(&self, y: &Observation, x: &StateVector) -> f64 {
        let mut total = 0.0;
        for k in 0..self.d {
            if y[k] < 0.0 {
                return f64::NEG_INFINITY;
            }
            let mean = self.obs.m1 * (self.obs.m2 * x[k]).exp();
            if mean.is_nan() || mean > MEAN_OVERFLOW {
                return f64::NAN;
            }
            total += y[k] * (self.obs.m1.ln() + self.obs.m2 * x[k]) - mean - ln_gamma(y[k] + 1.0);
        }
        total
    }

    fn grad_log_transition(&self, x: &StateVector, x_prev: &StateVector) -> DVector<f64> {
        grad_gh_logpdf(x, &self.location(x_prev), &self.gh)
            .unwrap_or_else(|_| DVector::from_element(self.d, f64::NAN))
    }

    fn grad_log_likelihood(&self, y: &Observation, x: &StateVector) -> DVector<f64> {
        DVector::from_fn(self.d, |k, _| {
            self.obs.m2 * (y[k] - self.obs.m1 * (self.obs.m2 * x[k]).exp())
        })
    }

    fn sample_transition(&self, x_prev: &StateVector, rng: &mut dyn RngCore) -> StateVector {
        sample_gh(&self.location(x_prev), &self.gh, rng)
    }

    fn sample_observation(&self, x: &StateVector, rng: &mut dyn RngCore) -> Observation {
        let rng = &mut *rng;
        DVector::from_fn(self.d, |k, _| {
            let mean = self.obs.m1 * (self.obs.m2 * x[k]).exp();
            let po = Poisson::new(mean).expect("positive Poisson mean");
            rng.sample::<f64, _>(po)
        })
    }

    fn transition_mean(&self, x_prev: &StateVector) -> StateVector {
        self.location(x_prev) + &self.mean_shift
    }

    fn metric(&self, x: &StateVector, _x_prev: &StateVector) -> Result<MetricBundle> {
        let mut g = self.sigma_tilde_inv.clone();
        let mut dg = DVector::zeros(self.d);
        for k in 0..self.d {
            let lam = self.lambda_kk(x[k]);
            if !lam.is_finite() {
                return Err(Error::NonFinite {
                    term: format!("metric Lambda[{k}]"),
                    value: lam,
                });
            }
            g[(k, k)] += lam;
            dg[k] = self.obs.m2 * lam;
        }
        MetricBundle::new(g, MetricDerivatives::DiagonalRankOne(dg), "count-model metric")
    }

    fn metric_is_constant(&self) -> bool {
        false
    }

    fn log_likelihood_factors(&self, y: &Observation, x: &StateVector) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.d, |k, _| {
            if y[k] < 0.0 {
                return f64::NEG_INFINITY;
            }
            let mean = self.obs.m1 * (self.obs.m2 * x[k]).exp();
            y[k] * (self.obs.m1.ln() + self.obs.m2 * x[k]) - mean - ln_gamma(y[k] + 1.0)
        }))
    }
}
