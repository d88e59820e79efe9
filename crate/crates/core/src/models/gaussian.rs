//! Linear-Gaussian spatial field with Gaussian sensor noise.
//!
//! Transition `N(alpha x_prev, Sigma)` with the squared-exponential
//! dispersion over the sensor grid, likelihood `N(x, sigma_y^2 I)`. The
//! metric `G = Sigma_y^-1 + Sigma^-1` is constant, so the manifold drift
//! vanishes and the simplified and full manifold proposals coincide.

use crate::error::{Error, Result};
use crate::hmm::{Model, Observation, StateVector};
use crate::math::spd::SpdMatrix;
use crate::metric::{MetricBundle, MetricDerivatives};
use crate::models::SensorGrid;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy)]
pub struct GaussianModelParams {
    /// AR coefficient of the field dynamics.
    pub alpha: f64,
    /// Observation noise variance.
    pub sigma_y2: f64,
    /// Dispersion amplitude.
    pub alpha0: f64,
    /// Diagonal nugget (keeps the dispersion positive-definite).
    pub alpha1: f64,
    /// Squared-distance length scale.
    pub beta: f64,
}

impl GaussianModelParams {
    /// The parameter set used throughout the spatial-field experiments.
    pub fn field_defaults() -> Self {
        Self {
            alpha: 0.9,
            sigma_y2: 2.0,
            alpha0: 3.0,
            alpha1: 0.01,
            beta: 20.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sigma_y2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma_y2 must be positive, got {}",
                self.sigma_y2
            )));
        }
        if self.alpha0 <= 0.0 || self.alpha1 <= 0.0 || self.beta <= 0.0 {
            return Err(Error::InvalidParameter(
                "dispersion parameters alpha0, alpha1, beta must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dispersion matrix
/// `Sigma_ij = alpha0 exp(-||S_i - S_j||^2 / beta) + alpha1 delta_ij`,
/// returned with its Cholesky factor.
pub fn build_dispersion(
    grid: &SensorGrid,
    alpha0: f64,
    alpha1: f64,
    beta: f64,
) -> Result<SpdMatrix> {
    if alpha0 <= 0.0 || alpha1 <= 0.0 || beta <= 0.0 {
        return Err(Error::InvalidParameter(
            "dispersion parameters must be positive".into(),
        ));
    }
    let d = grid.len();
    let mut sigma = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = alpha0 * (-grid.squared_distance(i, j) / beta).exp();
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
        sigma[(i, i)] += alpha1;
    }
    SpdMatrix::with_jitter(sigma, "dispersion matrix")
}

/// Linear-Gaussian sensor-field model.
pub struct GaussianModel {
    params: GaussianModelParams,
    sigma: SpdMatrix,
    /// Transition precision, used for exact conditional block draws.
    sigma_inv: DMatrix<f64>,
    metric: MetricBundle,
    d: usize,
}

impl GaussianModel {
    pub fn new(params: GaussianModelParams, grid: &SensorGrid) -> Result<Self> {
        params.validate()?;
        let sigma = build_dispersion(grid, params.alpha0, params.alpha1, params.beta)?;
        Self::with_dispersion(params, sigma)
    }

    /// Builds from an explicit dispersion matrix (tests and degenerate
    /// layouts).
    pub fn with_dispersion(params: GaussianModelParams, sigma: SpdMatrix) -> Result<Self> {
        params.validate()?;
        let d = sigma.dim();
        let sigma_inv = sigma.inverse();
        let mut g = sigma_inv.clone();
        for i in 0..d {
            g[(i, i)] += 1.0 / params.sigma_y2;
        }
        let metric = MetricBundle::new(g, MetricDerivatives::Constant, "gaussian model metric")?;
        Ok(Self {
            params,
            sigma,
            sigma_inv,
            metric,
            d,
        })
    }

    pub fn params(&self) -> &GaussianModelParams {
        &self.params
    }

    pub fn sigma(&self) -> &SpdMatrix {
        &self.sigma
    }
}

impl Model for GaussianModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_transition(&self, x: &StateVector, x_prev: &StateVector) -> f64 {
        let mean = x_prev * self.params.alpha;
        self.sigma.log_density_covariance(x, &mean)
    }

    fn log_likelihood(&self, y: &Observation, x: &StateVector) -> f64 {
        let d = self.d as f64;
        let ln_norm = -0.5 * d * (2.0 * std::f64::consts::PI * self.params.sigma_y2).ln();
        ln_norm - (y - x).norm_squared() / (2.0 * self.params.sigma_y2)
    }

    fn grad_log_transition(&self, x: &StateVector, x_prev: &StateVector) -> DVector<f64> {
        let r = x - x_prev * self.params.alpha;
        -self.sigma.solve(&r)
    }

    fn grad_log_likelihood(&self, y: &Observation, x: &StateVector) -> DVector<f64> {
        (y - x) / self.params.sigma_y2
    }

    fn sample_transition(&self, x_prev: &StateVector, rng: &mut dyn RngCore) -> StateVector {
        let mean = x_prev * self.params.alpha;
        self.sigma.sample_covariance(&mean, &mut &mut *rng)
    }

    fn sample_observation(&self, x: &StateVector, rng: &mut dyn RngCore) -> Observation {
        let sd = self.params.sigma_y2.sqrt();
        let rng = &mut *rng;
        DVector::from_fn(self.d, |i, _| x[i] + sd * rng.sample::<f64, _>(StandardNormal))
    }

    fn transition_mean(&self, x_prev: &StateVector) -> StateVector {
        x_prev * self.params.alpha
    }

    fn metric(&self, _x: &StateVector, _x_prev: &StateVector) -> Result<MetricBundle> {
        Ok(self.metric.clone())
    }

    fn metric_is_constant(&self) -> bool {
        true
    }

    fn log_likelihood_factors(&self, y: &Observation, x: &StateVector) -> Option<DVector<f64>> {
        let ln_norm = -0.5 * (2.0 * std::f64::consts::PI * self.params.sigma_y2).ln();
        Some(DVector::from_fn(self.d, |i, _| {
            ln_norm - (y[i] - x[i]).powi(2) / (2.0 * self.params.sigma_y2)
        }))
    }

    /// Exact conditional draw in precision form: with Q = Sigma^-1,
    /// `x_B | x_rest ~ N(mu_B - Q_BB^-1 Q_{B,rest} (x_rest - mu_rest), Q_BB^-1)`.
    fn sample_transition_conditional(
        &self,
        x: &StateVector,
        x_prev: &StateVector,
        block: &[usize],
        rng: &mut dyn RngCore,
    ) -> Option<StateVector> {
        use rand_distr::StandardNormal;
        let p = block.len();
        let mu = x_prev * self.params.alpha;
        let r = x - &mu;
        // Q_{B,:} r and Q_BB.
        let mut w = DVector::zeros(p);
        let mut q_bb = DMatrix::zeros(p, p);
        for (a, &i) in block.iter().enumerate() {
            let mut s = 0.0;
            for j in 0..self.d {
                s += self.sigma_inv[(i, j)] * r[j];
            }
            w[a] = s;
            for (b, &j) in block.iter().enumerate() {
                q_bb[(a, b)] = self.sigma_inv[(i, j)];
            }
        }
        // Remove the block's own contribution: Q_{B,rest} r_rest = w - Q_BB r_B.
        let r_b = DVector::from_fn(p, |a, _| r[block[a]]);
        let rhs = &w - &q_bb * &r_b;
        let chol = nalgebra::Cholesky::new(q_bb)?;
        let cond_mean_offset = chol.solve(&rhs);
        // Draw with precision Q_BB: z solved through L^T.
        let rng = &mut *rng;
        let mut z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        chol.l().tr_solve_lower_triangular_mut(&mut z);
        let mut out = x.clone();
        for (a, &i) in block.iter().enumerate() {
            out[i] = mu[i] - cond_mean_offset[a] + z[a];
        }
        Some(out)
    }
}
