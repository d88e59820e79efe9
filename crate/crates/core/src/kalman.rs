//! Exact filtering for the linear-Gaussian model.
//!
//! Provides the ground-truth posterior means and covariances the Monte-Carlo
//! filters are measured against. The covariance update uses the
//! Joseph-stabilized form and is re-symmetrized each step, which keeps long
//! horizons at dimensions in the hundreds well conditioned.

use crate::error::{Error, Result};
use crate::hmm::Observation;
use crate::models::gaussian::GaussianModelParams;
use nalgebra::{Cholesky, DMatrix, DVector};

/// Gaussian filtering belief.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    /// The time-0 belief: the anchor state held with certainty, so the first
    /// prediction is exactly the initial prior N(0, Sigma).
    pub fn anchor(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: DMatrix::zeros(d, d),
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    crate::math::spd::symmetrize(m);
}

/// One predict/update step for `x_n = alpha x_{n-1} + w`, `y = x + v` with
/// `w ~ N(0, Sigma)` and `v ~ N(0, sigma_y^2 I)`.
pub fn kalman_step(
    belief: &GaussianBelief,
    y: &Observation,
    params: &GaussianModelParams,
    sigma: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let d = belief.mean.len();
    if y.len() != d || sigma.nrows() != d {
        return Err(Error::DimensionMismatch {
            context: "kalman step",
            expected: d,
            got: if y.len() != d { y.len() } else { sigma.nrows() },
        });
    }

    // Predict.
    let mean_pred = &belief.mean * params.alpha;
    let mut cov_pred = &belief.cov * (params.alpha * params.alpha) + sigma;
    symmetrize(&mut cov_pred);

    // Update: innovation covariance S = P + sigma_y^2 I.
    let mut s = cov_pred.clone();
    for i in 0..d {
        s[(i, i)] += params.sigma_y2;
    }
    let chol = Cholesky::new(s).ok_or_else(|| Error::CholeskyFailed {
        what: "innovation covariance".into(),
    })?;
    // K = P S^-1; S and P are symmetric so K = (S^-1 P)^T.
    let gain = chol.solve(&cov_pred).transpose();

    let innovation = y - &mean_pred;
    let mean = &mean_pred + &gain * &innovation;

    // Joseph form: (I - K) P (I - K)^T + sigma_y^2 K K^T.
    let mut i_minus_k = DMatrix::identity(d, d);
    i_minus_k -= &gain;
    let mut cov = &i_minus_k * &cov_pred * i_minus_k.transpose()
        + &gain * gain.transpose() * params.sigma_y2;
    symmetrize(&mut cov);

    Ok(GaussianBelief { mean, cov })
}

/// Runs the filter over a full observation sequence, starting from the
/// anchor belief; returns the posterior belief at each time step.
pub fn kalman_filter(
    params: &GaussianModelParams,
    sigma: &DMatrix<f64>,
    observations: &[Observation],
) -> Result<Vec<GaussianBelief>> {
    let d = sigma.nrows();
    let mut belief = GaussianBelief::anchor(d);
    let mut out = Vec::with_capacity(observations.len());
    for y in observations {
        belief = kalman_step(&belief, y, params, sigma)?;
        out.push(belief.clone());
    }
    Ok(out)
}
