//! Multivariate generalized hyperbolic (GH) distribution.
//!
//! Parametrized by `(lambda, chi, psi)`, skewness `gamma`, dispersion `Sigma`
//! and the AR location coefficient `alpha` (the location at time n is
//! `alpha * x_prev`). The skewed-t subfamily `lambda = -nu/2, chi = nu,
//! psi -> 0` is the workhorse: below `PSI_LIMIT` the exact limiting density
//! is evaluated instead of the degenerate general form.
//!
//! All Bessel evaluations run in log scale ([`crate::math::besselk`]);
//! sampling goes through the normal mean-variance mixture
//! `X = mu + gamma W + sqrt(W) L Z` with `W ~ GIG(lambda, chi, psi)`.

use crate::error::{Error, Result};
use crate::hmm::StateVector;
use crate::math::besselk::{log_bessel_k, log_bessel_k_with_dz};
use crate::math::gig::sample_gig;
use crate::math::spd::SpdMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

/// Below this `psi` the skewed-t limit branch is used.
pub const PSI_LIMIT: f64 = 1e-12;

/// Skewness magnitudes below this are treated as symmetric (the Bessel
/// argument degenerates as `gamma -> 0`).
const GAMMA_LIMIT: f64 = 1e-14;

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.1447298858494002;

#[derive(Debug, Clone)]
pub struct GHParams {
    pub lambda: f64,
    pub chi: f64,
    pub psi: f64,
    pub gamma: DVector<f64>,
    pub sigma: SpdMatrix,
    /// Location coefficient: mu_n = alpha * x_{n-1}.
    pub alpha: f64,
    // Cached: Sigma^-1 gamma and gamma^T Sigma^-1 gamma.
    sigma_inv_gamma: DVector<f64>,
    c_gamma: f64,
}

impl GHParams {
    pub fn new(
        lambda: f64,
        chi: f64,
        psi: f64,
        gamma: DVector<f64>,
        sigma: SpdMatrix,
        alpha: f64,
    ) -> Result<Self> {
        if chi <= 0.0 || psi < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "GH requires chi > 0 and psi >= 0, got chi={chi}, psi={psi}"
            )));
        }
        if gamma.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                context: "GH skewness vector",
                expected: sigma.dim(),
                got: gamma.len(),
            });
        }
        if psi < PSI_LIMIT && (lambda + chi / 2.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "psi -> 0 limit implemented for the skewed-t tie lambda = -chi/2; \
                 got lambda={lambda}, chi={chi}"
            )));
        }
        let sigma_inv_gamma = sigma.solve(&gamma);
        let c_gamma = gamma.dot(&sigma_inv_gamma);
        Ok(Self {
            lambda,
            chi,
            psi,
            gamma,
            sigma,
            alpha,
            sigma_inv_gamma,
            c_gamma,
        })
    }

    /// Skewed-t parameters: `lambda = -nu/2, chi = nu, psi = 0`.
    pub fn skewed_t(nu: f64, gamma: DVector<f64>, sigma: SpdMatrix, alpha: f64) -> Result<Self> {
        if nu <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "skewed-t requires nu > 0, got {nu}"
            )));
        }
        Self::new(-nu / 2.0, nu, 0.0, gamma, sigma, alpha)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Degrees of freedom when in the skewed-t regime.
    pub fn nu(&self) -> Option<f64> {
        (self.psi < PSI_LIMIT).then_some(self.chi)
    }

    fn is_symmetric(&self) -> bool {
        self.c_gamma < GAMMA_LIMIT
    }
}

/// Normalized log-density of GH(x; mu, p).
pub fn gh_logpdf(x: &StateVector, mu: &StateVector, p: &GHParams) -> Result<f64> {
    let d = p.dim() as f64;
    let r = x - mu;
    let q = p.sigma.inv_quad_form(&r);

    if let Some(nu) = p.nu() {
        // Skewed-t limit.
        if p.is_symmetric() {
            // Multivariate Student-t.
            let l = ln_gamma((nu + d) / 2.0)
                - ln_gamma(nu / 2.0)
                - 0.5 * d * (nu * std::f64::consts::PI).ln()
                - 0.5 * p.sigma.log_det()
                - 0.5 * (nu + d) * (q / nu).ln_1p();
            return Ok(l);
        }
        let eta = (nu + d) / 2.0;
        let z = ((nu + q) * p.c_gamma).sqrt();
        let lk = log_bessel_k(eta, z)?;
        let ln_const = (1.0 - eta) * LN_2
            - ln_gamma(nu / 2.0)
            - 0.5 * d * (LN_PI + nu.ln())
            - 0.5 * p.sigma.log_det();
        Ok(ln_const + lk + r.dot(&p.sigma_inv_gamma) + eta * z.ln()
            - eta * (q / nu).ln_1p())
    } else {
        // General GH with psi > 0.
        let eta = p.lambda - d / 2.0;
        let omega = (p.chi * p.psi).sqrt();
        let c = p.psi + p.c_gamma;
        let z = ((p.chi + q) * c).sqrt();
        let lk = log_bessel_k(eta, z)?;
        let lk_omega = log_bessel_k(p.lambda, omega)?;
        let ln_const = -p.lambda * 0.5 * (p.chi * p.psi).ln() + p.lambda * p.psi.ln()
            + (d / 2.0 - p.lambda) * c.ln()
            - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * p.sigma.log_det()
            - lk_omega;
        Ok(ln_const + lk + r.dot(&p.sigma_inv_gamma) - (d / 2.0 - p.lambda) * z.ln())
    }
}

/// Gradient of [`gh_logpdf`] with respect to `x`.
///
/// Uses `d/dz log K_eta(z) = -(K_{eta-1}(z) + K_{eta+1}(z)) / (2 K_eta(z))`
/// evaluated in log scale.
pub fn grad_gh_logpdf(x: &StateVector, mu: &StateVector, p: &GHParams) -> Result<DVector<f64>> {
    let d = p.dim() as f64;
    let r = x - mu;
    let sig_inv_r = p.sigma.solve(&r);
    let q = r.dot(&sig_inv_r);

    if let Some(nu) = p.nu() {
        if p.is_symmetric() {
            return Ok(&sig_inv_r * (-(nu + d) / (nu + q)));
        }
        let eta = (nu + d) / 2.0;
        let z = ((nu + q) * p.c_gamma).sqrt();
        let (_, dlogk) = log_bessel_k_with_dz(eta, z)?;
        let radial = (dlogk + eta / z) * (p.c_gamma / z) - (nu + d) / (nu + q);
        Ok(&sig_inv_r * radial + &p.sigma_inv_gamma)
    } else {
        let eta = p.lambda - d / 2.0;
        let c = p.psi + p.c_gamma;
        let z = ((p.chi + q) * c).sqrt();
        let (_, dlogk) = log_bessel_k_with_dz(eta, z)?;
        let radial = (dlogk - (d / 2.0 - p.lambda) / z) * (c / z);
        Ok(&sig_inv_r * radial + &p.sigma_inv_gamma)
    }
}

/// One draw via the normal mean-variance mixture representation.
pub fn sample_gh(mu: &StateVector, p: &GHParams, rng: &mut dyn RngCore) -> StateVector {
    let rng = &mut *rng;
    let w = sample_gig(p.lambda, p.chi, p.psi, rng)
        .expect("GH parameters validated at construction");
    let z = DVector::from_fn(p.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mu + &p.gamma * w + p.sigma.lower() * z * w.sqrt()
}

/// Covariance of the skewed-t subfamily (valid for nu > 4):
/// `nu/(nu-2) Sigma + nu^2 / ((2nu - 8)(nu/2 - 1)^2) gamma gamma^T`.
pub fn skewed_t_covariance(p: &GHParams) -> Result<DMatrix<f64>> {
    let nu = p.nu().ok_or_else(|| {
        Error::InvalidParameter("skewed_t_covariance requires the psi -> 0 regime".into())
    })?;
    if nu <= 4.0 {
        return Err(Error::InvalidParameter(format!(
            "skewed-t covariance requires nu > 4, got {nu}"
        )));
    }
    let mix_mean = nu / (nu - 2.0);
    let mix_var = nu * nu / ((2.0 * nu - 8.0) * (nu / 2.0 - 1.0).powi(2));
    let mut cov = p.sigma.matrix() * mix_mean;
    cov += &p.gamma * p.gamma.transpose() * mix_var;
    Ok(cov)
}

/// Mean shift of the skewed-t: `E[X] - mu = gamma nu / (nu - 2)`.
pub fn skewed_t_mean_shift(p: &GHParams) -> Result<DVector<f64>> {
    let nu = p.nu().ok_or_else(|| {
        Error::InvalidParameter("mean shift requires the psi -> 0 regime".into())
    })?;
    if nu <= 2.0 {
        return Err(Error::InvalidParameter(format!(
            "skewed-t mean requires nu > 2, got {nu}"
        )));
    }
    Ok(&p.gamma * (nu / (nu - 2.0)))
}
