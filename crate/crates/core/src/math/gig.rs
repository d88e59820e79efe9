//! Generalized inverse Gaussian sampling.
//!
//! `GIG(lambda, chi, psi)` has density proportional to
//! `x^(lambda-1) exp(-(chi/x + psi x)/2)` on x > 0. The boundary cases reduce
//! to gamma (`chi = 0`) and inverse-gamma (`psi = 0`) draws; the interior case
//! is sampled by rejection in log coordinates, where the density is strictly
//! log-concave with a closed-form mode.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// One draw from GIG(lambda, chi, psi).
pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, rng: &mut R) -> Result<f64> {
    if chi < 0.0 || psi < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "GIG requires chi, psi >= 0, got chi={chi}, psi={psi}"
        )));
    }
    match (chi > 0.0, psi > 0.0) {
        (false, false) => Err(Error::InvalidParameter(
            "GIG requires chi > 0 or psi > 0".into(),
        )),
        (false, true) => {
            // Gamma(lambda, rate psi/2).
            if lambda <= 0.0 {
                return Err(Error::InvalidParameter(
                    "GIG with chi = 0 requires lambda > 0".into(),
                ));
            }
            let g = Gamma::new(lambda, 2.0 / psi)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(g.sample(rng))
        }
        (true, false) => {
            // Inverse gamma: 1 / Gamma(-lambda, rate chi/2).
            if lambda >= 0.0 {
                return Err(Error::InvalidParameter(
                    "GIG with psi = 0 requires lambda < 0".into(),
                ));
            }
            Ok(sample_inverse_gamma(-lambda, chi / 2.0, rng))
        }
        (true, true) => Ok(sample_gig_interior(lambda, chi, psi, rng)),
    }
}

/// InverseGamma(shape, rate): X = rate / Gamma(shape, scale 1).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
    rate / g.sample(rng)
}

/// Rejection sampler for the interior case via t = ln x.
///
/// h(t) = lambda t - (chi/2) e^{-t} - (psi/2) e^t is concave with mode
/// t0 = ln((lambda + sqrt(lambda^2 + chi psi)) / psi). The envelope is flat
/// between the two points where h drops one unit below the mode and decays
/// along the tangents at those points.
fn sample_gig_interior<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, rng: &mut R) -> f64 {
    let h = |t: f64| lambda * t - 0.5 * chi * (-t).exp() - 0.5 * psi * t.exp();
    let dh = |t: f64| lambda + 0.5 * chi * (-t).exp() - 0.5 * psi * t.exp();
    let t0 = ((lambda + (lambda * lambda + chi * psi).sqrt()) / psi).ln();
    let h0 = h(t0);

    // Unit-drop points on each side, found by doubling then bisection.
    let unit_point = |dir: f64| {
        let mut step = 1.0;
        while h(t0 + dir * step) > h0 - 1.0 {
            step *= 2.0;
        }
        let (mut lo, mut hi) = (t0 + dir * step * 0.5, t0 + dir * step);
        if dir < 0.0 {
            std::mem::swap(&mut lo, &mut hi);
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let inside = h(mid) > h0 - 1.0;
            if (dir > 0.0) == inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let tr = unit_point(1.0);
    let tl = unit_point(-1.0);
    let slope_r = -dh(tr); // > 0
    let slope_l = dh(tl); // > 0

    // Envelope masses: flat middle and two exponential tails.
    let m_mid = tr - tl;
    let m_r = (-1.0f64).exp() / slope_r;
    let m_l = (-1.0f64).exp() / slope_l;
    let total = m_mid + m_r + m_l;

    loop {
        let u = rng.random::<f64>() * total;
        let (t, log_env) = if u < m_mid {
            (tl + u, 0.0)
        } else if u < m_mid + m_r {
            let e = rng.random::<f64>();
            let t = tr - e.ln() / slope_r;
            (t, -1.0 - slope_r * (t - tr))
        } else {
            let e = rng.random::<f64>();
            let t = tl + e.ln() / slope_l;
            (t, -1.0 - slope_l * (tl - t))
        };
        let log_accept = h(t) - h0 - log_env;
        if rng.random::<f64>().ln() < log_accept {
            return t.exp();
        }
    }
}
