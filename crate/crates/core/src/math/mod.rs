//! Numerical building blocks: special functions, samplers and linear algebra
//! helpers shared by the models and kernels.

pub mod besselk;
pub mod gig;
pub mod spd;
pub mod stats;

use nalgebra::DVector;

/// Central finite-difference gradient with the crate-wide validation step.
///
/// This is the single gradient oracle used by every analytic-gradient check:
/// central differences with step `1e-5`.
pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x` with step `h`.
pub fn finite_difference_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error with an absolute floor near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}
