//! Symmetric positive-definite matrices with a cached Cholesky factor.
//!
//! A single wrapper serves both covariance-form use (sampling `m + L z`,
//! densities via triangular solves) and precision-form use (sampling
//! `m + L^-T z`), so callers that must agree bitwise share one code path.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;

/// An SPD matrix together with its lower Cholesky factor and log-determinant.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    log_det: f64,
}

impl SpdMatrix {
    /// Factorizes `matrix`; fails if it is not numerically SPD.
    pub fn new(matrix: DMatrix<f64>, what: &str) -> Result<Self> {
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| Error::CholeskyFailed {
            what: what.to_string(),
        })?;
        let lower = chol.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            matrix,
            chol,
            lower,
            log_det,
        })
    }

    /// Factorizes with diagonal jitter escalation: on failure adds
    /// `1e-10 * trace / d` to the diagonal, escalating tenfold up to three
    /// times before giving up.
    pub fn with_jitter(matrix: DMatrix<f64>, what: &str) -> Result<Self> {
        match Self::new(matrix.clone(), what) {
            Ok(s) => Ok(s),
            Err(_) => {
                let d = matrix.nrows();
                let mut jitter = 1e-10 * matrix.trace() / d as f64;
                for _ in 0..3 {
                    let mut m = matrix.clone();
                    for i in 0..d {
                        m[(i, i)] += jitter;
                    }
                    if let Ok(s) = Self::new(m, what) {
                        return Ok(s);
                    }
                    jitter *= 10.0;
                }
                Err(Error::CholeskyFailed {
                    what: format!("{what} (after jitter escalation)"),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solves `A X = B` column-wise.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Dense inverse.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Quadratic form `v^T A v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        // v^T A v = |L^T v|^2
        let u = self.lower.tr_mul(v);
        u.norm_squared()
    }

    /// Quadratic form in the inverse, `v^T A^-1 v`, via one triangular solve.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> f64 {
        let mut u = v.clone();
        self.lower.solve_lower_triangular_mut(&mut u);
        u.norm_squared()
    }

    /// A standard-normal vector of matching dimension.
    fn standard_normal<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal))
    }

    /// Draw from N(mean, A), treating the matrix as a covariance.
    pub fn sample_covariance<R: Rng + ?Sized>(
        &self,
        mean: &DVector<f64>,
        rng: &mut R,
    ) -> DVector<f64> {
        mean + &self.lower * self.standard_normal(rng)
    }

    /// log N(x; mean, A), treating the matrix as a covariance.
    pub fn log_density_covariance(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let r = x - mean;
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + self.inv_quad_form(&r))
    }

    /// Draw from N(mean, A^-1), treating the matrix as a precision.
    pub fn sample_precision<R: Rng + ?Sized>(
        &self,
        mean: &DVector<f64>,
        rng: &mut R,
    ) -> DVector<f64> {
        let mut z = self.standard_normal(rng);
        // Cov(L^-T z) = (L L^T)^-1 = A^-1.
        self.lower.tr_solve_lower_triangular_mut(&mut z);
        mean + z
    }

    /// log N(x; mean, A^-1), treating the matrix as a precision.
    pub fn log_density_precision(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let r = x - mean;
        -0.5 * (self.dim() as f64 * LN_2PI - self.log_det + self.quad_form(&r))
    }
}

/// Symmetrizes in place via (A + A^T) / 2.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
