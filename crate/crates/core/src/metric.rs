//! Position-dependent metric tensors for manifold kernels.
//!
//! A [`MetricBundle`] carries the metric `G(x)` with its factorization plus
//! whatever is known about the partial derivatives `dG/dx(i)`. The derivative
//! representation is kept structural: the Poisson-count model's metric has
//! single-entry diagonal derivatives, and exploiting that turns the manifold
//! drift and trace terms from O(d^4) into O(d^2).

use crate::error::Result;
use crate::math::spd::SpdMatrix;
use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

/// Partial derivatives of the metric with respect to each state coordinate.
#[derive(Debug, Clone)]
pub enum MetricDerivatives {
    /// Constant metric: every dG/dx(i) is zero.
    Constant,
    /// General dense derivative matrices, one per coordinate.
    Dense(Vec<DMatrix<f64>>),
    /// dG/dx(i) = c_i e_i e_i^T: a single nonzero entry c_i at (i, i).
    DiagonalRankOne(DVector<f64>),
}

/// Metric `G(x)`, its Cholesky factor, inverse, log-determinant and
/// derivative structure.
#[derive(Debug)]
pub struct MetricBundle {
    g: SpdMatrix,
    // Computed on first use: the implicit position updates of the
    // generalized leapfrog only ever solve against G.
    g_inv: OnceLock<DMatrix<f64>>,
    derivatives: MetricDerivatives,
}

impl Clone for MetricBundle {
    fn clone(&self) -> Self {
        let g_inv = OnceLock::new();
        if let Some(inv) = self.g_inv.get() {
            let _ = g_inv.set(inv.clone());
        }
        Self {
            g: self.g.clone(),
            g_inv,
            derivatives: self.derivatives.clone(),
        }
    }
}

impl MetricBundle {
    pub fn new(g: DMatrix<f64>, derivatives: MetricDerivatives, what: &str) -> Result<Self> {
        let g = SpdMatrix::new(g, what)?;
        Ok(Self {
            g,
            g_inv: OnceLock::new(),
            derivatives,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn g(&self) -> &SpdMatrix {
        &self.g
    }

    pub fn g_matrix(&self) -> &DMatrix<f64> {
        self.g.matrix()
    }

    pub fn g_inv(&self) -> &DMatrix<f64> {
        self.g_inv.get_or_init(|| self.g.inverse())
    }

    pub fn log_det(&self) -> f64 {
        self.g.log_det()
    }

    pub fn derivatives(&self) -> &MetricDerivatives {
        &self.derivatives
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.derivatives, MetricDerivatives::Constant)
    }

    /// dG/dx(i) as a dense matrix (zero when constant). Diagnostic use only;
    /// the kernels go through the structured accessors below.
    pub fn derivative_matrix(&self, i: usize) -> DMatrix<f64> {
        let d = self.dim();
        match &self.derivatives {
            MetricDerivatives::Constant => DMatrix::zeros(d, d),
            MetricDerivatives::Dense(ms) => ms[i].clone(),
            MetricDerivatives::DiagonalRankOne(c) => {
                let mut m = DMatrix::zeros(d, d);
                m[(i, i)] = c[i];
                m
            }
        }
    }

    /// Manifold Langevin drift
    /// `Lambda_i = -sum_j [G^-1 (dG/dx(j)) G^-1]_{ij}`.
    pub fn langevin_drift(&self) -> DVector<f64> {
        let d = self.dim();
        match &self.derivatives {
            MetricDerivatives::Constant => DVector::zeros(d),
            MetricDerivatives::Dense(ms) => {
                let g_inv = self.g_inv();
                let mut drift = DVector::zeros(d);
                for (j, dg) in ms.iter().enumerate() {
                    let col = g_inv * (dg * g_inv.column(j));
                    drift -= col;
                }
                drift
            }
            MetricDerivatives::DiagonalRankOne(c) => {
                // [G^-1 c_j e_j e_j^T G^-1]_{ij} = c_j G^-1[i,j] G^-1[j,j]
                let g_inv = self.g_inv();
                let mut drift = DVector::zeros(d);
                for j in 0..d {
                    let scale = c[j] * g_inv[(j, j)];
                    for i in 0..d {
                        drift[i] -= scale * g_inv[(i, j)];
                    }
                }
                drift
            }
        }
    }

    /// Trace terms `Tr(G^-1 dG/dx(i))` for all i.
    pub fn trace_g_inv_dg(&self) -> DVector<f64> {
        let d = self.dim();
        match &self.derivatives {
            MetricDerivatives::Constant => DVector::zeros(d),
            MetricDerivatives::Dense(ms) => {
                let g_inv = self.g_inv();
                DVector::from_fn(d, |i, _| {
                    let mut tr = 0.0;
                    for r in 0..d {
                        for s in 0..d {
                            tr += g_inv[(r, s)] * ms[i][(s, r)];
                        }
                    }
                    tr
                })
            }
            MetricDerivatives::DiagonalRankOne(c) => {
                let g_inv = self.g_inv();
                DVector::from_fn(d, |i, _| c[i] * g_inv[(i, i)])
            }
        }
    }

    /// Quadratic terms `v^T dG/dx(i) v` for all i, with `v = G^-1 q`.
    pub fn quad_dg(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        match &self.derivatives {
            MetricDerivatives::Constant => DVector::zeros(d),
            MetricDerivatives::Dense(ms) => {
                DVector::from_fn(d, |i, _| (&ms[i] * v).dot(v))
            }
            MetricDerivatives::DiagonalRankOne(c) => {
                DVector::from_fn(d, |i, _| c[i] * v[i] * v[i])
            }
        }
    }
}
