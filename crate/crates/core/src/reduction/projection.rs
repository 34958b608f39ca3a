//! Mahalanobis projection onto the box `[0, 1]^dim`.
//!
//! Solves `min (u - u0)ᵀ Q (u - u0)` subject to `0 ≤ u ≤ 1`, where `Q` is the
//! pseudo-inverse of the estimate covariance. Projected gradient with an exact
//! line search along the projected step; iterates never leave the box.

use nalgebra::{DMatrix, DVector};

use super::pinv::{pseudo_inverse, DEFAULT_RTOL};
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-8;

fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Box projection in a fixed metric, reusable across many points.
#[derive(Debug, Clone)]
pub struct BoxProjector {
    metric: DMatrix<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl BoxProjector {
    pub fn new(estimate_cov: &DMatrix<f64>) -> Self {
        Self::with_metric(pseudo_inverse(estimate_cov, DEFAULT_RTOL))
    }

    /// Uses `metric` directly as `Q`.
    pub fn with_metric(metric: DMatrix<f64>) -> Self {
        Self {
            metric,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_KKT_TOLERANCE,
        }
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Infinity norm of `u - clamp(u - ∇)`, zero exactly at a KKT point.
    pub fn kkt_residual(&self, u: &DVector<f64>, u0: &DVector<f64>) -> f64 {
        let g = &self.metric * (u - u0);
        u.iter()
            .zip(g.iter())
            .map(|(&ui, &gi)| (ui - clamp_unit(ui - gi)).abs())
            .fold(0.0, f64::max)
    }

    pub fn project(&self, u0: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("box projection point", self.metric.nrows(), u0.len())?;
        let q = &self.metric;
        let mut u = u0.map(clamp_unit);
        let mut residual = f64::INFINITY;
        for _ in 0..=self.max_iterations {
            let g = q * (&u - u0);
            residual = u
                .iter()
                .zip(g.iter())
                .map(|(&ui, &gi)| (ui - clamp_unit(ui - gi)).abs())
                .fold(0.0, f64::max);
            if residual <= self.tolerance {
                return Ok(u);
            }

            // Cauchy step length for the free coordinates, then project.
            let free = DVector::from_iterator(
                g.len(),
                u.iter().zip(g.iter()).map(|(&ui, &gi)| {
                    if (ui <= 0.0 && gi > 0.0) || (ui >= 1.0 && gi < 0.0) {
                        0.0
                    } else {
                        gi
                    }
                }),
            );
            let curvature = free.dot(&(q * &free));
            let alpha = if curvature > 0.0 {
                free.norm_squared() / curvature
            } else {
                1.0
            };
            let trial = (&u - &g * alpha).map(clamp_unit);
            let d = trial - &u;

            // exact minimization of the quadratic along u + s d, s in [0, 1]
            let qd = q * &d;
            let dqd = d.dot(&qd);
            let slope = g.dot(&d);
            let s = if dqd > 0.0 {
                (-slope / dqd).clamp(0.0, 1.0)
            } else {
                1.0
            };
            if s == 0.0 {
                break;
            }
            u.axpy(s, &d, 1.0);
            u.apply(|v| *v = clamp_unit(*v));
        }
        Err(Error::NonConvergence {
            iterations: self.max_iterations,
            residual,
        })
    }
}

/// Projects `u0` onto `[0, 1]^dim` in the Mahalanobis metric of `estimate_cov`.
pub fn project_box(u0: &DVector<f64>, estimate_cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_dim("box projection covariance", estimate_cov.nrows(), u0.len())?;
    BoxProjector::new(estimate_cov).project(u0)
}
