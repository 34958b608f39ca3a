//! Sparsity-based denoising by per-component significance tests.
//!
//! The linear estimate is expanded in an orthogonal basis and each component
//! whose magnitude does not exceed `t(τ)` standard deviations is set to zero,
//! with `t(τ) = Φ⁻¹((1 + τ) / 2)`. At `τ = 0` nothing is suppressed.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dim, Error, Result};

/// Orthogonal basis; row `i` is the `i`-th basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityBasis {
    b: DMatrix<f64>,
}

impl SparsityBasis {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::InvalidParameter {
                name: "basis",
                reason: format!("expected a square matrix, got {}x{}", b.nrows(), b.ncols()),
            });
        }
        let defect = (&b * b.transpose() - DMatrix::identity(b.nrows(), b.nrows())).amax();
        if defect > 1e-10 {
            return Err(Error::InvalidParameter {
                name: "basis",
                reason: format!("not orthogonal (max |B Bᵀ - I| = {defect:e})"),
            });
        }
        Ok(Self { b })
    }

    /// Canonical basis.
    pub fn pixel(dim: usize) -> Self {
        Self {
            b: DMatrix::identity(dim, dim),
        }
    }

    /// Separable 2-D Haar basis on a `width x height` row-major grid.
    ///
    /// Uses the unbalanced Haar construction, which is orthonormal for any
    /// side length and coincides with the ordinary Haar basis when the side
    /// is a power of two.
    pub fn haar(width: usize, height: usize) -> Self {
        let bx = haar_1d(width);
        let by = haar_1d(height);
        Self {
            b: by.kronecker(&bx),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
}

/// Orthonormal unbalanced Haar basis of length `len`, coarse to fine.
pub fn haar_1d(len: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(len, len);
    if len == 0 {
        return b;
    }
    b.row_mut(0).fill(1.0 / (len as f64).sqrt());
    let mut row = 1;
    let mut segments = std::collections::VecDeque::from([(0usize, len)]);
    while let Some((start, n)) = segments.pop_front() {
        if n < 2 {
            continue;
        }
        let left = n.div_ceil(2);
        let right = n - left;
        let (l, r, nf) = (left as f64, right as f64, n as f64);
        let up = (r / (l * nf)).sqrt();
        let down = -(l / (r * nf)).sqrt();
        for k in start..start + left {
            b[(row, k)] = up;
        }
        for k in start + left..start + n {
            b[(row, k)] = down;
        }
        row += 1;
        segments.push_back((start, left));
        segments.push_back((start + left, right));
    }
    debug_assert_eq!(row, len);
    b
}

/// Two-sided Gaussian critical value `Φ⁻¹((1 + τ) / 2)`.
pub fn threshold(tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("{tau} outside [0, 1)"),
        });
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf((1.0 + tau) / 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutcome {
    pub estimate: DVector<f64>,
    /// Number of basis components set to zero by the test.
    pub zeroed: usize,
}

/// Basis and per-component standard deviations for a fixed estimate covariance.
#[derive(Debug, Clone)]
pub struct SparsityDenoiser {
    basis: SparsityBasis,
    sigma: DVector<f64>,
}

impl SparsityDenoiser {
    pub fn new(basis: SparsityBasis, estimate_cov: &DMatrix<f64>) -> Result<Self> {
        check_dim("sparsity basis", estimate_cov.nrows(), basis.dim())?;
        let b = basis.matrix();
        let bc = b * estimate_cov;
        let sigma = DVector::from_iterator(
            b.nrows(),
            (0..b.nrows()).map(|i| bc.row(i).dot(&b.row(i)).max(0.0).sqrt()),
        );
        Ok(Self { basis, sigma })
    }

    pub fn component_std(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn denoise(&self, estimate: &DVector<f64>, tau: f64) -> Result<DenoiseOutcome> {
        check_dim("sparsity estimate", self.basis.dim(), estimate.len())?;
        let t = threshold(tau)?;
        if tau == 0.0 {
            return Ok(DenoiseOutcome {
                estimate: estimate.clone(),
                zeroed: 0,
            });
        }
        let b = self.basis.matrix();
        let mut c = b * estimate;
        let mut zeroed = 0;
        for (ci, &si) in c.iter_mut().zip(self.sigma.iter()) {
            if ci.abs() <= t * si {
                *ci = 0.0;
                zeroed += 1;
            }
        }
        Ok(DenoiseOutcome {
            estimate: b.transpose() * c,
            zeroed,
        })
    }
}

/// Zeroes statistically insignificant basis components of `estimate`.
pub fn sparsity_denoise(
    estimate: &DVector<f64>,
    estimate_cov: &DMatrix<f64>,
    basis: &SparsityBasis,
    tau: f64,
) -> Result<DenoiseOutcome> {
    SparsityDenoiser::new(basis.clone(), estimate_cov)?.denoise(estimate, tau)
}
