//! Analytic covariance of the stacked measurement noise.
//!
//! With `G = A0 S(f) A0*` the unit-efficiency covariance is
//! `[[G + Σε, G], [G, G]]`. Imperfect detectors thin the counts, which scales
//! the first two terms by `η0²` and adds a binomial-loss term built from
//! `D = diag(A0 n f)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::imaging::{AcquisitionParams, DetectorGeometry, MeasurementMatrix, TransmittanceMap};

/// Covariance `S(f)` of emitted photon counts over object pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonStatistics(DMatrix<f64>);

impl PhotonStatistics {
    pub fn new(s: DMatrix<f64>) -> Self {
        Self(s)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Covariance `Σε` of noise-photon counts on the object-arm detector.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePhotonCovariance(DMatrix<f64>);

impl NoisePhotonCovariance {
    pub fn new(sigma_eps: DMatrix<f64>) -> Self {
        Self(sigma_eps)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Full `2m x 2m` covariance of `(ξ0; ξ1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    sigma_nu: DMatrix<f64>,
}

impl CovarianceModel {
    /// Wraps an assembled matrix, replacing it by its symmetric part.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        let sigma_nu = (&m + m.transpose()) * 0.5;
        Self { sigma_nu }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma_nu
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.sigma_nu
    }

    /// Detector-pixel count per arm.
    pub fn arm_len(&self) -> usize {
        self.sigma_nu.nrows() / 2
    }

    /// Block `(i, j)` with `0` for the object arm and `1` for the ghost image.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let m = self.arm_len();
        self.sigma_nu.view((i * m, j * m), (m, m)).into_owned()
    }
}

/// Poisson photon statistics: `S = n diag(f)`.
pub fn poisson_statistics(f: &TransmittanceMap, n: f64) -> PhotonStatistics {
    PhotonStatistics(DMatrix::from_diagonal(&(f.to_vector() * n)))
}

/// Uniform independent Poisson background: `(n_eps b²) I` over detector pixels.
pub fn noise_photon_covariance(n_eps: f64, geom: &DetectorGeometry) -> NoisePhotonCovariance {
    let b = geom.bin_factor as f64;
    let m = geom.detector_pixels();
    NoisePhotonCovariance(DMatrix::identity(m, m) * (n_eps * b * b))
}

fn image_covariance(a0: &MeasurementMatrix, s: &PhotonStatistics) -> Result<DMatrix<f64>> {
    check_dim("photon statistics", a0.cols(), s.matrix().nrows())?;
    check_dim("photon statistics", a0.cols(), s.matrix().ncols())?;
    Ok(a0.matrix() * s.matrix() * a0.matrix().transpose())
}

fn kron2(weights: [[f64; 2]; 2], block: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    let m = block.nrows();
    for (i, row) in weights.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w != 0.0 {
                let mut view = out.view_mut((i * m, j * m), (m, m));
                view += block * w;
            }
        }
    }
}

/// Unit-efficiency covariance `(1 1; 1 1) ⊗ G + diag(Σε, 0)`.
pub fn covariance_unit_efficiency(
    a0: &MeasurementMatrix,
    s: &PhotonStatistics,
    sigma_eps: &NoisePhotonCovariance,
) -> Result<CovarianceModel> {
    let g = image_covariance(a0, s)?;
    let m = g.nrows();
    check_dim("noise-photon covariance", m, sigma_eps.matrix().nrows())?;
    let mut sigma = DMatrix::zeros(2 * m, 2 * m);
    kron2([[1.0, 1.0], [1.0, 1.0]], &g, &mut sigma);
    kron2([[1.0, 0.0], [0.0, 0.0]], sigma_eps.matrix(), &mut sigma);
    Ok(CovarianceModel::from_matrix(sigma))
}

/// Covariance for detector efficiencies `η0`, `η1` with Poisson photon
/// statistics `S = n diag(f)`.
pub fn covariance_degraded(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    params: &AcquisitionParams,
    sigma_eps: &NoisePhotonCovariance,
) -> Result<CovarianceModel> {
    check_dim("covariance object length", a0.cols(), f.len())?;
    params.validate()?;
    let s = poisson_statistics(f, params.n);
    let g = image_covariance(a0, &s)?;
    let m = g.nrows();
    check_dim("noise-photon covariance", m, sigma_eps.matrix().nrows())?;
    check_dim("noise-photon covariance", m, sigma_eps.matrix().ncols())?;

    let (e0, e1) = (params.eta0, params.eta1);
    let d: DVector<f64> = a0.matrix() * (f.to_vector() * params.n);
    let d = DMatrix::from_diagonal(&d);

    let mut sigma = DMatrix::zeros(2 * m, 2 * m);
    let q = e0 * e0;
    kron2([[q, q * e1], [q * e1, q * e1 * e1]], &g, &mut sigma);
    kron2([[q, 0.0], [0.0, 0.0]], sigma_eps.matrix(), &mut sigma);
    let loss = e0 * (1.0 - e0);
    kron2(
        [[loss, loss * e1], [loss * e1, e0 * e1 * (1.0 - e0 * e1)]],
        &d,
        &mut sigma,
    );
    Ok(CovarianceModel::from_matrix(sigma))
}
