//! Object, detector geometry and the deterministic forward maps of the
//! stacked (object-arm, ghost-image) measurement.
//!
//! The illumination level `n` is folded into the forward operator, so the
//! ideal instrument is the identity on object-pixel space and the quantity
//! being estimated is the transmittance map itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Per-pixel transmittance of the object, row-major, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl TransmittanceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("transmittance values", width * height, values.len())?;
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter {
                name: "transmittance",
                reason: format!("value {bad} outside [0, 1]"),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a map by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, values)
    }

    /// Vertical transparent slit of `slit_width` columns on a uniform background.
    pub fn slit(width: usize, height: usize, slit_width: usize, background: f64) -> Result<Self> {
        let start = width.saturating_sub(slit_width) / 2;
        Self::from_fn(width, height, |x, _| {
            if x >= start && x < start + slit_width {
                1.0
            } else {
                background
            }
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Detector pixel grid; each detector pixel covers a `bin_factor x bin_factor`
/// block of object pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorGeometry {
    pub bin_factor: usize,
    pub detector_width: usize,
    pub detector_height: usize,
}

impl DetectorGeometry {
    pub fn for_object(
        object_width: usize,
        object_height: usize,
        bin_factor: usize,
    ) -> Result<Self> {
        if bin_factor == 0 {
            return Err(Error::InvalidParameter {
                name: "bin_factor",
                reason: "must be at least 1".into(),
            });
        }
        if !object_width.is_multiple_of(bin_factor) || !object_height.is_multiple_of(bin_factor) {
            return Err(Error::NonDivisibleGeometry {
                width: object_width,
                height: object_height,
                bin_factor,
            });
        }
        Ok(Self {
            bin_factor,
            detector_width: object_width / bin_factor,
            detector_height: object_height / bin_factor,
        })
    }

    pub fn detector_pixels(&self) -> usize {
        self.detector_width * self.detector_height
    }

    pub fn object_width(&self) -> usize {
        self.detector_width * self.bin_factor
    }

    pub fn object_height(&self) -> usize {
        self.detector_height * self.bin_factor
    }

    pub fn object_pixels(&self) -> usize {
        self.object_width() * self.object_height()
    }

    /// Detector pixel index receiving light from object pixel `index`.
    pub fn detector_index(&self, index: usize) -> usize {
        let (x, y) = (index % self.object_width(), index / self.object_width());
        (y / self.bin_factor) * self.detector_width + x / self.bin_factor
    }
}

/// Dense forward operator. Binning operators remember the geometry they were
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    matrix: DMatrix<f64>,
    geometry: Option<DetectorGeometry>,
}

impl MeasurementMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self {
            matrix,
            geometry: None,
        }
    }

    pub fn identity(size: usize) -> Self {
        Self::new(DMatrix::identity(size, size))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn geometry(&self) -> Option<&DetectorGeometry> {
        self.geometry.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionParams {
    /// Mean illuminating photons per object pixel.
    pub n: f64,
    /// Object-arm detector quantum efficiency.
    pub eta0: f64,
    /// Restoring-arm detector quantum efficiency.
    pub eta1: f64,
    /// Mean noise photons per object pixel reaching the object-arm detector.
    pub n_eps: f64,
}

impl AcquisitionParams {
    pub fn new(n: f64, eta0: f64, eta1: f64, n_eps: f64) -> Result<Self> {
        let params = Self {
            n,
            eta0,
            eta1,
            n_eps,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be finite and non-negative"),
                })
            }
        };
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} outside [0, 1]"),
                })
            }
        };
        nonneg("n", self.n)?;
        nonneg("n_eps", self.n_eps)?;
        unit("eta0", self.eta0)?;
        unit("eta1", self.eta1)
    }

    /// Parameters describing the sum of `frames` independent acquisitions.
    pub fn accumulated(&self, frames: usize) -> Self {
        let k = frames as f64;
        Self {
            n: self.n * k,
            n_eps: self.n_eps * k,
            ..*self
        }
    }
}

/// Block-summing operator `A0`: detector pixel `d` collects the
/// `bin_factor x bin_factor` block of object pixels it covers.
pub fn build_binning_operator(
    object_width: usize,
    object_height: usize,
    bin_factor: usize,
) -> Result<MeasurementMatrix> {
    let geom = DetectorGeometry::for_object(object_width, object_height, bin_factor)?;
    let cols = object_width * object_height;
    let mut matrix = DMatrix::zeros(geom.detector_pixels(), cols);
    for i in 0..cols {
        matrix[(geom.detector_index(i), i)] = 1.0;
    }
    Ok(MeasurementMatrix {
        matrix,
        geometry: Some(geom),
    })
}

/// Stacked operator `(n η0 A0; n η0 η1 A0)` acting on the transmittance map.
pub fn stacked_forward_operator(
    a0: &MeasurementMatrix,
    params: &AcquisitionParams,
) -> Result<MeasurementMatrix> {
    params.validate()?;
    let (m, cols) = (a0.rows(), a0.cols());
    let top = params.n * params.eta0;
    let mut matrix = DMatrix::zeros(2 * m, cols);
    matrix.rows_mut(0, m).copy_from(&(a0.matrix() * top));
    matrix
        .rows_mut(m, m)
        .copy_from(&(a0.matrix() * (top * params.eta1)));
    Ok(MeasurementMatrix::new(matrix))
}

/// Ghost-only forward operator: the bottom block `n η0 η1 A0`.
pub fn ghost_forward_operator(
    a0: &MeasurementMatrix,
    params: &AcquisitionParams,
) -> Result<MeasurementMatrix> {
    params.validate()?;
    Ok(MeasurementMatrix::new(
        a0.matrix() * (params.n * params.eta0 * params.eta1),
    ))
}

/// Mean detected noise photons per detector pixel. The noise term of the
/// object-arm covariance carries an `η0²` weight, and the simulator injects
/// Poisson counts with exactly that mean.
pub fn noise_mean_per_detector_pixel(geom: &DetectorGeometry, params: &AcquisitionParams) -> f64 {
    let b = geom.bin_factor as f64;
    params.eta0 * params.eta0 * params.n_eps * b * b
}

/// Expected detector counts `(E ξ0, E ξ1)`.
pub fn forward_mean(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    params: &AcquisitionParams,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("forward_mean object length", a0.cols(), f.len())?;
    params.validate()?;
    let noise = if params.n_eps > 0.0 {
        let geom = a0.geometry().ok_or(Error::InvalidParameter {
            name: "a0",
            reason: "noise photons require a binning operator with known geometry".into(),
        })?;
        noise_mean_per_detector_pixel(geom, params)
    } else {
        0.0
    };
    let signal = a0.matrix() * f.to_vector() * params.n;
    let xi0 = signal.map(|s| params.eta0 * s + noise);
    let xi1 = &signal * (params.eta0 * params.eta1);
    Ok((xi0, xi1))
}
