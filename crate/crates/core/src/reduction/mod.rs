//! Measurement reduction: the minimax linear estimator of `U f` from
//! `ξ = A f + ν`, followed by optional sparsity denoising and a Mahalanobis
//! projection onto the physically admissible box `[0, 1]^dim`.
//!
//! With `W = Σν⁻` and information matrix `J = Aᵀ W A`, the reduction operator
//! is `R = U J⁻ Aᵀ W`, the estimate covariance is `U J⁻ Uᵀ` and its trace is
//! the mean squared error. The error is infinite unless `U (I - J⁻ J) = 0`.
//! All inversions are pseudo-inversions.

mod pinv;
mod projection;
mod sparsity;

pub(crate) use pinv::is_diagonal as pinv_is_diagonal;
pub use pinv::{pseudo_inverse, DEFAULT_RTOL};
pub use projection::{project_box, BoxProjector, DEFAULT_KKT_TOLERANCE, DEFAULT_MAX_ITERATIONS};
pub use sparsity::{
    haar_1d, sparsity_denoise, threshold, DenoiseOutcome, SparsityBasis, SparsityDenoiser,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::imaging::{
    ghost_forward_operator, stacked_forward_operator, AcquisitionParams, MeasurementMatrix,
    TransmittanceMap,
};
use crate::noise::{covariance_degraded, noise_photon_covariance, NoisePhotonCovariance};

/// Relative Frobenius tolerance of the feasibility test.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionProblem {
    a: DMatrix<f64>,
    sigma_nu: DMatrix<f64>,
    u: DMatrix<f64>,
}

impl ReductionProblem {
    pub fn new(a: DMatrix<f64>, sigma_nu: DMatrix<f64>, u: DMatrix<f64>) -> Result<Self> {
        check_dim("ideal operator columns", a.ncols(), u.ncols())?;
        check_dim("noise covariance rows", a.nrows(), sigma_nu.nrows())?;
        check_dim("noise covariance columns", a.nrows(), sigma_nu.ncols())?;
        Ok(Self { a, sigma_nu, u })
    }

    /// Problem with the identity as ideal instrument.
    pub fn with_identity(a: DMatrix<f64>, sigma_nu: DMatrix<f64>) -> Result<Self> {
        let n = a.ncols();
        Self::new(a, sigma_nu, DMatrix::identity(n, n))
    }

    /// Both arms `(ξ0; ξ1)` with the efficiency-degraded covariance.
    pub fn combined(
        a0: &MeasurementMatrix,
        f: &TransmittanceMap,
        params: &AcquisitionParams,
    ) -> Result<Self> {
        let sigma_eps = default_noise_covariance(a0, params)?;
        let a = stacked_forward_operator(a0, params)?.into_matrix();
        let sigma = covariance_degraded(a0, f, params, &sigma_eps)?.into_matrix();
        Self::with_identity(a, sigma)
    }

    /// Ghost image `ξ1` alone: bottom block of the operator and covariance.
    pub fn ghost_only(
        a0: &MeasurementMatrix,
        f: &TransmittanceMap,
        params: &AcquisitionParams,
    ) -> Result<Self> {
        let sigma_eps = default_noise_covariance(a0, params)?;
        let a = ghost_forward_operator(a0, params)?.into_matrix();
        let sigma = covariance_degraded(a0, f, params, &sigma_eps)?.block(1, 1);
        Self::with_identity(a, sigma)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sigma_nu(&self) -> &DMatrix<f64> {
        &self.sigma_nu
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Replaces the ideal instrument.
    pub fn with_u(self, u: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a, self.sigma_nu, u)
    }
}

fn default_noise_covariance(
    a0: &MeasurementMatrix,
    params: &AcquisitionParams,
) -> Result<NoisePhotonCovariance> {
    match a0.geometry() {
        Some(geom) => Ok(noise_photon_covariance(params.n_eps, geom)),
        None if params.n_eps == 0.0 => Ok(NoisePhotonCovariance::new(DMatrix::zeros(
            a0.rows(),
            a0.rows(),
        ))),
        None => Err(Error::InvalidParameter {
            name: "a0",
            reason: "noise photons require a binning operator with known geometry".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub estimate: DVector<f64>,
    pub estimate_cov: DMatrix<f64>,
    /// Mean squared error, `+∞` when `U f` is not estimable.
    pub mse: f64,
}

/// Precomputed reduction operator for a fixed problem.
#[derive(Debug, Clone)]
pub struct LinearReducer {
    operator: DMatrix<f64>,
    estimate_cov: DMatrix<f64>,
    feasible: bool,
}

impl LinearReducer {
    pub fn new(problem: &ReductionProblem) -> Self {
        let w = pseudo_inverse(&problem.sigma_nu, DEFAULT_RTOL);
        let at_w = problem.a.transpose() * &w;
        let info = &at_w * &problem.a;
        let info_pinv = pseudo_inverse(&info, DEFAULT_RTOL);
        let u = &problem.u;
        let feasible = residual_ratio(u, &info_pinv, &info) <= FEASIBILITY_TOLERANCE;
        let u_j = u * &info_pinv;
        let operator = &u_j * at_w;
        let cov = u_j * u.transpose();
        let estimate_cov = (&cov + cov.transpose()) * 0.5;
        Self {
            operator,
            estimate_cov,
            feasible,
        }
    }

    /// The reduction operator `R`.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn estimate_cov(&self) -> &DMatrix<f64> {
        &self.estimate_cov
    }

    pub fn is_feasible(&self) -> bool {
        self.feasible
    }

    pub fn mse(&self) -> f64 {
        if self.feasible {
            self.estimate_cov.trace()
        } else {
            f64::INFINITY
        }
    }

    pub fn apply(&self, xi: &DVector<f64>) -> Result<ReductionResult> {
        check_dim("measurement length", self.operator.ncols(), xi.len())?;
        Ok(ReductionResult {
            estimate: &self.operator * xi,
            estimate_cov: self.estimate_cov.clone(),
            mse: self.mse(),
        })
    }
}

fn residual_ratio(u: &DMatrix<f64>, info_pinv: &DMatrix<f64>, info: &DMatrix<f64>) -> f64 {
    let n = info.nrows();
    let u_norm = u.norm();
    if u_norm == 0.0 {
        return 0.0;
    }
    let residual = u * (DMatrix::identity(n, n) - info_pinv * info);
    residual.norm() / u_norm
}

/// Whether `U f` is estimable with finite error: `‖U (I - A⁻A)‖ ≤ 1e-8 ‖U‖`,
/// where `A⁻A` is formed through the whitened normal equations.
pub fn feasibility(problem: &ReductionProblem) -> bool {
    let w = pseudo_inverse(&problem.sigma_nu, DEFAULT_RTOL);
    let info = problem.a.transpose() * w * &problem.a;
    let info_pinv = pseudo_inverse(&info, DEFAULT_RTOL);
    residual_ratio(&problem.u, &info_pinv, &info) <= FEASIBILITY_TOLERANCE
}

/// Minimax linear estimate of `U f` from `xi`.
pub fn linear_reduction(problem: &ReductionProblem, xi: &DVector<f64>) -> Result<ReductionResult> {
    check_dim("measurement length", problem.a.nrows(), xi.len())?;
    LinearReducer::new(problem).apply(xi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub linear: DVector<f64>,
    pub denoised: DVector<f64>,
    pub estimate: DVector<f64>,
    pub zeroed: usize,
}

/// Linear reduction, sparsity denoising and box projection with all
/// problem-dependent factorizations done once.
#[derive(Debug, Clone)]
pub struct ReconstructionPipeline {
    reducer: LinearReducer,
    denoiser: Option<SparsityDenoiser>,
    projector: BoxProjector,
}

impl ReconstructionPipeline {
    pub fn new(problem: &ReductionProblem, basis: Option<SparsityBasis>) -> Result<Self> {
        let reducer = LinearReducer::new(problem);
        let denoiser = basis
            .map(|b| SparsityDenoiser::new(b, reducer.estimate_cov()))
            .transpose()?;
        let projector = BoxProjector::new(reducer.estimate_cov());
        Ok(Self {
            reducer,
            denoiser,
            projector,
        })
    }

    pub fn reducer(&self) -> &LinearReducer {
        &self.reducer
    }

    pub fn projector_mut(&mut self) -> &mut BoxProjector {
        &mut self.projector
    }

    pub fn run(&self, xi: &DVector<f64>, tau: f64) -> Result<PipelineOutput> {
        threshold(tau)?;
        let linear = self.reducer.apply(xi)?.estimate;
        let (denoised, zeroed) = match &self.denoiser {
            Some(d) if tau > 0.0 => {
                let out = d.denoise(&linear, tau)?;
                (out.estimate, out.zeroed)
            }
            _ => (linear.clone(), 0),
        };
        let estimate = self.projector.project(&denoised)?;
        Ok(PipelineOutput {
            linear,
            denoised,
            estimate,
            zeroed,
        })
    }
}

/// Full estimate in `[0, 1]^dim`: reduction, then denoising when a basis is
/// given and `τ > 0`, then box projection.
pub fn estimate_pipeline(
    problem: &ReductionProblem,
    xi: &DVector<f64>,
    basis: Option<&SparsityBasis>,
    tau: f64,
) -> Result<DVector<f64>> {
    let basis = basis.filter(|_| tau > 0.0).cloned();
    Ok(ReconstructionPipeline::new(problem, basis)?
        .run(xi, tau)?
        .estimate)
}
