//! Analytic error of the ghost-only and dual-image schemes, and the photon
//! budget the object-arm image saves at equal reconstruction error.
//!
//! The closed forms work with the arm operator `A0` and the `m x m` covariance
//! blocks directly instead of the stacked problem:
//!
//! * ghost only: `tr U (A0ᵀ M⁻ A0)⁻ Uᵀ / (n² η0 η1)` with
//!   `M = η0 η1 G + (1 - η0 η1) D`;
//! * combined: `tr U (A0ᵀ W A0)⁻ Uᵀ / (n² η0²)` with
//!   `W = [I, η1 I] Σν⁻ [I; η1 I]`,
//!
//! where `G = A0 S(f) A0ᵀ`, `D = diag(A0 n f)`. The `1/n²` factor expresses the
//! error for the transmittance map rather than for the photon flux `n f`.
//! Sparse columns of `A0` and diagonal covariance blocks are exploited, so a
//! full gain surface over a 12x12 object takes well under a minute.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::imaging::{AcquisitionParams, MeasurementMatrix, TransmittanceMap};
use crate::noise::{noise_photon_covariance, NoisePhotonCovariance};
use crate::reduction::{pseudo_inverse, DEFAULT_RTOL, FEASIBILITY_TOLERANCE};

/// Relative tolerance on `n′` in the photon-gain bisection.
pub const BISECTION_RTOL: f64 = 1e-6;

/// One point of the photon-gain surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint {
    pub eta: f64,
    pub noise_ratio: f64,
    pub mse_ghost_only: f64,
    pub mse_combined: f64,
    pub mse_gain: f64,
    pub photon_gain: f64,
}

/// Nonzero entries of each column of `A0`.
struct SparseColumns {
    rows: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    fn new(a: &DMatrix<f64>) -> Self {
        let cols = a
            .column_iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(r, &v)| (r, v))
                    .collect()
            })
            .collect();
        Self {
            rows: a.nrows(),
            cols,
        }
    }

    /// `A diag(s) Aᵀ`.
    fn weighted_outer(&self, s: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.rows);
        for (col, &si) in self.cols.iter().zip(s) {
            if si == 0.0 {
                continue;
            }
            for &(p, vp) in col {
                for &(q, vq) in col {
                    out[(p, q)] += vp * si * vq;
                }
            }
        }
        out
    }

    /// `A v`.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (col, &vi) in self.cols.iter().zip(v) {
            for &(p, vp) in col {
                out[p] += vp * vi;
            }
        }
        out
    }

    /// `Aᵀ diag(w) A`.
    fn gram_diag(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.cols.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut acc = 0.0;
                for &(p, vp) in &self.cols[i] {
                    for &(q, vq) in &self.cols[j] {
                        if p == q {
                            acc += vp * w[p] * vq;
                        }
                    }
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    /// `Aᵀ X A`.
    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.cols.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let mut acc = 0.0;
                for &(p, vp) in &self.cols[i] {
                    for &(q, vq) in &self.cols[j] {
                        acc += vp * x[(p, q)] * vq;
                    }
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

/// `tr U K⁻ Uᵀ`, or `+∞` when `U (I - K⁻ K) ≠ 0`.
fn projected_trace(u: &DMatrix<f64>, k: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let k_pinv = pseudo_inverse(k, DEFAULT_RTOL);
    let u_is_identity = u.is_square() && u.nrows() == n && u.is_identity(0.0);
    let u_norm = u.norm();
    if u_norm == 0.0 {
        return 0.0;
    }
    let defect = if crate::reduction::pinv_is_diagonal(k) {
        let d = DVector::from_iterator(n, (0..n).map(|i| 1.0 - k_pinv[(i, i)] * k[(i, i)]));
        if u_is_identity {
            d.norm()
        } else {
            let mut scaled = u.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= d[j];
            }
            scaled.norm()
        }
    } else {
        let complement = DMatrix::identity(n, n) - &k_pinv * k;
        if u_is_identity {
            complement.norm()
        } else {
            (u * complement).norm()
        }
    };
    if defect > FEASIBILITY_TOLERANCE * u_norm {
        return f64::INFINITY;
    }
    if u_is_identity {
        k_pinv.trace()
    } else {
        (u * k_pinv).component_mul(u).sum()
    }
}

/// Pseudo-inverse of a symmetric `2m x 2m` matrix. When all four `m x m`
/// blocks are diagonal it decouples into per-pixel 2x2 problems.
fn block_pseudo_inverse(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let m = sigma.nrows() / 2;
    let block = |i: usize, j: usize| sigma.view((i * m, j * m), (m, m)).into_owned();
    let diagonal_blocks =
        (0..2).all(|i| (0..2).all(|j| crate::reduction::pinv_is_diagonal(&block(i, j))));
    if !diagonal_blocks {
        return pseudo_inverse(sigma, DEFAULT_RTOL);
    }
    let eig: Vec<_> = (0..m)
        .map(|k| sym2_eigen(sigma[(k, k)], sigma[(k, m + k)], sigma[(m + k, m + k)]))
        .collect();
    let max = eig
        .iter()
        .flat_map(|e| [e.0[0].abs(), e.0[1].abs()])
        .fold(0.0, f64::max);
    let cutoff = DEFAULT_RTOL * max;
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for (k, (vals, vecs)) in eig.iter().enumerate() {
        let idx = [k, m + k];
        for (lambda, v) in vals.iter().zip(vecs) {
            if lambda.abs() == 0.0 || lambda.abs() < cutoff {
                continue;
            }
            for a in 0..2 {
                for b in 0..2 {
                    out[(idx[a], idx[b])] += v[a] * v[b] / lambda;
                }
            }
        }
    }
    out
}

/// Diagonal of `W` when every covariance block is diagonal: per pixel,
/// `Σ (v0 + η1 v1)² / λ` over the kept eigenpairs of its 2x2 block, with the
/// same global cutoff as `block_pseudo_inverse`.
fn diagonal_weight(blocks: &[[f64; 3]], e1: f64) -> Vec<f64> {
    let eig: Vec<_> = blocks
        .iter()
        .map(|b| sym2_eigen(b[0], b[1], b[2]))
        .collect();
    let max = eig
        .iter()
        .flat_map(|e| [e.0[0].abs(), e.0[1].abs()])
        .fold(0.0, f64::max);
    let cutoff = DEFAULT_RTOL * max;
    eig.iter()
        .map(|(vals, vecs)| {
            vals.iter()
                .zip(vecs)
                .filter(|(l, _)| l.abs() != 0.0 && l.abs() >= cutoff)
                .map(|(l, v)| (v[0] + e1 * v[1]).powi(2) / l)
                .sum()
        })
        .collect()
}

/// Eigen-decomposition of `[[a, b], [b, c]]`.
fn sym2_eigen(a: f64, b: f64, c: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    if b == 0.0 {
        return ([a, c], [[1.0, 0.0], [0.0, 1.0]]);
    }
    let h = 0.5 * (a - c);
    let r = h.hypot(b);
    let mid = 0.5 * (a + c);
    let (l1, l2) = (mid + r, mid - r);
    let v = if h >= 0.0 { [h + r, b] } else { [b, r - h] };
    let norm = v[0].hypot(v[1]);
    let v1 = [v[0] / norm, v[1] / norm];
    ([l1, l2], [v1, [-v1[1], v1[0]]])
}

struct ArmModel {
    a0: SparseColumns,
    /// `G = A0 S(f) A0ᵀ` with `S = n diag(f)`.
    g: DMatrix<f64>,
    /// diagonal of `D = diag(A0 n f)`.
    d: Vec<f64>,
}

impl ArmModel {
    fn new(a0: &MeasurementMatrix, f: &TransmittanceMap, n: f64) -> Result<Self> {
        check_dim("gain object length", a0.cols(), f.len())?;
        let a0 = SparseColumns::new(a0.matrix());
        let flux: Vec<f64> = f.values().iter().map(|v| v * n).collect();
        let g = a0.weighted_outer(&flux);
        let d = a0.apply(&flux);
        Ok(Self { a0, g, d })
    }

    fn with_diag(&self, weight_g: f64, weight_d: f64) -> DMatrix<f64> {
        let mut out = &self.g * weight_g;
        for (k, &dk) in self.d.iter().enumerate() {
            out[(k, k)] += weight_d * dk;
        }
        out
    }
}

fn check_u(a0: &MeasurementMatrix, u: &DMatrix<f64>) -> Result<()> {
    check_dim("ideal operator columns", a0.cols(), u.ncols())
}

/// Error of reduction from the ghost image alone.
pub fn mse_ghost_only(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    params: &AcquisitionParams,
    u: &DMatrix<f64>,
) -> Result<f64> {
    params.validate()?;
    check_u(a0, u)?;
    let arm = ArmModel::new(a0, f, params.n)?;
    let e = params.eta0 * params.eta1;
    if e == 0.0 || params.n == 0.0 {
        return Ok(f64::INFINITY);
    }
    let m = arm.with_diag(e, 1.0 - e);
    let k = arm.a0.gram(&pseudo_inverse(&m, DEFAULT_RTOL));
    Ok(projected_trace(u, &k) / (params.n * params.n * e))
}

/// Error of reduction from both the object-arm image and the ghost image.
pub fn mse_combined(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    params: &AcquisitionParams,
    sigma_eps: &NoisePhotonCovariance,
    u: &DMatrix<f64>,
) -> Result<f64> {
    params.validate()?;
    check_u(a0, u)?;
    let arm = ArmModel::new(a0, f, params.n)?;
    let m = a0.rows();
    check_dim("noise-photon covariance", m, sigma_eps.matrix().nrows())?;
    check_dim("noise-photon covariance", m, sigma_eps.matrix().ncols())?;
    let (e0, e1) = (params.eta0, params.eta1);
    if e0 == 0.0 || params.n == 0.0 {
        return Ok(f64::INFINITY);
    }
    let q = e0 * e0;
    let loss = e0 * (1.0 - e0);
    let lost1 = e0 * e1 * (1.0 - e0 * e1);
    if crate::reduction::pinv_is_diagonal(&arm.g)
        && crate::reduction::pinv_is_diagonal(sigma_eps.matrix())
    {
        let blocks: Vec<[f64; 3]> = (0..m)
            .map(|k| {
                let (g, d) = (arm.g[(k, k)], arm.d[k]);
                [
                    q * g + loss * d + q * sigma_eps.matrix()[(k, k)],
                    e1 * (q * g + loss * d),
                    q * e1 * e1 * g + lost1 * d,
                ]
            })
            .collect();
        let w = diagonal_weight(&blocks, e1);
        let k = arm.a0.gram_diag(&w);
        return Ok(projected_trace(u, &k) / (params.n * params.n * q));
    }
    let top = arm.with_diag(q, loss) + sigma_eps.matrix() * q;
    let cross = arm.with_diag(q * e1, loss * e1);
    let bottom = arm.with_diag(q * e1 * e1, lost1);
    let mut sigma = DMatrix::zeros(2 * m, 2 * m);
    sigma.view_mut((0, 0), (m, m)).copy_from(&top);
    sigma.view_mut((0, m), (m, m)).copy_from(&cross);
    sigma.view_mut((m, 0), (m, m)).copy_from(&cross.transpose());
    sigma.view_mut((m, m), (m, m)).copy_from(&bottom);
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let w_full = block_pseudo_inverse(&sigma);
    let w = |i: usize, j: usize| w_full.view((i * m, j * m), (m, m)).into_owned();
    let w = w(0, 0) + (w(0, 1) + w(1, 0)) * e1 + w(1, 1) * (e1 * e1);
    let k = arm.a0.gram(&w);
    Ok(projected_trace(u, &k) / (params.n * params.n * q))
}

/// Error reduction from registering the object-arm image.
pub fn mse_gain(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    params: &AcquisitionParams,
    sigma_eps: &NoisePhotonCovariance,
    u: &DMatrix<f64>,
) -> Result<f64> {
    let ghost = mse_ghost_only(a0, f, params, u)?;
    let combined = mse_combined(a0, f, params, sigma_eps, u)?;
    if !ghost.is_finite() || !combined.is_finite() {
        return Err(Error::InfeasibleProblem(
            "mse gain needs both errors finite",
        ));
    }
    Ok(ghost - combined)
}

fn noise_covariance_for(a0: &MeasurementMatrix, n_eps: f64) -> Result<NoisePhotonCovariance> {
    match a0.geometry() {
        Some(geom) => Ok(noise_photon_covariance(n_eps, geom)),
        None if n_eps == 0.0 => Ok(NoisePhotonCovariance::new(DMatrix::zeros(
            a0.rows(),
            a0.rows(),
        ))),
        None => Err(Error::InvalidParameter {
            name: "a0",
            reason: "noise photons require a binning operator with known geometry".into(),
        }),
    }
}

fn equal_efficiency(n: f64, eta: f64, noise_ratio: f64) -> Result<AcquisitionParams> {
    AcquisitionParams::new(n, eta, eta, noise_ratio * n)
}

/// Relative photon saving `Δn/n` of the dual-image scheme.
///
/// Finds by bisection the illumination `n′ ≤ n_ref` at which the combined
/// error (with noise photons scaled to `noise_ratio · n′`) equals the
/// ghost-only error at `n_ref`.
pub fn photon_number_gain(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    eta: f64,
    noise_ratio: f64,
    u: &DMatrix<f64>,
    n_ref: f64,
) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("{eta} outside (0, 1]"),
        });
    }
    if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "noise_ratio",
            reason: format!("{noise_ratio} must be non-negative"),
        });
    }
    if !(n_ref > 0.0 && n_ref.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "n_ref",
            reason: format!("{n_ref} must be positive"),
        });
    }
    let target = mse_ghost_only(a0, f, &equal_efficiency(n_ref, eta, noise_ratio)?, u)?;
    if !target.is_finite() {
        return Err(Error::InfeasibleProblem("ghost-only error is infinite"));
    }
    let combined = |n: f64| -> Result<f64> {
        let p = equal_efficiency(n, eta, noise_ratio)?;
        mse_combined(a0, f, &p, &noise_covariance_for(a0, p.n_eps)?, u)
    };

    let at_ref = combined(n_ref)?;
    // error scales as 1/n, so a gap this small is a gain below the
    // bisection resolution
    if (at_ref - target).abs() <= 1e-9 * target {
        return Ok(0.0);
    }
    if at_ref > target {
        return Err(Error::BisectionFailure(format!(
            "combined error {at_ref:e} exceeds ghost-only error {target:e} at n_ref"
        )));
    }
    let mut hi = n_ref;
    let mut lo = 0.5 * n_ref;
    let mut halvings = 0;
    while combined(lo)? <= target {
        hi = lo;
        lo *= 0.5;
        halvings += 1;
        if halvings > 200 {
            return Err(Error::BisectionFailure(
                "combined error stays below target as n' -> 0".into(),
            ));
        }
    }
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if combined(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let n_prime = 0.5 * (lo + hi);
    Ok(((n_ref - n_prime) / n_ref).clamp(0.0, 1.0))
}

/// `photon_number_gain` over the Cartesian grid, sorted by `(eta, noise_ratio)`.
pub fn gain_surface(
    a0: &MeasurementMatrix,
    f: &TransmittanceMap,
    eta_grid: &[f64],
    noise_ratio_grid: &[f64],
    u: &DMatrix<f64>,
    n_ref: f64,
) -> Result<Vec<GainPoint>> {
    if eta_grid.is_empty() || noise_ratio_grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "eta and noise-ratio grids must be non-empty".into(),
        });
    }
    let points: Vec<(f64, f64)> = eta_grid
        .iter()
        .flat_map(|&e| noise_ratio_grid.iter().map(move |&r| (e, r)))
        .collect();
    let mut rows = points
        .into_par_iter()
        .map(|(eta, noise_ratio)| {
            let params = equal_efficiency(n_ref, eta, noise_ratio)?;
            let sigma_eps = noise_covariance_for(a0, params.n_eps)?;
            let ghost = mse_ghost_only(a0, f, &params, u)?;
            let combined = mse_combined(a0, f, &params, &sigma_eps, u)?;
            Ok(GainPoint {
                eta,
                noise_ratio,
                mse_ghost_only: ghost,
                mse_combined: combined,
                mse_gain: ghost - combined,
                photon_gain: photon_number_gain(a0, f, eta, noise_ratio, u, n_ref)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.eta
            .total_cmp(&b.eta)
            .then(a.noise_ratio.total_cmp(&b.noise_ratio))
    });
    Ok(rows)
}

/// Default figure grids: η in 0.05..=1.0 and n_ε/n in 0..=1, both step 0.05.
pub fn default_grids() -> (Vec<f64>, Vec<f64>) {
    let eta = (1..=20).map(|k| k as f64 * 0.05).collect();
    let ratio = (0..=20).map(|k| k as f64 * 0.05).collect();
    (eta, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::build_binning_operator;
    use crate::reduction::{LinearReducer, ReductionProblem};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn sym2_eigen_reconstructs() {
        for (a, b, c) in [
            (2.0, 0.5, 1.0),
            (1.0, 0.5, 2.0),
            (1e6, 1e-3, 1.0),
            (0.5, 0.25, 0.25),
        ] {
            let (vals, vecs) = sym2_eigen(a, b, c);
            let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let mut rebuilt = DMatrix::zeros(2, 2);
            for (l, v) in vals.iter().zip(vecs) {
                let v = DVector::from_vec(v.to_vec());
                rebuilt += &v * v.transpose() * *l;
            }
            assert!((rebuilt - m).amax() < 1e-9 * a.max(c));
        }
    }

    #[test]
    fn block_pinv_matches_dense() {
        let a0 = build_binning_operator(4, 2, 2).unwrap();
        let f =
            TransmittanceMap::from_fn(4, 2, |x, y| if x == 0 { 0.0 } else { 0.3 + 0.1 * y as f64 })
                .unwrap();
        let p = AcquisitionParams::new(1.5, 0.4, 0.7, 0.0).unwrap();
        let eps = noise_photon_covariance(0.0, a0.geometry().unwrap());
        let sigma = crate::noise::covariance_degraded(&a0, &f, &p, &eps).unwrap();
        let fast = block_pseudo_inverse(sigma.matrix());
        let dense = pseudo_inverse(sigma.matrix(), DEFAULT_RTOL);
        assert!((fast - dense).amax() < 1e-9);
    }

    #[test]
    fn scalar_unit_efficiency_closed_form() {
        // f = 1, n = 1, η = 1: both errors equal f / n = 1
        let a0 = MeasurementMatrix::identity(1);
        let f = TransmittanceMap::new(1, 1, vec![1.0]).unwrap();
        let p = AcquisitionParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let u = DMatrix::identity(1, 1);
        let ghost = mse_ghost_only(&a0, &f, &p, &u).unwrap();
        assert!((ghost - 1.0).abs() < 1e-12);
        let problem = ReductionProblem::ghost_only(&a0, &f, &p).unwrap();
        assert!(rel(ghost, LinearReducer::new(&problem).mse()) < 1e-10);
    }

    #[test]
    fn scalar_half_efficiency_hand_value() {
        // Σν = [[.5, .25], [.25, .25]], A = (.5, .25): J = 0.5 ⇒ error 2
        let a0 = MeasurementMatrix::identity(1);
        let f = TransmittanceMap::new(1, 1, vec![1.0]).unwrap();
        let p = AcquisitionParams::new(1.0, 0.5, 0.5, 0.0).unwrap();
        let eps = NoisePhotonCovariance::new(DMatrix::zeros(1, 1));
        let u = DMatrix::identity(1, 1);
        let c = mse_combined(&a0, &f, &p, &eps, &u).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
        // ghost only: Σ = .25, A = .25 ⇒ error 4
        let g = mse_ghost_only(&a0, &f, &p, &u).unwrap();
        assert!((g - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coincidence_rate_is_infinite() {
        let a0 = MeasurementMatrix::identity(2);
        let f = TransmittanceMap::constant(2, 1, 1.0).unwrap();
        let u = DMatrix::identity(2, 2);
        for (e0, e1) in [(0.0, 0.5), (0.5, 0.0)] {
            let p = AcquisitionParams::new(1.0, e0, e1, 0.0).unwrap();
            assert_eq!(mse_ghost_only(&a0, &f, &p, &u).unwrap(), f64::INFINITY);
        }
        let p = AcquisitionParams::new(1.0, 0.5, 0.0, 0.0).unwrap();
        let eps = NoisePhotonCovariance::new(DMatrix::zeros(2, 2));
        assert!(mse_gain(&a0, &f, &p, &eps, &u).is_err());
    }

    #[test]
    fn default_parameters_match_reduction_path() {
        let a0 = build_binning_operator(6, 6, 1).unwrap();
        let f = TransmittanceMap::from_fn(6, 6, |x, y| 0.05 + 0.9 * ((x + y) % 3) as f64 / 2.0)
            .unwrap();
        let p = AcquisitionParams::new(1.0, 0.4, 0.4, 0.1).unwrap();
        let eps = noise_photon_covariance(p.n_eps, a0.geometry().unwrap());
        let u = DMatrix::identity(36, 36);
        let ghost = mse_ghost_only(&a0, &f, &p, &u).unwrap();
        let combined = mse_combined(&a0, &f, &p, &eps, &u).unwrap();
        let rg = LinearReducer::new(&ReductionProblem::ghost_only(&a0, &f, &p).unwrap()).mse();
        let rc = LinearReducer::new(&ReductionProblem::combined(&a0, &f, &p).unwrap()).mse();
        assert!(rel(ghost, rg) < 1e-8, "{ghost} vs {rg}");
        assert!(rel(combined, rc) < 1e-8, "{combined} vs {rc}");
        assert!(combined < ghost);
    }

    #[test]
    fn binned_object_with_binned_ideal_instrument() {
        let a0 = build_binning_operator(6, 6, 3).unwrap();
        let f = TransmittanceMap::from_fn(6, 6, |x, _| if x < 2 { 1.0 } else { 0.2 }).unwrap();
        let p = AcquisitionParams::new(2.0, 0.6, 0.3, 0.4).unwrap();
        let eps = noise_photon_covariance(p.n_eps, a0.geometry().unwrap());
        let identity = DMatrix::identity(36, 36);
        assert_eq!(
            mse_combined(&a0, &f, &p, &eps, &identity).unwrap(),
            f64::INFINITY
        );
        let u = a0.matrix().clone();
        let combined = mse_combined(&a0, &f, &p, &eps, &u).unwrap();
        let problem = ReductionProblem::combined(&a0, &f, &p)
            .unwrap()
            .with_u(u.clone())
            .unwrap();
        assert!(rel(combined, LinearReducer::new(&problem).mse()) < 1e-8);
        let ghost = mse_ghost_only(&a0, &f, &p, &u).unwrap();
        let problem = ReductionProblem::ghost_only(&a0, &f, &p)
            .unwrap()
            .with_u(u)
            .unwrap();
        assert!(rel(ghost, LinearReducer::new(&problem).mse()) < 1e-8);
    }

    #[test]
    fn photon_gain_anchors() {
        let a0 = build_binning_operator(3, 3, 1).unwrap();
        let f = TransmittanceMap::constant(3, 3, 1.0).unwrap();
        let u = DMatrix::identity(9, 9);
        let g = photon_number_gain(&a0, &f, 0.4, 0.0, &u, 1.0).unwrap();
        assert!((g - 0.6).abs() < 1e-4);
        let g = photon_number_gain(&a0, &f, 1.0, 0.3, &u, 1.0).unwrap();
        assert!(g.abs() < 1e-6);
        assert!(photon_number_gain(&a0, &f, 0.0, 0.0, &u, 1.0).is_err());
        assert!(photon_number_gain(&a0, &f, 0.5, -1.0, &u, 1.0).is_err());
    }

    #[test]
    fn photon_gain_independent_of_reference_level() {
        // every error scales as 1/n when noise photons scale with n
        let a0 = build_binning_operator(2, 2, 1).unwrap();
        let f = TransmittanceMap::new(2, 2, vec![0.1, 0.5, 0.9, 1.0]).unwrap();
        let u = DMatrix::identity(4, 4);
        let g1 = photon_number_gain(&a0, &f, 0.5, 0.4, &u, 1.0).unwrap();
        let g2 = photon_number_gain(&a0, &f, 0.5, 0.4, &u, 7.0).unwrap();
        assert!((g1 - g2).abs() < 1e-5);
        assert!(g1 > 0.0 && g1 < 0.5);
    }

    #[test]
    fn surface_is_sorted_and_sized() {
        let a0 = build_binning_operator(2, 2, 1).unwrap();
        let f = TransmittanceMap::constant(2, 2, 1.0).unwrap();
        let u = DMatrix::identity(4, 4);
        let rows = gain_surface(&a0, &f, &[0.8, 0.4], &[0.5, 0.0, 0.25], &u, 1.0).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].eta, rows[0].noise_ratio), (0.4, 0.0));
        assert!((rows[0].photon_gain - 0.6).abs() < 1e-4);
        for r in &rows {
            assert!((r.mse_gain - (r.mse_ghost_only - r.mse_combined)).abs() < 1e-15);
            assert!(r.mse_gain >= -1e-10);
        }
        let one = gain_surface(&a0, &f, &[1.0], &[0.0], &u, 1.0).unwrap();
        assert_eq!(one[0].photon_gain, 0.0);
        assert!(gain_surface(&a0, &f, &[], &[0.0], &u, 1.0).is_err());
    }
}
