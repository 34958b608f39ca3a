use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue cutoff used for every inversion in the crate.
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Moore–Penrose pseudo-inverse of a symmetric matrix via eigendecomposition.
///
/// Eigenvalues with `|λ| < rtol · max|λ|` are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    assert!(m.is_square(), "pseudo_inverse expects a square matrix");
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if is_diagonal(m) {
        let d = m.diagonal();
        let cutoff = rtol * d.amax();
        return DMatrix::from_diagonal(&d.map(|v| invert(v, cutoff)));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let cutoff = rtol * eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|v| invert(v, cutoff));
    let mut scaled = eig.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= inv[j];
    }
    let out = scaled * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

fn invert(v: f64, cutoff: f64) -> f64 {
    if v.abs() > 0.0 && v.abs() >= cutoff {
        1.0 / v
    } else {
        0.0
    }
}

pub(crate) fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.iter()
            .enumerate()
            .all(|(k, &v)| v == 0.0 || k % m.nrows() == k / m.nrows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(pseudo_inverse(&i3, DEFAULT_RTOL), i3);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        assert_eq!(pseudo_inverse(&d, DEFAULT_RTOL), expected);
    }

    #[test]
    fn zero_matrix_maps_to_zero() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(pseudo_inverse(&z, DEFAULT_RTOL), z);
    }

    #[test]
    fn tiny_eigenvalues_are_cut() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
        let p = pseudo_inverse(&d, DEFAULT_RTOL);
        assert_eq!(p[(1, 1)], 0.0);
    }

    /// Random PSD matrices of reduced rank checked against the four
    /// Moore–Penrose conditions.
    #[test]
    fn moore_penrose_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for rank in [5usize, 3, 1] {
            let x = DMatrix::from_fn(5, rank, |_, _| rng.random_range(-1.0..1.0));
            let m = &x * x.transpose();
            let p = pseudo_inverse(&m, DEFAULT_RTOL);
            let scale = m.norm();
            assert!((&m * &p * &m - &m).norm() <= 1e-8 * scale);
            assert!((&p * &m * &p - &p).norm() <= 1e-8 * p.norm());
            let mp = &m * &p;
            assert!((&mp - mp.transpose()).norm() <= 1e-8);
            let pm = &p * &m;
            assert!((&pm - pm.transpose()).norm() <= 1e-8);
        }
    }

    #[test]
    fn dense_and_diagonal_paths_agree() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1e-13, 0.25, 3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // rotate so the dense path is taken, then rotate back
        let q = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let rotated = &q * &d * q.transpose();
        let back = q.transpose() * pseudo_inverse(&rotated, DEFAULT_RTOL) * &q;
        assert!((back - pseudo_inverse(&d, DEFAULT_RTOL)).abs().max() < 1e-10);
    }
}
