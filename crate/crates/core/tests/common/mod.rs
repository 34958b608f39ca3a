//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dualghost::sim::MeasurementPair;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain two-pass sample mean and covariance (divisor N - 1).
pub fn two_pass_moments(samples: &[MeasurementPair]) -> (DVector<f64>, DMatrix<f64>) {
    let xs: Vec<DVector<f64>> = samples.iter().map(|s| s.stacked()).collect();
    let n = xs.len() as f64;
    let dim = xs[0].len();
    let mean = xs.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in &xs {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    (mean, cov / (n - 1.0))
}

/// Standard error of each sample-covariance entry from fourth moments.
pub fn covariance_se(samples: &[MeasurementPair], mean: &DVector<f64>) -> DMatrix<f64> {
    let dim = mean.len();
    let n = samples.len() as f64;
    let mut s1 = DMatrix::<f64>::zeros(dim, dim);
    let mut s2 = DMatrix::<f64>::zeros(dim, dim);
    for s in samples {
        let c = s.stacked() - mean;
        let outer = &c * c.transpose();
        s2 += outer.component_mul(&outer);
        s1 += outer;
    }
    s2.zip_map(&s1, |q, p| {
        (((q - p * p / n) / (n - 1.0)).max(0.0) / n).sqrt()
    })
}

/// Fraction of distinct (upper-triangle) entries where `|a - b| > 3 se`.
pub fn beyond_three_se(a: &DMatrix<f64>, b: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    let z = z_scores(a, b, se);
    z.iter().filter(|v| **v > 3.0).count() as f64 / z.len() as f64
}

/// Largest `|a - b| / se` over distinct entries.
pub fn max_z(a: &DMatrix<f64>, b: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    z_scores(a, b, se).into_iter().fold(0.0, f64::max)
}

fn z_scores(a: &DMatrix<f64>, b: &DMatrix<f64>, se: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            let d = (a[(i, j)] - b[(i, j)]).abs();
            out.push(if se[(i, j)] > 0.0 {
                d / se[(i, j)]
            } else if d > 1e-12 {
                f64::INFINITY
            } else {
                0.0
            });
        }
    }
    out
}

/// Draws `N(0, sigma)` vectors via a symmetric square root of `sigma`.
pub struct GaussianSampler {
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(sigma: &DMatrix<f64>) -> Self {
        let eig = sigma.clone().symmetric_eigen();
        let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let mut v = eig.eigenvectors.clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col *= sqrt[j];
        }
        Self { root: v }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.root.ncols(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        &self.root * z
    }
}
