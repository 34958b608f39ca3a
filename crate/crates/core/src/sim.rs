//! Seeded Monte Carlo simulation of dual-arm photon-pair acquisition.
//!
//! Per object pixel the transmitted pair count is Poisson, the object-arm
//! detector keeps each photon with probability `η0`, and a coincidence is
//! registered when the partner photon is also detected (probability `η1`).
//! Coincidences are thus a binomial thinning of the object-arm detections.
//! Noise photons hit the object-arm detector only.
//!
//! Every frame draws from its own ChaCha stream keyed by `(seed, frame)`,
//! so results do not depend on evaluation order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::imaging::{
    noise_mean_per_detector_pixel, AcquisitionParams, DetectorGeometry, TransmittanceMap,
};

/// Counts from one acquisition: object-arm image and coincidence (ghost) image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementPair {
    pub xi0: Vec<u64>,
    pub xi1: Vec<u64>,
}

impl MeasurementPair {
    pub fn zeros(m: usize) -> Self {
        Self {
            xi0: vec![0; m],
            xi1: vec![0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.xi0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi0.is_empty()
    }

    /// `(ξ0; ξ1)` as a real vector of length `2m`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.len(),
            self.xi0.iter().chain(self.xi1.iter()).map(|&c| c as f64),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub f: TransmittanceMap,
    pub geom: DetectorGeometry,
    pub params: AcquisitionParams,
    pub frames: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.frames == 0 {
            return Err(Error::InvalidParameter {
                name: "frames",
                reason: "must be at least 1".into(),
            });
        }
        check_dim("object width", self.geom.object_width(), self.f.width())?;
        check_dim("object height", self.geom.object_height(), self.f.height())
    }
}

fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng);
    draw as u64
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p).expect("p in (0, 1)").sample(rng)
}

/// Simulates frame `frame_index` of the acquisition described by `config`.
pub fn simulate_frame(config: &SimulationConfig, frame_index: u64) -> MeasurementPair {
    let p = &config.params;
    let geom = &config.geom;
    let mut rng = frame_rng(config.seed, frame_index);
    let mut out = MeasurementPair::zeros(geom.detector_pixels());

    for (i, &fi) in config.f.values().iter().enumerate() {
        let pairs = poisson(&mut rng, p.n * fi);
        let detected = binomial(&mut rng, pairs, p.eta0);
        let coincident = binomial(&mut rng, detected, p.eta1);
        debug_assert!(coincident <= detected && detected <= pairs);
        let d = geom.detector_index(i);
        out.xi0[d] += detected;
        out.xi1[d] += coincident;
    }

    let noise_mean = noise_mean_per_detector_pixel(geom, p);
    if noise_mean > 0.0 {
        for count in out.xi0.iter_mut() {
            *count += poisson(&mut rng, noise_mean);
        }
    }
    out
}

/// All frames of the acquisition, identical to sequential evaluation.
pub fn simulate_acquisition(config: &SimulationConfig) -> Result<Vec<MeasurementPair>> {
    config.validate()?;
    Ok((0..config.frames as u64)
        .into_par_iter()
        .map(|k| simulate_frame(config, k))
        .collect())
}

/// Frame-wise sum of counts, i.e. the accumulated images.
pub fn accumulate(samples: &[MeasurementPair]) -> Result<MeasurementPair> {
    let first = samples.first().ok_or(Error::InsufficientSamples(0))?;
    let mut total = MeasurementPair::zeros(first.len());
    for s in samples {
        check_dim("measurement pair length", total.len(), s.len())?;
        for (t, c) in total.xi0.iter_mut().zip(&s.xi0) {
            *t += c;
        }
        for (t, c) in total.xi1.iter_mut().zip(&s.xi1) {
            *t += c;
        }
    }
    Ok(total)
}

/// Sample mean and unbiased sample covariance (divisor `N - 1`) of the
/// stacked vectors `(ξ0; ξ1)`, computed in a single Welford pass.
pub fn empirical_moments(samples: &[MeasurementPair]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples(samples.len()));
    }
    let dim = 2 * samples[0].len();
    let mut mean = DVector::zeros(dim);
    let mut comoment = DMatrix::zeros(dim, dim);
    let mut delta = DVector::zeros(dim);
    for (k, s) in samples.iter().enumerate() {
        check_dim("measurement pair length", dim, 2 * s.len())?;
        let x = s.stacked();
        delta.copy_from(&x);
        delta -= &mean;
        mean.axpy(1.0 / (k + 1) as f64, &delta, 1.0);
        // comoment += (x - old_mean)(x - new_mean)^T
        let after = &x - &mean;
        comoment.ger(1.0, &delta, &after, 1.0);
    }
    let cov = comoment / (samples.len() - 1) as f64;
    Ok((mean, (&cov + cov.transpose()) * 0.5))
}

/// Standard errors of the entries of the sample covariance, estimated from
/// the fourth moments: `sqrt(Var[(x_i - μ_i)(x_j - μ_j)] / N)`.
pub fn covariance_standard_errors(
    samples: &[MeasurementPair],
    mean: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(n));
    }
    let dim = mean.len();
    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    let mut sum_sq = DMatrix::<f64>::zeros(dim, dim);
    for s in samples {
        let c = s.stacked() - mean;
        for j in 0..dim {
            for i in 0..dim {
                let p = c[i] * c[j];
                sum[(i, j)] += p;
                sum_sq[(i, j)] += p * p;
            }
        }
    }
    let nf = n as f64;
    Ok(sum_sq.zip_map(&sum, |sq, s| {
        let var = (sq - s * s / nf) / (nf - 1.0);
        (var.max(0.0) / nf).sqrt()
    }))
}

/// Per-pixel signal-to-noise ratio `mean / std` of each arm across frames.
pub fn per_pixel_snr(samples: &[MeasurementPair]) -> Result<(DVector<f64>, DVector<f64>)> {
    let (mean, cov) = empirical_moments(samples)?;
    let m = mean.len() / 2;
    let snr = |k: usize| {
        let sd = cov[(k, k)].sqrt();
        if sd > 0.0 {
            mean[k] / sd
        } else {
            0.0
        }
    };
    Ok((
        DVector::from_iterator(m, (0..m).map(snr)),
        DVector::from_iterator(m, (m..2 * m).map(snr)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(
        f: TransmittanceMap,
        bin: usize,
        p: AcquisitionParams,
        frames: usize,
        seed: u64,
    ) -> SimulationConfig {
        let geom = DetectorGeometry::for_object(f.width(), f.height(), bin).unwrap();
        SimulationConfig {
            f,
            geom,
            params: p,
            frames,
            seed,
        }
    }

    #[test]
    fn opaque_object_without_noise_is_dark() {
        let f = TransmittanceMap::constant(6, 6, 0.0).unwrap();
        let c = config(
            f,
            3,
            AcquisitionParams::new(5.0, 0.4, 0.4, 0.0).unwrap(),
            50,
            1,
        );
        for pair in simulate_acquisition(&c).unwrap() {
            assert!(pair.xi0.iter().chain(&pair.xi1).all(|&v| v == 0));
        }
    }

    #[test]
    fn no_object_arm_detection_means_no_coincidences() {
        let f = TransmittanceMap::constant(6, 6, 1.0).unwrap();
        let c = config(
            f,
            3,
            AcquisitionParams::new(5.0, 0.0, 0.9, 0.3).unwrap(),
            50,
            2,
        );
        let frames = simulate_acquisition(&c).unwrap();
        assert!(frames.iter().all(|p| p.xi1.iter().all(|&v| v == 0)));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let f = TransmittanceMap::slit(6, 6, 2, 0.1).unwrap();
        let p = AcquisitionParams::new(1.0, 0.4, 0.4, 0.1).unwrap();
        let a = simulate_acquisition(&config(f.clone(), 3, p, 20, 7)).unwrap();
        let b = simulate_acquisition(&config(f.clone(), 3, p, 20, 7)).unwrap();
        let c = simulate_acquisition(&config(f, 3, p, 20, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn frames_match_sequential_evaluation() {
        let f = TransmittanceMap::constant(4, 4, 0.7).unwrap();
        let c = config(
            f,
            2,
            AcquisitionParams::new(2.0, 0.6, 0.5, 0.2).unwrap(),
            30,
            11,
        );
        let par = simulate_acquisition(&c).unwrap();
        let seq: Vec<_> = (0..30).map(|k| simulate_frame(&c, k)).collect();
        assert_eq!(par, seq);
        // any single frame can be regenerated on its own
        assert_eq!(simulate_frame(&c, 17), par[17]);
    }

    #[test]
    fn moments_two_point_formula() {
        let s = vec![
            MeasurementPair {
                xi0: vec![0],
                xi1: vec![0],
            },
            MeasurementPair {
                xi0: vec![2],
                xi1: vec![2],
            },
        ];
        let (mean, cov) = empirical_moments(&s).unwrap();
        assert_eq!(mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(cov, DMatrix::from_element(2, 2, 2.0));
    }

    #[test]
    fn moments_identical_samples() {
        let p = MeasurementPair {
            xi0: vec![3, 1],
            xi1: vec![2, 0],
        };
        let (_, cov) = empirical_moments(&[p.clone(), p]).unwrap();
        assert_eq!(cov, DMatrix::zeros(4, 4));
    }

    #[test]
    fn moments_need_two_samples() {
        assert_eq!(empirical_moments(&[]), Err(Error::InsufficientSamples(0)));
        let p = MeasurementPair::zeros(1);
        assert_eq!(empirical_moments(&[p]), Err(Error::InsufficientSamples(1)));
    }

    #[test]
    fn accumulate_sums_frames() {
        let s = vec![
            MeasurementPair {
                xi0: vec![1, 2],
                xi1: vec![0, 1],
            },
            MeasurementPair {
                xi0: vec![3, 0],
                xi1: vec![1, 0],
            },
        ];
        let total = accumulate(&s).unwrap();
        assert_eq!(total.xi0, vec![4, 2]);
        assert_eq!(total.xi1, vec![1, 1]);
    }

    #[test]
    fn invalid_config_rejected() {
        let f = TransmittanceMap::constant(6, 6, 1.0).unwrap();
        let mut c = config(
            f,
            3,
            AcquisitionParams::new(1.0, 0.4, 0.4, 0.1).unwrap(),
            0,
            0,
        );
        assert!(simulate_acquisition(&c).is_err());
        c.frames = 1;
        c.geom = DetectorGeometry::for_object(9, 9, 3).unwrap();
        assert!(simulate_acquisition(&c).is_err());
    }
}
