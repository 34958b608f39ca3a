//! Config-driven experiments behind the command-line subcommands.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};

use crate::config::{BasisKind, ExperimentConfig};
use crate::gain::{self, GainPoint};
use crate::imaging::{
    build_binning_operator, forward_mean, AcquisitionParams, DetectorGeometry, MeasurementMatrix,
    TransmittanceMap,
};
use crate::io;
use crate::noise::{covariance_degraded, noise_photon_covariance};
use crate::reduction::{LinearReducer, ReconstructionPipeline, ReductionProblem, SparsityBasis};
use crate::sim::{
    accumulate, covariance_standard_errors, empirical_moments, simulate_acquisition,
    MeasurementPair, SimulationConfig,
};

/// Transmittance at or above which a pixel counts as part of the signal region.
pub const SIGNAL_THRESHOLD: f64 = 0.5;

/// Which measurements feed the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Object-arm image and ghost image.
    Combined,
    /// Ghost image only.
    GhostOnly,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Combined, Variant::GhostOnly];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Combined => "red",
            Variant::GhostOnly => "red-s",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionRecord {
    pub variant: Variant,
    pub tau: f64,
    pub estimate: DVector<f64>,
    /// `‖estimate - f‖²`.
    pub squared_error: f64,
    /// Squared error restricted to pixels with `f ≥ SIGNAL_THRESHOLD`.
    pub signal_region_error: f64,
    pub zeroed: usize,
    /// Analytic error of the linear stage (`+∞` when not estimable).
    pub analytic_mse: f64,
}

/// Simulation plus both reconstruction variants, with all problem-dependent
/// factorizations done once so many seeds can be processed cheaply.
pub struct Experiment {
    pub f: TransmittanceMap,
    pub geom: DetectorGeometry,
    pub a0: MeasurementMatrix,
    pub params: AcquisitionParams,
    pub frames: usize,
    pub taus: Vec<f64>,
    pipelines: Vec<(Variant, ReconstructionPipeline)>,
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let f = cfg.object()?;
        let geom = cfg.geometry_for(&f)?;
        let params = cfg.params()?;
        Self::from_parts(
            f,
            geom,
            params,
            cfg.simulation.frames,
            cfg.reconstruction.tau_list.clone(),
            cfg.reconstruction.basis,
        )
    }

    pub fn from_parts(
        f: TransmittanceMap,
        geom: DetectorGeometry,
        params: AcquisitionParams,
        frames: usize,
        taus: Vec<f64>,
        basis: BasisKind,
    ) -> Result<Self> {
        let a0 = build_binning_operator(f.width(), f.height(), geom.bin_factor)?;
        // the reduction sees the frame-summed counts
        let total = params.accumulated(frames);
        let basis = match basis {
            BasisKind::Haar => Some(SparsityBasis::haar(f.width(), f.height())),
            BasisKind::Pixel => Some(SparsityBasis::pixel(f.len())),
            BasisKind::None => None,
        };
        let mut pipelines = Vec::new();
        for variant in Variant::ALL {
            let problem = match variant {
                Variant::Combined => ReductionProblem::combined(&a0, &f, &total)?,
                Variant::GhostOnly => ReductionProblem::ghost_only(&a0, &f, &total)?,
            };
            pipelines.push((
                variant,
                ReconstructionPipeline::new(&problem, basis.clone())?,
            ));
        }
        Ok(Self {
            f,
            geom,
            a0,
            params,
            frames,
            taus,
            pipelines,
        })
    }

    pub fn simulation_config(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            f: self.f.clone(),
            geom: self.geom,
            params: self.params,
            frames: self.frames,
            seed,
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<Vec<MeasurementPair>> {
        Ok(simulate_acquisition(&self.simulation_config(seed))?)
    }

    pub fn reconstruct(&self, total: &MeasurementPair) -> Result<Vec<ReconstructionRecord>> {
        let mut out = Vec::new();
        for variant in Variant::ALL {
            for &tau in &self.taus {
                out.push(self.reconstruct_variant(total, variant, tau)?);
            }
        }
        Ok(out)
    }

    /// Single reconstruction; `tau` need not be one of the configured values.
    pub fn reconstruct_variant(
        &self,
        total: &MeasurementPair,
        variant: Variant,
        tau: f64,
    ) -> Result<ReconstructionRecord> {
        anyhow::ensure!(
            total.len() == self.geom.detector_pixels(),
            "measurement has {} detector pixels, expected {}",
            total.len(),
            self.geom.detector_pixels()
        );
        let pipeline = self
            .pipelines
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, p)| p)
            .expect("pipeline for every variant");
        let xi = match variant {
            Variant::Combined => total.stacked(),
            Variant::GhostOnly => {
                DVector::from_iterator(total.len(), total.xi1.iter().map(|&c| c as f64))
            }
        };
        let truth = self.f.to_vector();
        let run = pipeline.run(&xi, tau)?;
        let diff = &run.estimate - &truth;
        let signal_region_error = diff
            .iter()
            .zip(truth.iter())
            .filter(|(_, &t)| t >= SIGNAL_THRESHOLD)
            .map(|(d, _)| d * d)
            .sum();
        Ok(ReconstructionRecord {
            variant,
            tau,
            squared_error: diff.norm_squared(),
            signal_region_error,
            zeroed: run.zeroed,
            analytic_mse: pipeline.reducer().mse(),
            estimate: run.estimate,
        })
    }

    /// Simulates with `seed` and reconstructs every variant and `τ`.
    pub fn run(&self, seed: u64) -> Result<Vec<ReconstructionRecord>> {
        let frames = self.simulate(seed)?;
        self.reconstruct(&accumulate(&frames)?)
    }

    /// Accumulated ghost image upsampled to the object grid and divided by
    /// its maximum.
    pub fn normalized_ghost_image(&self, total: &MeasurementPair) -> DVector<f64> {
        let max = total.xi1.iter().copied().max().unwrap_or(0).max(1) as f64;
        DVector::from_iterator(
            self.f.len(),
            (0..self.f.len()).map(|i| total.xi1[self.geom.detector_index(i)] as f64 / max),
        )
    }
}

fn manifest_entries(cfg: &ExperimentConfig, command: &str, seed: u64) -> Vec<(String, String)> {
    let a = &cfg.acquisition;
    let o = &cfg.object;
    let taus: Vec<String> = cfg
        .reconstruction
        .tau_list
        .iter()
        .map(|t| t.to_string())
        .collect();
    [
        ("tool", format!("dualghost {}", env!("CARGO_PKG_VERSION"))),
        ("command", command.to_string()),
        ("object.source", o.source.clone()),
        ("object.width", o.width.to_string()),
        ("object.height", o.height.to_string()),
        ("object.slit_width", o.slit_width.to_string()),
        ("object.background", o.background.to_string()),
        ("geometry.bin_factor", cfg.geometry.bin_factor.to_string()),
        ("acquisition.n", a.n.to_string()),
        ("acquisition.eta0", a.eta0.to_string()),
        ("acquisition.eta1", a.eta1.to_string()),
        ("acquisition.n_eps", a.n_eps.to_string()),
        ("simulation.frames", cfg.simulation.frames.to_string()),
        ("simulation.seed", seed.to_string()),
        ("reconstruction.tau_list", taus.join(",")),
        ("reconstruction.basis", cfg.reconstruction.basis.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub struct SimulateOutput {
    pub total: MeasurementPair,
    pub frames: Vec<MeasurementPair>,
}

/// Writes the accumulated object-arm and ghost images, raw counts and a manifest.
pub fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<SimulateOutput> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let f = cfg.object()?;
    let geom = cfg.geometry_for(&f)?;
    let sim = SimulationConfig {
        f: f.clone(),
        geom,
        params: cfg.params()?,
        frames: cfg.simulation.frames,
        seed,
    };
    let frames = simulate_acquisition(&sim)?;
    let total = accumulate(&frames)?;
    let (w, h) = (geom.detector_width, geom.detector_height);
    io::write_transmittance_pgm(&out.join("truth.pgm"), &f)?;
    io::write_count_pgm(&out.join("xi0.pgm"), w, h, &total.xi0)?;
    io::write_count_pgm(&out.join("xi1.pgm"), w, h, &total.xi1)?;
    io::write_counts_csv(&out.join("counts.csv"), w, &total.xi0, &total.xi1)?;
    io::write_manifest(
        &out.join("manifest.txt"),
        &manifest_entries(cfg, "simulate", seed),
    )?;
    Ok(SimulateOutput { total, frames })
}

fn tau_tag(tau: f64) -> String {
    format!("{tau:.2}")
}

/// Reconstructs the simulated acquisition for every `τ` and both variants.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
) -> Result<Vec<ReconstructionRecord>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let exp = Experiment::new(cfg)?;
    let total = accumulate(&exp.simulate(seed)?)?;
    let records = exp.reconstruct(&total)?;
    let (w, h) = (exp.f.width(), exp.f.height());
    io::write_transmittance_pgm(&out.join("truth.pgm"), &exp.f)?;
    io::write_unit_image(
        &out.join("ghost_normalized.pgm"),
        w,
        h,
        exp.normalized_ghost_image(&total).as_slice(),
    )?;
    let mut rows = Vec::new();
    for r in &records {
        let stem = format!("estimate_{}_tau{}", r.variant.label(), tau_tag(r.tau));
        io::write_unit_image(
            &out.join(format!("{stem}.pgm")),
            w,
            h,
            r.estimate.as_slice(),
        )?;
        io::write_image_csv(&out.join(format!("{stem}.csv")), w, r.estimate.as_slice())?;
        rows.push(vec![
            r.variant.label().to_string(),
            r.tau.to_string(),
            r.squared_error.to_string(),
            (r.squared_error / exp.f.len() as f64).to_string(),
            r.signal_region_error.to_string(),
            r.zeroed.to_string(),
            r.analytic_mse.to_string(),
        ]);
    }
    io::write_table(
        &out.join("summary.csv"),
        &[
            "variant",
            "tau",
            "squared_error",
            "mean_squared_error",
            "signal_region_error",
            "zeroed",
            "analytic_mse",
        ],
        &rows,
    )?;
    io::write_manifest(
        &out.join("manifest.txt"),
        &manifest_entries(cfg, "reconstruct", seed),
    )?;
    Ok(records)
}

/// Photon-gain surface over the configured grids.
pub fn gain_table(cfg: &ExperimentConfig) -> Result<Vec<GainPoint>> {
    let g = &cfg.gain;
    let f = TransmittanceMap::constant(g.width, g.height, 1.0)?;
    let a0 = build_binning_operator(g.width, g.height, g.bin_factor)?;
    let u = DMatrix::identity(f.len(), f.len());
    let (eta, ratio) = cfg.gain_grids();
    Ok(gain::gain_surface(&a0, &f, &eta, &ratio, &u, g.n_ref)?)
}

pub const GAIN_CSV_HEADER: [&str; 6] = [
    "eta",
    "noise_ratio",
    "mse_ghost",
    "mse_combined",
    "mse_gain",
    "photon_gain",
];

pub fn cmd_gain(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<GainPoint>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let table = gain_table(cfg)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|p| {
            [
                p.eta,
                p.noise_ratio,
                p.mse_ghost_only,
                p.mse_combined,
                p.mse_gain,
                p.photon_gain,
            ]
            .iter()
            .map(|v| v.to_string())
            .collect()
        })
        .collect();
    io::write_table(&out.join("gain_surface.csv"), &GAIN_CSV_HEADER, &rows)?;
    let g = &cfg.gain;
    let (eta, ratio) = cfg.gain_grids();
    let entries = [
        ("tool", format!("dualghost {}", env!("CARGO_PKG_VERSION"))),
        ("command", "gain".to_string()),
        ("gain.object", format!("ones {}x{}", g.width, g.height)),
        ("gain.bin_factor", g.bin_factor.to_string()),
        ("gain.n_ref", g.n_ref.to_string()),
        ("gain.eta_points", eta.len().to_string()),
        ("gain.noise_ratio_points", ratio.len().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect::<Vec<_>>();
    io::write_manifest(&out.join("manifest.txt"), &entries)?;
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub measured: String,
    pub expected: String,
    pub tolerance: String,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "[{}] {}: measured {} expected {} tolerance {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.expected,
                c.tolerance
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!(
            "{} checks, {} failed\n",
            self.checks.len(),
            failed
        ));
        s
    }
}

/// Fraction of distinct (upper-triangle) entries where
/// `|empirical - analytic| > 3 SE`.
pub fn covariance_exceedance(
    empirical: &DMatrix<f64>,
    analytic: &DMatrix<f64>,
    standard_errors: &DMatrix<f64>,
) -> f64 {
    let n = empirical.nrows();
    let mut exceed = 0;
    for j in 0..n {
        for i in 0..=j {
            let d = (empirical[(i, j)] - analytic[(i, j)]).abs();
            if d > 3.0 * standard_errors[(i, j)] + 1e-12 {
                exceed += 1;
            }
        }
    }
    exceed as f64 / (n * (n + 1) / 2) as f64
}

/// Runs the oracle suite. `perturb_cov` scales the analytic covariance by
/// `1 + perturb_cov` before comparison, as a self-test of the validator.
pub fn cmd_validate(cfg: &ExperimentConfig, perturb_cov: f64) -> Result<ValidationReport> {
    let params = cfg.params()?;
    let mut checks = Vec::new();

    // Monte Carlo against the analytic covariance and mean, 4 detector pixels.
    let f = TransmittanceMap::from_fn(4, 4, |x, y| 0.2 + 0.8 * ((x + 2 * y) % 5) as f64 / 4.0)?;
    let a0 = build_binning_operator(4, 4, 2)?;
    let geom = *a0.geometry().expect("binning geometry");
    let sim = SimulationConfig {
        f: f.clone(),
        geom,
        params,
        frames: cfg.validate.frames,
        seed: cfg.validate.seed,
    };
    let samples = simulate_acquisition(&sim)?;
    let (mean, cov) = empirical_moments(&samples)?;
    let se = covariance_standard_errors(&samples, &mean)?;
    let analytic = covariance_degraded(
        &a0,
        &f,
        &params,
        &noise_photon_covariance(params.n_eps, &geom),
    )?
    .into_matrix()
        * (1.0 + perturb_cov);
    let frac = covariance_exceedance(&cov, &analytic, &se);
    checks.push(Check {
        name: "covariance vs Monte Carlo (fraction of entries beyond 3 SE)".into(),
        measured: format!("{frac:.4}"),
        expected: "0".into(),
        tolerance: "<= 0.05".into(),
        passed: frac <= 0.05,
    });

    let (m0, m1) = forward_mean(&a0, &f, &params)?;
    let expected_mean: Vec<f64> = m0.iter().chain(m1.iter()).copied().collect();
    let n = samples.len() as f64;
    let mean_exceed = expected_mean
        .iter()
        .enumerate()
        .filter(|(k, &e)| (mean[*k] - e).abs() > 3.0 * (cov[(*k, *k)] / n).sqrt() + 1e-12)
        .count();
    let mean_frac = mean_exceed as f64 / expected_mean.len() as f64;
    checks.push(Check {
        name: "forward mean vs Monte Carlo (fraction beyond 3 SE)".into(),
        measured: format!("{mean_frac:.4}"),
        expected: "0".into(),
        tolerance: "<= 0.05".into(),
        passed: mean_frac <= 0.05,
    });

    // Closed-form errors against the generic reduction path.
    let f6 = TransmittanceMap::from_fn(6, 6, |x, y| 0.05 + 0.95 * ((x * y) % 4) as f64 / 3.0)?;
    let a6 = build_binning_operator(6, 6, 1)?;
    let u = DMatrix::identity(36, 36);
    let eps6 = noise_photon_covariance(params.n_eps, a6.geometry().expect("binning geometry"));
    let ghost = gain::mse_ghost_only(&a6, &f6, &params, &u)?;
    let combined = gain::mse_combined(&a6, &f6, &params, &eps6, &u)?;
    let rg = LinearReducer::new(&ReductionProblem::ghost_only(&a6, &f6, &params)?).mse();
    let rc = LinearReducer::new(&ReductionProblem::combined(&a6, &f6, &params)?).mse();
    for (name, closed, generic) in [("ghost-only", ghost, rg), ("combined", combined, rc)] {
        let rel = if closed == generic {
            0.0
        } else {
            (closed - generic).abs() / generic.abs()
        };
        checks.push(Check {
            name: format!("{name} error: closed form vs reduction"),
            measured: format!("{closed:.10e}"),
            expected: format!("{generic:.10e}"),
            tolerance: "1e-8 relative".into(),
            passed: rel <= 1e-8 || (closed.is_infinite() && generic.is_infinite()),
        });
    }

    let eta = if params.eta0 > 0.0 { params.eta0 } else { 0.4 };
    let photon = gain::photon_number_gain(&a6, &f6, eta, 0.0, &u, 1.0)?;
    checks.push(Check {
        name: format!("photon gain at eta={eta}, no noise photons"),
        measured: format!("{photon:.6}"),
        expected: format!("{:.6}", 1.0 - eta),
        tolerance: "1e-3".into(),
        passed: (photon - (1.0 - eta)).abs() <= 1e-3,
    });

    let unit = AcquisitionParams {
        eta0: 1.0,
        eta1: 1.0,
        ..params
    };
    let ug = gain::mse_ghost_only(&a6, &f6, &unit, &u)?;
    let uc = gain::mse_combined(&a6, &f6, &unit, &eps6, &u)?;
    checks.push(Check {
        name: "unit efficiency: object-arm image adds nothing".into(),
        measured: format!("{uc:.10e}"),
        expected: format!("{ug:.10e}"),
        tolerance: "1e-10 relative".into(),
        passed: (uc - ug).abs() <= 1e-10 * ug,
    });

    Ok(ValidationReport { checks })
}

pub fn write_validation_report(path: &Path, report: &ValidationReport) -> Result<()> {
    fs::write(path, report.render()).with_context(|| format!("writing {}", path.display()))
}
