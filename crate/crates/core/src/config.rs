//! Experiment configuration: sectioned TOML with unknown keys rejected.
//!
//! ```toml
//! [object]
//! source = "slit"        # built-in generator, or a path to a P5 PGM
//!
//! [geometry]
//! bin_factor = 3
//!
//! [acquisition]
//! n = 1.0
//! eta0 = 0.4
//! eta1 = 0.4
//! n_eps = 0.1
//!
//! [simulation]
//! frames = 1
//! seed = 42
//!
//! [reconstruction]
//! tau_list = [0.0, 0.1, 0.2]
//! basis = "haar"         # "haar" | "pixel" | "none"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every section and key is optional; missing values take the defaults shown.
//! `[gain]` and `[validate]` tune the `gain` and `validate` commands.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::imaging::{AcquisitionParams, DetectorGeometry, TransmittanceMap};
use crate::io::read_transmittance_pgm;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Haar,
    Pixel,
    None,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Haar => "haar",
            BasisKind::Pixel => "pixel",
            BasisKind::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectSection {
    pub source: String,
    /// Size of the built-in slit object.
    pub width: usize,
    pub height: usize,
    pub slit_width: usize,
    pub background: f64,
}

impl Default for ObjectSection {
    fn default() -> Self {
        Self {
            source: "slit".into(),
            width: 24,
            height: 24,
            slit_width: 4,
            background: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub bin_factor: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { bin_factor: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    pub n: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub n_eps: f64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            n: 1.0,
            eta0: 0.4,
            eta1: 0.4,
            n_eps: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub frames: usize,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            frames: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionSection {
    pub tau_list: Vec<f64>,
    pub basis: BasisKind,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        Self {
            tau_list: vec![0.0, 0.1, 0.2],
            basis: BasisKind::Haar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSection {
    /// Defaults to 0.05..=1.0 step 0.05.
    pub eta_grid: Option<Vec<f64>>,
    /// Defaults to 0..=1 step 0.05.
    pub noise_ratio_grid: Option<Vec<f64>>,
    /// All-ones object of this size, binned by `bin_factor`.
    pub width: usize,
    pub height: usize,
    pub bin_factor: usize,
    pub n_ref: f64,
}

impl Default for GainSection {
    fn default() -> Self {
        Self {
            eta_grid: None,
            noise_ratio_grid: None,
            width: 12,
            height: 12,
            bin_factor: 1,
            n_ref: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub frames: usize,
    pub seed: u64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            frames: 100_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub object: ObjectSection,
    pub geometry: GeometrySection,
    pub acquisition: AcquisitionSection,
    pub simulation: SimulationSection,
    pub reconstruction: ReconstructionSection,
    pub gain: GainSection,
    pub validate: ValidateSection,
    pub output: OutputSection,
    /// Directory relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params()?;
        if self.geometry.bin_factor == 0 {
            return Err(invalid("geometry.bin_factor", "must be at least 1"));
        }
        if self.simulation.frames == 0 {
            return Err(invalid("simulation.frames", "must be at least 1"));
        }
        for (k, &tau) in self.reconstruction.tau_list.iter().enumerate() {
            if !(0.0..1.0).contains(&tau) {
                return Err(invalid(
                    format!("reconstruction.tau_list[{k}]"),
                    format!("{tau} outside [0, 1)"),
                ));
            }
        }
        let o = &self.object;
        if !(0.0..=1.0).contains(&o.background) {
            return Err(invalid("object.background", "must be in [0, 1]"));
        }
        if o.slit_width > o.width {
            return Err(invalid("object.slit_width", "wider than the object"));
        }
        let (eta, ratio) = self.gain_grids();
        if eta.is_empty() || eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(invalid(
                "gain.eta_grid",
                "values must lie in (0, 1] and be non-empty",
            ));
        }
        if ratio.is_empty() || ratio.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(invalid(
                "gain.noise_ratio_grid",
                "values must be non-negative and non-empty",
            ));
        }
        if !(self.gain.n_ref > 0.0 && self.gain.n_ref.is_finite()) {
            return Err(invalid("gain.n_ref", "must be positive"));
        }
        if self.validate.frames < 2 {
            return Err(invalid("validate.frames", "must be at least 2"));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<AcquisitionParams, ConfigError> {
        let a = &self.acquisition;
        AcquisitionParams::new(a.n, a.eta0, a.eta1, a.n_eps).map_err(|e| match e {
            crate::Error::InvalidParameter { name, reason } => {
                invalid(format!("acquisition.{name}"), reason)
            }
            other => invalid("acquisition", other.to_string()),
        })
    }

    /// Loads or generates the object transmittance map.
    pub fn object(&self) -> Result<TransmittanceMap, ConfigError> {
        let o = &self.object;
        if o.source == "slit" {
            return TransmittanceMap::slit(o.width, o.height, o.slit_width, o.background)
                .map_err(|e| invalid("object", e.to_string()));
        }
        let path = self.resolve(Path::new(&o.source));
        if !path.exists() {
            return Err(invalid(
                "object.source",
                format!("{} does not exist", path.display()),
            ));
        }
        read_transmittance_pgm(&path).map_err(|e| invalid("object.source", e.to_string()))
    }

    pub fn geometry_for(&self, f: &TransmittanceMap) -> Result<DetectorGeometry, ConfigError> {
        DetectorGeometry::for_object(f.width(), f.height(), self.geometry.bin_factor)
            .map_err(|e| invalid("geometry.bin_factor", e.to_string()))
    }

    pub fn gain_grids(&self) -> (Vec<f64>, Vec<f64>) {
        let (eta, ratio) = crate::gain::default_grids();
        (
            self.gain.eta_grid.clone().unwrap_or(eta),
            self.gain.noise_ratio_grid.clone().unwrap_or(ratio),
        )
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}
