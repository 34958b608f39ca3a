//! PGM (P5, 8-bit) and CSV readers and writers.
//!
//! Transmittance maps use the fixed mapping `0 ↔ 0.0`, `255 ↔ 1.0`. Count
//! images are scaled so the largest count maps to 255; the scale goes into a
//! `<stem>.scale.txt` sidecar next to the image.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use thiserror::Error;

use crate::imaging::TransmittanceMap;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> IoError + '_ {
    move |source| IoError::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn transmittance_to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn byte_to_transmittance(b: u8) -> f64 {
    b as f64 / 255.0
}

/// Writes an 8-bit binary graymap.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> IoResult<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(image_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_pgm(path: &Path) -> IoResult<(usize, usize, Vec<u8>)> {
    let img = ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(image_err(path))?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}

pub fn read_transmittance_pgm(path: &Path) -> IoResult<TransmittanceMap> {
    let (w, h, pixels) = read_pgm(path)?;
    TransmittanceMap::new(
        w,
        h,
        pixels.into_iter().map(byte_to_transmittance).collect(),
    )
    .map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_transmittance_pgm(path: &Path, f: &TransmittanceMap) -> IoResult<()> {
    let pixels: Vec<u8> = f
        .values()
        .iter()
        .map(|&v| transmittance_to_byte(v))
        .collect();
    write_pgm(path, f.width(), f.height(), &pixels)
}

/// Writes values in `[0, 1]` (clamped) as a graymap.
pub fn write_unit_image(path: &Path, width: usize, height: usize, values: &[f64]) -> IoResult<()> {
    let pixels: Vec<u8> = values.iter().map(|&v| transmittance_to_byte(v)).collect();
    write_pgm(path, width, height, &pixels)
}

/// Sidecar path holding the count scale of `image_path`.
pub fn scale_sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("scale.txt")
}

/// Writes a count image auto-scaled to its maximum plus the scale sidecar.
/// Returns the maximum count.
pub fn write_count_pgm(path: &Path, width: usize, height: usize, counts: &[u64]) -> IoResult<u64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let pixels: Vec<u8> = counts
        .iter()
        .map(|&c| {
            if max == 0 {
                0
            } else {
                ((c as f64 / max as f64) * 255.0).round() as u8
            }
        })
        .collect();
    write_pgm(path, width, height, &pixels)?;
    let counts_per_level = max as f64 / 255.0;
    let sidecar = scale_sidecar_path(path);
    let mut file = fs::File::create(&sidecar).map_err(io_err(&sidecar))?;
    writeln!(file, "max_count={max}\ncounts_per_level={counts_per_level}")
        .map_err(io_err(&sidecar))?;
    Ok(max)
}

/// Raw per-detector-pixel counts of both arms.
pub fn write_counts_csv(path: &Path, width: usize, xi0: &[u64], xi1: &[u64]) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["x", "y", "xi0", "xi1"])
        .map_err(csv_err(path))?;
    for (k, (a, b)) in xi0.iter().zip(xi1).enumerate() {
        w.write_record([
            (k % width).to_string(),
            (k / width).to_string(),
            a.to_string(),
            b.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Per-pixel values of an image estimate.
pub fn write_image_csv(path: &Path, width: usize, values: &[f64]) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["x", "y", "value"]).map_err(csv_err(path))?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([
            (k % width).to_string(),
            (k / width).to_string(),
            v.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Generic CSV table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Plain `key=value` manifest, one entry per line, in the given order.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> IoResult<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}
