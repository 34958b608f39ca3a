//! Simulation and reconstruction for dual-arm quantum ghost imaging.
//!
//! An object-arm detector records the light transmitted by the object while a
//! coincidence circuit forms a ghost image in the reference arm. Both images
//! are combined by measurement reduction into a minimax estimate of the
//! transmittance map, and [`gain`] quantifies how many illumination photons
//! the object-arm image saves compared with using the ghost image alone.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gain;
pub mod imaging;
pub mod io;
pub mod noise;
pub mod reduction;
pub mod sim;

pub use error::{Error, Result};
pub use nalgebra;
