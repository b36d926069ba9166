//! Crafting, detection, and evasion of image-scaling attacks.
//!
//! Downscaling algorithms read only a sparse subset of source pixels. An
//! attacker who rewrites exactly those pixels controls the scaled output
//! while the full-resolution image still looks untouched. This crate builds
//! the whole loop around that weakness:
//!
//! - scaling operators with explicit sampling structure ([`scaling`]),
//! - attack crafting for global, local (backdoor) and overlay targets
//!   ([`attack`]),
//! - frequency- and spatial-domain detectors ([`freq`], [`spatial`]),
//! - threshold calibration, grid search and ensembles ([`calibrate`]),
//! - adaptive counterattacks against the frequency detectors ([`adaptive`]),
//! - a deterministic synthetic corpus generator ([`corpus`]).

pub mod adaptive;
pub mod attack;
pub mod calibrate;
pub mod corpus;
pub mod detectors;
pub mod error;
pub mod filters;
pub mod freq;
pub mod image;
pub mod io;
pub mod metrics;
pub mod scaling;
pub mod spatial;

pub use error::{Error, Result};
pub use image::RasterImage;
pub use scaling::{ScaleAlgorithm, ScaleSpec};
