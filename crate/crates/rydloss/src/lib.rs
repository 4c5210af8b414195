//! Rydberg-EIT polariton toolkit: single-excitation band structure,
//! saturated van der Waals interactions between dark-state polaritons,
//! golden-rule three-body loss rates, steady-state two- and three-photon
//! propagation through the medium, and time-tag correlation analysis
//! matching the experimental Hanbury Brown-Twiss pipeline.
//!
//! All internal quantities use µm, µs, and angular frequencies in rad/µs.
//! External interfaces (config files, CSV/JSON output) use ν = ω/2π in MHz.

pub mod correlator;
pub mod error;
pub mod fgr;
pub mod interactions;
pub mod medium;
pub mod output;
pub mod polaritons;
pub mod propagation;
pub mod quad;
pub mod units;

pub use error::{Error, Result};
pub use medium::{DerivedScales, MediumParams};
