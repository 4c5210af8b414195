//! Unit conventions and conversions.
//!
//! Internal units are µm for length, µs for time, and rad/µs for (angular)
//! frequencies. Config files and CLI flags always specify frequencies as
//! ν = ω/2π in MHz; 1 MHz maps to 2π rad/µs, so the conversion is a pure
//! factor of 2π and round-trips at machine precision.

use std::f64::consts::TAU;

/// Speed of light in µm/µs (= 299792458 m/s).
pub const LIGHT_SPEED: f64 = 2.99792458e8;

/// ω [rad/µs] from ν [MHz].
#[inline]
pub fn mhz_to_angular(nu_mhz: f64) -> f64 {
    TAU * nu_mhz
}

/// ν [MHz] from ω [rad/µs].
#[inline]
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / TAU
}
