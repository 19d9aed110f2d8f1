//! Unit conversions.
//!
//! Internally time is in picoseconds, angular frequencies in rad/ps and
//! rates in 1/ps. Configuration uses laboratory units: level splittings and
//! detunings as ordinary frequencies (GHz, THz), relaxation and dephasing
//! rates as inverse times (1/ns, or 10⁹ s⁻¹ written as "GHz").

use std::f64::consts::TAU;

/// Ordinary frequency in GHz to angular frequency in rad/ps.
#[inline]
pub fn ghz_to_rad_per_ps(f_ghz: f64) -> f64 {
    TAU * f_ghz * 1e-3
}

/// Ordinary frequency in THz to angular frequency in rad/ps.
#[inline]
pub fn thz_to_rad_per_ps(f_thz: f64) -> f64 {
    TAU * f_thz
}

/// Rate in 1/ns to 1/ps.
#[inline]
pub fn per_ns_to_per_ps(rate: f64) -> f64 {
    rate * 1e-3
}

/// Rate quoted in units of 10⁹ s⁻¹ to 1/ps. No factor of 2π.
#[inline]
pub fn ghz_rate_to_per_ps(rate: f64) -> f64 {
    rate * 1e-3
}

/// Rate quoted in units of 10¹² s⁻¹ to 1/ps.
#[inline]
pub fn thz_rate_to_per_ps(rate: f64) -> f64 {
    rate
}

/// rad/s to rad/ps.
#[inline]
pub fn per_s_to_per_ps(x: f64) -> f64 {
    x * 1e-12
}

#[inline]
pub fn per_ps_to_per_s(x: f64) -> f64 {
    x * 1e12
}

const PLANCK: f64 = 6.626_070_15e-34;
const BOLTZMANN: f64 = 1.380_649e-23;

/// e^(hν/kT) for a splitting ν in GHz at temperature T in kelvin.
pub fn boltzmann_ratio(splitting_ghz: f64, temperature_k: f64) -> f64 {
    (PLANCK * splitting_ghz * 1e9 / (BOLTZMANN * temperature_k)).exp()
}
