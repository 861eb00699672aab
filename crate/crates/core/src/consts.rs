//! Physical constants: SI values and rubidium-87 line data used everywhere.

/// Boltzmann constant [J/K].
pub const KB: f64 = 1.380649e-23;

/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054571817e-34;

/// Speed of light in vacuum [m/s].
pub const C: f64 = 2.99792458e8;

/// Bohr magneton [J/T].
pub const MU_B: f64 = 9.2740100783e-24;

/// Mass of one rubidium-87 atom [kg].
pub const M_RB87: f64 = 1.44316060e-25;

/// D1 line (5S1/2 -> 5P1/2) vacuum wavelength [m].
pub const LAMBDA_D1: f64 = 794.98e-9;

/// D2 line (5S1/2 -> 5P3/2) vacuum wavelength [m].
pub const LAMBDA_D2: f64 = 780.24e-9;

/// D1 natural linewidth [rad/s] (2 pi x 5.750 MHz).
pub const GAMMA_D1: f64 = 36.129e6;

/// D2 natural linewidth [rad/s] (2 pi x 6.067 MHz).
pub const GAMMA_D2: f64 = 38.117e6;

/// Ground-state hyperfine splitting [Hz].
pub const HF_SPLITTING: f64 = 6.834_682_610_904_290e9;

/// Angular frequency of a vacuum wavelength [rad/s].
pub fn angular_freq(wavelength: f64) -> f64 {
    2.0 * std::f64::consts::PI * C / wavelength
}
