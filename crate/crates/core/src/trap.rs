//! Dipole-trap and thermal-cloud properties of the stored ensemble.
//!
//! The trap is a single focused Gaussian beam, red-detuned from both D lines.
//! Depth and scattering rate follow the rotating-wave two-line form with the
//! D1/D2 lines weighted 1/3 and 2/3 by their multiplicities; trap frequencies
//! come from the harmonic expansion of the Gaussian focus, and the cloud
//! geometry from equipartition at the ensemble temperature.

use crate::consts;
use crate::scalar::Real;
use crate::{ModelError, Result};

/// Trapping-beam parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig<R: Real = f64> {
    /// Trap-laser vacuum wavelength [m]; must lie red of both D lines.
    pub wavelength: R,
    /// Beam power [W].
    pub power: R,
    /// 1/e^2 intensity waist radius at the focus [m].
    pub waist: R,
    /// Static bias field applied during storage [T].
    pub bias_field: R,
}

/// Trapped-cloud parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig<R: Real = f64> {
    /// Number of trapped atoms.
    pub atom_count: u64,
    /// Ensemble temperature [K].
    pub temperature: R,
    /// F = 1 Zeeman populations in m_F = (-1, 0, +1) order; nonnegative, sum 1.
    pub zeeman_populations: [R; 3],
}

/// Write/Stokes beam geometry at the ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry<R: Real = f64> {
    /// Write-laser vacuum wavelength [m].
    pub write_wavelength: R,
    /// Angle between the write beam and the collected Stokes mode [rad].
    pub stokes_angle: R,
    /// Write-laser detuning from the bare line [Hz]; shifts the write wavevector.
    pub write_detuning: R,
}

/// Quantities derived from a [`TrapConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapDerived<R: Real = f64> {
    /// Peak trap depth [K].
    pub depth: R,
    /// Radial (transverse) trap angular frequency [rad/s].
    pub radial_freq: R,
    /// Axial (along-beam) trap angular frequency [rad/s].
    pub axial_freq: R,
    /// Peak off-resonant photon-scattering rate [1/s].
    pub scattering_rate: R,
    /// Rayleigh range of the trapping beam [m].
    pub rayleigh_range: R,
}

impl<R: Real> TrapConfig<R> {
    /// Checks every field against its constraint; errors name the field.
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |field, v: R| {
            if v.is_finite() && v > R::zero() {
                Ok(())
            } else {
                Err(ModelError::InvalidConfig {
                    field,
                    constraint: "finite and positive",
                    value: v.as_f64(),
                })
            }
        };
        finite_pos("trap.power", self.power)?;
        finite_pos("trap.waist", self.waist)?;
        if !(self.wavelength.is_finite() && self.wavelength > R::of(consts::LAMBDA_D1)) {
            return Err(ModelError::InvalidConfig {
                field: "trap.wavelength",
                constraint: "red of both D lines (> 794.98 nm)",
                value: self.wavelength.as_f64(),
            });
        }
        if !(self.bias_field.is_finite() && self.bias_field >= R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "trap.bias_field",
                constraint: "finite and nonnegative",
                value: self.bias_field.as_f64(),
            });
        }
        Ok(())
    }
}

impl<R: Real> EnsembleConfig<R> {
    /// Checks every field against its constraint; errors name the field.
    pub fn validate(&self) -> Result<()> {
        if self.atom_count == 0 {
            return Err(ModelError::InvalidConfig {
                field: "ensemble.atom_count",
                constraint: "at least 1",
                value: 0.0,
            });
        }
        if !(self.temperature.is_finite() && self.temperature > R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "ensemble.temperature",
                constraint: "finite and positive",
                value: self.temperature.as_f64(),
            });
        }
        let mut sum = R::zero();
        for &p in &self.zeeman_populations {
            if !(p.is_finite() && p >= R::zero()) {
                return Err(ModelError::InvalidConfig {
                    field: "ensemble.populations",
                    constraint: "finite and nonnegative",
                    value: p.as_f64(),
                });
            }
            sum += p;
        }
        if (sum - R::one()).abs() > R::of(1e-9) {
            return Err(ModelError::InvalidConfig {
                field: "ensemble.populations",
                constraint: "summing to 1 within 1e-9",
                value: sum.as_f64(),
            });
        }
        Ok(())
    }
}

impl<R: Real> BeamGeometry<R> {
    /// Checks every field against its constraint; errors name the field.
    pub fn validate(&self) -> Result<()> {
        if !(self.write_wavelength.is_finite() && self.write_wavelength > R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "beam.write_wavelength",
                constraint: "finite and positive",
                value: self.write_wavelength.as_f64(),
            });
        }
        let half_pi = R::FRAC_PI_2();
        if !(self.stokes_angle.is_finite()
            && self.stokes_angle > R::zero()
            && self.stokes_angle < half_pi)
        {
            return Err(ModelError::InvalidConfig {
                field: "beam.stokes_angle",
                constraint: "strictly between 0 and pi/2 rad",
                value: self.stokes_angle.as_f64(),
            });
        }
        if !self.write_detuning.is_finite() {
            return Err(ModelError::InvalidConfig {
                field: "beam.write_detuning",
                constraint: "finite",
                value: self.write_detuning.as_f64(),
            });
        }
        Ok(())
    }
}

/// Signed per-line potential contributions at the focus [J], D1 then D2.
///
/// Negative values mean attractive. Factors are interleaved so the
/// intermediates stay in range even at f32.
fn line_potentials<R: Real>(trap: &TrapConfig<R>) -> Result<[R; 2]> {
    let c = R::of(consts::C);
    let peak_intensity = R::of(2.0) * trap.power / (R::PI() * trap.waist * trap.waist);
    let laser_omega = R::of(2.0) * R::PI() * c / trap.wavelength;
    let lines = [
        ("D1", consts::LAMBDA_D1, consts::GAMMA_D1, 1.0 / 3.0),
        ("D2", consts::LAMBDA_D2, consts::GAMMA_D2, 2.0 / 3.0),
    ];
    let mut out = [R::zero(); 2];
    for (i, (name, lambda, gamma, weight)) in lines.into_iter().enumerate() {
        let line_omega = R::of(2.0) * R::PI() * c / R::of(lambda);
        let detuning = laser_omega - line_omega;
        if detuning == R::zero() {
            return Err(ModelError::OnResonance { line: name });
        }
        out[i] = R::of(1.5 * weight) * R::PI() * (c / line_omega) * (c / line_omega)
            / line_omega
            * R::of(gamma)
            / detuning
            * peak_intensity;
    }
    Ok(out)
}

/// Peak trap depth [K] of the two-line rotating-wave dipole potential.
pub fn trap_depth<R: Real>(trap: &TrapConfig<R>) -> Result<R> {
    let [u1, u2] = line_potentials(trap)?;
    Ok(-(u1 + u2) / R::of(consts::KB))
}

/// Rayleigh range of the trapping beam [m].
pub fn rayleigh_range<R: Real>(trap: &TrapConfig<R>) -> R {
    R::PI() * trap.waist * trap.waist / trap.wavelength
}

/// Radial and axial trap angular frequencies [rad/s] from the harmonic
/// expansion of the Gaussian focus.
pub fn trap_frequencies<R: Real>(trap: &TrapConfig<R>) -> Result<(R, R)> {
    let u0 = trap_depth(trap)? * R::of(consts::KB);
    let m = R::of(consts::M_RB87);
    let zr = rayleigh_range(trap);
    let radial = (R::of(4.0) * (u0 / m) / (trap.waist * trap.waist)).sqrt();
    let axial = (R::of(2.0) * (u0 / m) / (zr * zr)).sqrt();
    Ok((radial, axial))
}

/// Peak off-resonant photon-scattering rate [1/s]: each line contributes its
/// potential share times Gamma/|Delta|.
pub fn scattering_rate<R: Real>(trap: &TrapConfig<R>) -> Result<R> {
    let c = R::of(consts::C);
    let laser_omega = R::of(2.0) * R::PI() * c / trap.wavelength;
    let potentials = line_potentials(trap)?;
    let gammas = [consts::GAMMA_D1, consts::GAMMA_D2];
    let lambdas = [consts::LAMBDA_D1, consts::LAMBDA_D2];
    let mut rate = R::zero();
    for i in 0..2 {
        let line_omega = R::of(2.0) * R::PI() * c / R::of(lambdas[i]);
        let detuning = (laser_omega - line_omega).abs();
        rate += potentials[i].abs() / R::of(consts::HBAR) * R::of(gammas[i]) / detuning;
    }
    Ok(rate)
}

/// Bundles depth, frequencies, scattering rate and Rayleigh range.
pub fn derive_trap<R: Real>(trap: &TrapConfig<R>) -> Result<TrapDerived<R>> {
    let depth = trap_depth(trap)?;
    let (radial_freq, axial_freq) = trap_frequencies(trap)?;
    Ok(TrapDerived {
        depth,
        radial_freq,
        axial_freq,
        scattering_rate: scattering_rate(trap)?,
        rayleigh_range: rayleigh_range(trap),
    })
}

/// One-dimensional thermal velocity spread sqrt(kB T / m) [m/s].
pub fn thermal_velocity<R: Real>(ensemble: &EnsembleConfig<R>) -> R {
    (R::of(consts::KB) * ensemble.temperature / R::of(consts::M_RB87)).sqrt()
}

/// Thermal cloud sigma radii (radial, axial) [m] for the given trap
/// frequencies: sigma_i = sqrt(kB T / m) / omega_i.
pub fn cloud_radii<R: Real>(
    ensemble: &EnsembleConfig<R>,
    radial_freq: R,
    axial_freq: R,
) -> (R, R) {
    let sv = thermal_velocity(ensemble);
    (sv / radial_freq, sv / axial_freq)
}

/// Peak number density [1/m^3] of the Gaussian cloud:
/// n0 = N / ((2 pi)^{3/2} sigma_r^2 sigma_z).
pub fn peak_density<R: Real>(ensemble: &EnsembleConfig<R>, sigma_r: R, sigma_z: R) -> R {
    let norm = (R::of(2.0) * R::PI()).powf(R::of(1.5));
    R::of(ensemble.atom_count as f64) / (norm * sigma_r * sigma_r * sigma_z)
}

/// Magnitude of the write/Stokes wavevector mismatch stored in the spin wave
/// [1/m].
///
/// The Stokes wavevector sits one hyperfine splitting below the write
/// wavevector; the small-angle difference is evaluated in the cancellation-free
/// form (kw - ks)^2 + 4 kw ks sin^2(theta/2).
pub fn momentum_transfer<R: Real>(geometry: &BeamGeometry<R>) -> R {
    let two_pi = R::of(2.0) * R::PI();
    let kw = two_pi / geometry.write_wavelength + two_pi * geometry.write_detuning / R::of(consts::C);
    let ks = kw - two_pi * R::of(consts::HF_SPLITTING) / R::of(consts::C);
    let along = kw - ks;
    let half = (geometry.stokes_angle / R::of(2.0)).sin();
    (along * along + R::of(4.0) * kw * ks * half * half).sqrt()
}
