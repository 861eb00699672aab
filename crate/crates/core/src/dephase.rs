//! Spin-wave coherence decay from thermal motion and magnetic inhomogeneity.
//!
//! A stored excitation accumulates a per-atom phase at rate
//! omega_j = delta_k * v_j + slope * B_j / hbar, with v_j thermal and B_j the
//! local field offset. Averaging exp(i omega t) over the Gaussian spreads
//! gives a Gaussian coherence envelope per storage class; the clock class has
//! zero field slope and decays on the motional envelope alone.

use crate::consts;
use crate::scalar::Real;
use crate::{ModelError, Result};

/// Which stored ground-state coherence a class refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    /// First-order field-insensitive transition.
    Clock,
    /// Field-sensitive transition with a one-Bohr-magneton differential slope.
    NonClock,
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassLabel::Clock => "clock",
            ClassLabel::NonClock => "nonclock",
        })
    }
}

/// A storage-transition class and its linear magnetic sensitivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionClass<R: Real = f64> {
    pub label: ClassLabel,
    /// d(E_upper - E_lower)/dB of the stored coherence [J/T].
    pub differential_zeeman_slope: R,
}

impl<R: Real> TransitionClass<R> {
    /// The clock pair: first-order Zeeman shifts cancel.
    pub fn clock() -> Self {
        TransitionClass {
            label: ClassLabel::Clock,
            differential_zeeman_slope: R::zero(),
        }
    }

    /// The field-sensitive pair: differential slope of exactly one Bohr magneton.
    pub fn non_clock() -> Self {
        TransitionClass {
            label: ClassLabel::NonClock,
            differential_zeeman_slope: R::of(consts::MU_B),
        }
    }
}

/// Inputs of the motional + magnetic coherence model.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingModel<R: Real = f64> {
    /// Magnitude of the stored wavevector mismatch [1/m].
    pub delta_k: R,
    /// One-dimensional thermal velocity spread [m/s].
    pub sigma_v: R,
    /// RMS magnetic-field inhomogeneity across the cloud [T].
    pub field_rms: R,
    /// Storage classes with their relative weights (amplitudes sum over these).
    pub classes: Vec<(TransitionClass<R>, R)>,
}

/// Builds the class list fed by the F = 1 Zeeman populations.
///
/// The clock coherence is written from m_F = -1 and the field-sensitive one
/// from m_F = 0; population in m_F = +1 feeds neither collected class. Weights
/// are the source populations, kept unnormalized.
pub fn classes_from_populations<R: Real>(populations: [R; 3]) -> Result<Vec<(TransitionClass<R>, R)>> {
    let feed = populations[0] + populations[1];
    if !(feed > R::zero()) {
        return Err(ModelError::InvalidConfig {
            field: "ensemble.populations",
            constraint: "populating m_F = -1 or m_F = 0 (the collected classes)",
            value: feed.as_f64(),
        });
    }
    Ok(vec![
        (TransitionClass::clock(), populations[0]),
        (TransitionClass::non_clock(), populations[1]),
    ])
}

impl<R: Real> DephasingModel<R> {
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
        finite_pos("dephasing.delta_k", self.delta_k)?;
        finite_pos("dephasing.sigma_v", self.sigma_v)?;
        if !(self.field_rms.is_finite() && self.field_rms >= R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "dephasing.field_rms",
                constraint: "finite and nonnegative",
                value: self.field_rms.as_f64(),
            });
        }
        if self.classes.is_empty() {
            return Err(ModelError::TooFewPoints {
                what: "storage classes",
                needed: 1,
                got: 0,
            });
        }
        let mut weight_sum = R::zero();
        for (class, weight) in &self.classes {
            if !(weight.is_finite() && *weight >= R::zero()) {
                return Err(ModelError::InvalidConfig {
                    field: "dephasing.class_weight",
                    constraint: "finite and nonnegative",
                    value: weight.as_f64(),
                });
            }
            if !class.differential_zeeman_slope.is_finite() {
                return Err(ModelError::InvalidConfig {
                    field: "dephasing.zeeman_slope",
                    constraint: "finite",
                    value: class.differential_zeeman_slope.as_f64(),
                });
            }
            weight_sum += *weight;
        }
        if !(weight_sum > R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "dephasing.class_weight",
                constraint: "summing to a positive total",
                value: weight_sum.as_f64(),
            });
        }
        Ok(())
    }

    /// 1/e time of the motional envelope: 1 / (sigma_v * delta_k) [s].
    pub fn motional_dephasing_time(&self) -> R {
        R::one() / (self.sigma_v * self.delta_k)
    }

    /// 1/e time of the magnetic envelope for one class [s]; infinite when the
    /// class is field-insensitive or the field is homogeneous.
    pub fn field_dephasing_time(&self, class: &TransitionClass<R>) -> R {
        let rate = class.differential_zeeman_slope.abs() * self.field_rms / R::of(consts::HBAR);
        if rate > R::zero() {
            R::one() / rate
        } else {
            R::infinity()
        }
    }

    /// Combined 1/e coherence time of one class [s]: inverse squares add.
    pub fn coherence_time(&self, class: &TransitionClass<R>) -> R {
        let tm = self.motional_dephasing_time();
        let tb = self.field_dephasing_time(class);
        if tb.is_infinite() {
            tm
        } else {
            R::one() / (R::one() / (tm * tm) + R::one() / (tb * tb)).sqrt()
        }
    }

    /// Motional factor of the retrieval-efficiency envelope at delay t.
    pub fn motional_envelope(&self, t: R) -> R {
        let x = self.sigma_v * self.delta_k * t;
        (-x * x).exp()
    }

    /// Magnetic factor of the retrieval-efficiency envelope at delay t.
    pub fn field_envelope(&self, class: &TransitionClass<R>, t: R) -> R {
        let tb = self.field_dephasing_time(class);
        if tb.is_infinite() {
            R::one()
        } else {
            let x = t / tb;
            (-x * x).exp()
        }
    }

    /// Retrieval-efficiency envelope of one class at delay t: the squared
    /// magnitude of the mean stored phase factor, Gaussian in t.
    pub fn coherence_envelope(&self, class: &TransitionClass<R>, t: R) -> R {
        self.motional_envelope(t) * self.field_envelope(class, t)
    }

    /// Weight-averaged envelope over all classes at delay t.
    pub fn ensemble_envelope(&self, t: R) -> R {
        let mut num = R::zero();
        let mut den = R::zero();
        for (class, weight) in &self.classes {
            num += *weight * self.coherence_envelope(class, t);
            den += *weight;
        }
        num / den
    }
}
