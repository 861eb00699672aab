//! Seeded Monte Carlo sampling of write/read trials.
//!
//! Each trial draws a thermal excitation number per storage class, thins it
//! through the Stokes detector, then builds the class's collective phase
//! pattern from per-atom thermal velocities and local field offsets and thins
//! the read-out through the decayed retrieval probability. Every trial owns a
//! ChaCha8 stream indexed by its global position, so results are identical
//! for any thread count and any execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::consts;
use crate::dephase::{DephasingModel, TransitionClass};
use crate::scalar::Real;
use crate::stats::{EventSet, TrialRecord};
use crate::{ModelError, Result};

/// Hard cap on records per run; plans beyond this are configuration errors.
pub const MAX_PLAN_ROWS: u128 = 50_000_000;

/// Per-class excitation statistics and the detector chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonModel<R: Real = f64> {
    /// Thermal mean excitation number per storage class, aligned with the
    /// dephasing model's class list.
    pub mean_excitation: Vec<R>,
    /// Stokes-arm detection efficiency (per excitation).
    pub stokes_det_eff: R,
    /// Anti-Stokes-arm detection efficiency (per retrieved photon).
    pub antistokes_det_eff: R,
    /// Intrinsic retrieval efficiency at zero delay.
    pub retrieval_eff: R,
    /// Probability of a spurious Stokes count per trial.
    pub dark_prob_s: R,
    /// Probability of a spurious anti-Stokes count per trial (dark counts
    /// plus read-pulse leakage).
    pub dark_prob_as: R,
}

/// One class's collective excitation: the per-atom phase accumulation rates
/// [rad/s] sampled for this trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveExcitation<R: Real = f64> {
    pub class: TransitionClass<R>,
    pub phase_rates: Vec<R>,
}

/// What to simulate: which delays, how many trials, and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan<R: Real = f64> {
    /// Storage delays [s].
    pub delays: Vec<R>,
    pub trials_per_delay: u64,
    pub rng_seed: u64,
    /// Atoms sampled per collective excitation (the spin-wave mode size).
    pub atoms_per_excitation: usize,
}

impl<R: Real> PhotonModel<R> {
    /// Checks every field against its constraint; errors name the field.
    pub fn validate(&self) -> Result<()> {
        if self.mean_excitation.is_empty() {
            return Err(ModelError::TooFewPoints {
                what: "mean_excitation entries",
                needed: 1,
                got: 0,
            });
        }
        for &chi in &self.mean_excitation {
            if !(chi.is_finite() && chi >= R::zero()) {
                return Err(ModelError::InvalidConfig {
                    field: "photon.mean_excitation",
                    constraint: "finite and nonnegative",
                    value: chi.as_f64(),
                });
            }
        }
        let unit = [
            (self.stokes_det_eff, "photon.stokes_det_eff"),
            (self.antistokes_det_eff, "photon.antistokes_det_eff"),
            (self.retrieval_eff, "photon.retrieval_eff"),
        ];
        for (v, field) in unit {
            if !(v.is_finite() && v >= R::zero() && v <= R::one()) {
                return Err(ModelError::InvalidConfig {
                    field,
                    constraint: "within [0, 1]",
                    value: v.as_f64(),
                });
            }
        }
        for (v, field) in [
            (self.dark_prob_s, "photon.dark_prob_s"),
            (self.dark_prob_as, "photon.dark_prob_as"),
        ] {
            if !(v.is_finite() && v >= R::zero() && v < R::one()) {
                return Err(ModelError::InvalidConfig {
                    field,
                    constraint: "within [0, 1)",
                    value: v.as_f64(),
                });
            }
        }
        Ok(())
    }
}

impl<R: Real> SimPlan<R> {
    /// Checks every field against its constraint; errors name the field.
    pub fn validate(&self) -> Result<()> {
        if self.delays.is_empty() {
            return Err(ModelError::TooFewPoints {
                what: "plan delays",
                needed: 1,
                got: 0,
            });
        }
        for &d in &self.delays {
            if !(d.is_finite() && d >= R::zero()) {
                return Err(ModelError::InvalidConfig {
                    field: "plan.delays",
                    constraint: "finite and nonnegative",
                    value: d.as_f64(),
                });
            }
        }
        if self.trials_per_delay == 0 {
            return Err(ModelError::InvalidConfig {
                field: "plan.trials_per_delay",
                constraint: "at least 1",
                value: 0.0,
            });
        }
        if self.atoms_per_excitation == 0 {
            return Err(ModelError::InvalidConfig {
                field: "plan.atoms_per_excitation",
                constraint: "at least 1",
                value: 0.0,
            });
        }
        let rows = self.delays.len() as u128 * self.trials_per_delay as u128;
        if rows > MAX_PLAN_ROWS {
            return Err(ModelError::PlanTooLarge {
                rows,
                cap: MAX_PLAN_ROWS,
            });
        }
        Ok(())
    }
}

/// Per-class mean excitation numbers from the F = 1 populations.
///
/// Mirrors [`crate::dephase::classes_from_populations`]: entry 0 is the clock
/// class fed by m_F = -1, entry 1 the field-sensitive class fed by m_F = 0.
/// The configured chi applies to the dominant source; the other class scales
/// with its population share.
pub fn mean_excitations<R: Real>(chi: R, populations: [R; 3]) -> Result<Vec<R>> {
    if !(chi.is_finite() && chi >= R::zero()) {
        return Err(ModelError::InvalidConfig {
            field: "photon.chi",
            constraint: "finite and nonnegative",
            value: chi.as_f64(),
        });
    }
    let top = populations[0].max(populations[1]);
    if !(top > R::zero()) {
        return Err(ModelError::InvalidConfig {
            field: "ensemble.populations",
            constraint: "populating m_F = -1 or m_F = 0 (the collected classes)",
            value: top.as_f64(),
        });
    }
    Ok(vec![chi * populations[0] / top, chi * populations[1] / top])
}

/// Draws a thermal (geometric) excitation number with mean chi by inversion.
fn sample_thermal(chi: f64, rng: &mut ChaCha8Rng) -> u64 {
    if chi <= 0.0 {
        return 0;
    }
    // P(n) = chi^n / (1+chi)^(n+1); invert the CDF 1 - r^(n+1), r = chi/(1+chi)
    let r = chi / (1.0 + chi);
    let u: f64 = rng.random();
    let n = ((1.0 - u).ln() / r.ln()).ceil() - 1.0;
    if n > 0.0 {
        n as u64
    } else {
        0
    }
}

/// Draws each class's excitation number for one trial.
pub fn sample_excitations<R: Real>(photon: &PhotonModel<R>, rng: &mut ChaCha8Rng) -> Vec<u64> {
    photon
        .mean_excitation
        .iter()
        .map(|chi| sample_thermal(chi.as_f64(), rng))
        .collect()
}

/// Samples one collective excitation: per-atom phase rates combining the
/// motional Doppler term and the class's local Zeeman detuning.
pub fn build_excitation<R: Real>(
    model: &DephasingModel<R>,
    class: &TransitionClass<R>,
    atoms: usize,
    rng: &mut ChaCha8Rng,
) -> CollectiveExcitation<R> {
    let motional = model.delta_k.as_f64() * model.sigma_v.as_f64();
    let magnetic =
        class.differential_zeeman_slope.as_f64().abs() * model.field_rms.as_f64() / consts::HBAR;
    let phase_rates = (0..atoms)
        .map(|_| {
            let zv: f64 = rng.sample(StandardNormal);
            let zb: f64 = rng.sample(StandardNormal);
            R::of(motional * zv + magnetic * zb)
        })
        .collect();
    CollectiveExcitation {
        class: *class,
        phase_rates,
    }
}

/// Probability that one stored excitation is retrieved after delay t: the
/// intrinsic efficiency times the squared mean phase factor over the mode.
pub fn retrieval_probability<R: Real>(
    excitation: &CollectiveExcitation<R>,
    t: R,
    retrieval_eff: R,
) -> R {
    let m = R::of(excitation.phase_rates.len() as f64);
    let mut re = R::zero();
    let mut im = R::zero();
    for &w in &excitation.phase_rates {
        let phi = w * t;
        re += phi.cos();
        im += phi.sin();
    }
    re /= m;
    im /= m;
    retrieval_eff * (re * re + im * im)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// One full trial; returns the click record and the detected photon numbers.
fn run_trial<R: Real>(
    global_index: u64,
    delay: R,
    model: &DephasingModel<R>,
    photon: &PhotonModel<R>,
    atoms: usize,
    rng: &mut ChaCha8Rng,
) -> (TrialRecord<R>, (u32, u32)) {
    let excitations = sample_excitations(photon, rng);

    // Stokes arm: every excitation offers one photon to the detector.
    let mut n_s = 0u32;
    for &n in &excitations {
        for _ in 0..n {
            if bernoulli(rng, photon.stokes_det_eff.as_f64()) {
                n_s += 1;
            }
        }
    }
    if bernoulli(rng, photon.dark_prob_s.as_f64()) {
        n_s += 1;
    }

    // Read arm: each excited class shares one collective mode whose dephasing
    // sets the retrieval probability at this delay.
    let mut n_as = 0u32;
    for (k, (class, _)) in model.classes.iter().enumerate() {
        if excitations[k] == 0 {
            continue;
        }
        let excitation = build_excitation(model, class, atoms, rng);
        let p = (retrieval_probability(&excitation, delay, photon.retrieval_eff)
            * photon.antistokes_det_eff)
            .as_f64();
        for _ in 0..excitations[k] {
            if bernoulli(rng, p) {
                n_as += 1;
            }
        }
    }
    if bernoulli(rng, photon.dark_prob_as.as_f64()) {
        n_as += 1;
    }

    (
        TrialRecord {
            trial_index: global_index,
            delay,
            stokes_click: n_s > 0,
            antistokes_click: n_as > 0,
        },
        (n_s, n_as),
    )
}

/// Runs the whole plan and returns every trial with its number side channel.
///
/// Trials are ordered delay-major (all trials of delays[0] first) and indexed
/// globally; each trial's RNG is the plan seed on its own ChaCha stream, so
/// the output is bit-identical for any thread count.
pub fn run_plan<R: Real>(
    plan: &SimPlan<R>,
    model: &DephasingModel<R>,
    photon: &PhotonModel<R>,
) -> Result<EventSet<R>> {
    plan.validate()?;
    model.validate()?;
    photon.validate()?;
    if photon.mean_excitation.len() != model.classes.len() {
        return Err(ModelError::InvalidConfig {
            field: "photon.mean_excitation",
            constraint: "one entry per storage class",
            value: photon.mean_excitation.len() as f64,
        });
    }
    let trials = plan.trials_per_delay;
    let total = plan.delays.len() as u64 * trials;
    let atoms = plan.atoms_per_excitation;
    let results: Vec<(TrialRecord<R>, (u32, u32))> = (0..total)
        .into_par_iter()
        .map(|global| {
            let delay = plan.delays[(global / trials) as usize];
            let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
            rng.set_stream(global);
            run_trial(global, delay, model, photon, atoms, &mut rng)
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut numbers = Vec::with_capacity(results.len());
    for (record, number) in results {
        records.push(record);
        numbers.push(number);
    }
    Ok(EventSet {
        records,
        photon_numbers: Some(numbers),
    })
}

/// Monte Carlo estimate of one class's coherence envelope at delay t.
///
/// Averages the squared mean phase factor over fresh collective excitations
/// and removes the finite-mode floor: E|mean|^2 = 1/M + (1 - 1/M) c^2, so
/// (|mean|^2 - 1/M) * M/(M-1) estimates the envelope c^2 without bias.
/// Returns (estimate, standard error).
pub fn envelope_estimate<R: Real>(
    model: &DephasingModel<R>,
    class: &TransitionClass<R>,
    atoms: usize,
    t: R,
    samples: u64,
    seed: u64,
) -> Result<(R, R)> {
    if atoms < 2 {
        return Err(ModelError::InvalidConfig {
            field: "atoms_per_excitation",
            constraint: "at least 2 for the bias-corrected estimator",
            value: atoms as f64,
        });
    }
    if samples < 2 {
        return Err(ModelError::TooFewPoints {
            what: "envelope samples",
            needed: 2,
            got: samples as usize,
        });
    }
    let m = atoms as f64;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let excitation = build_excitation(model, class, atoms, &mut rng);
            let raw = retrieval_probability(&excitation, t, R::one()).as_f64();
            (raw - 1.0 / m) * m / (m - 1.0)
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((R::of(mean), R::of((var / n).sqrt())))
}
