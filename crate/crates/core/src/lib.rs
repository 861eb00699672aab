//! Discrete-trial model of a dipole-trapped atomic-ensemble photon memory.
//!
//! The crate splits into small layers:
//! - [`trap`]: dipole-trap depth, trap frequencies, photon-scattering rate and
//!   the thermal-cloud geometry they imply.
//! - [`dephase`]: spin-wave coherence envelopes from thermal motion and
//!   magnetic-field inhomogeneity, per storage-transition class.
//! - [`mc`]: seeded, thread-count-independent Monte Carlo sampling of
//!   write/read trials with binary detectors.
//! - [`stats`]: correlation estimators, Cauchy–Schwarz test and the event-set
//!   CSV contract between simulation and analysis.
//! - [`fit`]: weighted Levenberg–Marquardt fits of the two-component Gaussian
//!   decay and the physics extracted from the fitted time constants.
//!
//! All numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! type aliases at the crate root fix `f64`, which is what the command-line
//! front end uses.

pub mod consts;
pub mod dephase;
pub mod fit;
pub mod mc;
pub mod scalar;
pub mod stats;
pub mod trap;

pub use scalar::Real;

use thiserror::Error;

/// Everything that can go wrong in the model layer.
///
/// Variants carry enough context to point at the offending field, record or
/// parameter; the command-line layer maps them onto exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A configuration field violates its documented constraint.
    #[error("invalid {field}: must be {constraint}, got {value}")]
    InvalidConfig {
        field: &'static str,
        constraint: &'static str,
        value: f64,
    },
    /// The trap laser sits exactly on an atomic resonance.
    #[error("trap wavelength is resonant with the {line} line; the dipole potential needs a nonzero detuning")]
    OnResonance { line: &'static str },
    /// A CSV line could not be parsed. Line numbers are 1-based and include the header.
    #[error("line {line}: {msg}")]
    CsvFormat { line: usize, msg: String },
    /// A correlation group has no clicks on one arm, so g is undefined there.
    #[error("no {which} clicks among {n_trials} trials at delay {delay_us} us; correlation undefined")]
    NoClicks {
        which: &'static str,
        delay_us: f64,
        n_trials: u64,
    },
    /// A record's delay cannot be grouped into a time bin.
    #[error("record {index} has an ungroupable delay ({value}); delays must be finite and nonnegative")]
    UngroupableDelay { index: usize, value: f64 },
    /// Records passed to a single-delay estimator span different delays.
    #[error("records mix delays {a_us} us and {b_us} us; correlate one delay at a time")]
    MixedDelays { a_us: f64, b_us: f64 },
    /// Too little data for the requested operation.
    #[error("need at least {needed} {what}, got {got}")]
    TooFewPoints {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    /// The normal equations lost positive-definiteness at the solution.
    #[error("fit Jacobian is singular near parameter {index}; the data cannot constrain all model parameters")]
    SingularFit { index: usize },
    /// Deconvolving the field contribution needs tau_nc strictly below tau_c.
    #[error("tau_nc = {tau_nc_us} us is not below tau_c = {tau_c_us} us; no real field contribution deconvolves")]
    DeconvolutionUndefined { tau_nc_us: f64, tau_c_us: f64 },
    /// Number-resolved statistics were requested from click-only records.
    #[error("auto-correlation needs photon-number records, but this event set carries clicks only")]
    NoNumberRecords,
    /// The simulation plan would exhaust memory.
    #[error("plan would generate {rows} trial records; the per-run cap is {cap}")]
    PlanTooLarge { rows: u128, cap: u128 },
}

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, ModelError>;

// f64 aliases for the common types, matching what the CLI reads and writes.
pub type TrapConfig = trap::TrapConfig<f64>;
pub type EnsembleConfig = trap::EnsembleConfig<f64>;
pub type BeamGeometry = trap::BeamGeometry<f64>;
pub type TrapDerived = trap::TrapDerived<f64>;
pub type TransitionClass = dephase::TransitionClass<f64>;
pub type DephasingModel = dephase::DephasingModel<f64>;
pub type PhotonModel = mc::PhotonModel<f64>;
pub type CollectiveExcitation = mc::CollectiveExcitation<f64>;
pub type SimPlan = mc::SimPlan<f64>;
pub type TrialRecord = stats::TrialRecord<f64>;
pub type EventSet = stats::EventSet<f64>;
pub type CorrelationPoint = stats::CorrelationPoint<f64>;
pub type CauchySchwarzResult = stats::CauchySchwarzResult<f64>;
pub type DecayParams = fit::DecayParams<f64>;
pub type DecayFitResult = fit::DecayFitResult<f64>;
pub type SingleFitResult = fit::SingleFitResult<f64>;
pub type ExtractedPhysics = fit::ExtractedPhysics<f64>;
