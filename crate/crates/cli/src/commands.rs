//! Implementations of the CLI subcommands and the error-to-exit-code
//! policy. Each command returns `CliError` so the binary can exit 1 for
//! bad input (config, CSV, fit preconditions) and 2 for runtime failures
//! (singular fits, vanishing click rates, IO write errors).

use std::fmt;
use std::path::Path;

use trapmem::fit::{extract_physics, fit_decay, model_eval, single_exponent_fit};
use trapmem::stats::{cauchy_schwarz, correlation_sweep};
use trapmem::{mc, CorrelationPoint, DecayFitResult, EventSet, ModelError, SingleFitResult};

use crate::config::RunConfig;
use crate::manifest::{compute_derived, render_manifest, DerivedQuantities};

/// Theoretical auto-correlation of each arm: a single thermal mode gives
/// g2 = 2, so the classical bound on the cross-correlation is
/// sqrt(2 * 2) = 2.
pub const THERMAL_AUTO: f64 = 2.0;

const RESULTS_HEADER: &str = "delay_us,g,std_err,n_trials,p_s,p_as,p_sas";

/// Command failure, split by which exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exits 1.
    Validation(String),
    /// Failure while computing or writing: exits 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

/// Maps core model errors onto the exit-code split: everything that means
/// "the input was wrong" validates; the rest is runtime.
pub fn classify(e: ModelError) -> CliError {
    match e {
        ModelError::NoClicks { .. }
        | ModelError::SingularFit { .. }
        | ModelError::DeconvolutionUndefined { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

/// Loads the config (defaults when no path), applies command-line
/// overrides, and validates the result.
pub fn prepare_config(
    path: Option<&Path>,
    seed: Option<u64>,
    trials: Option<u64>,
) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        None => RunConfig::default(),
        Some(p) => RunConfig::load(p).map_err(CliError::Validation)?,
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if let Some(t) = trials {
        cfg.trials_per_delay = t;
    }
    cfg.validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {}", dir.display(), e)))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {}", path.display(), e)))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {}", path.display(), e)))
}

fn fmt_val(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{}", v)
    }
}

/// Prints the derived-quantity table and writes `manifest.txt`.
pub fn cmd_derive(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let derived = compute_derived(cfg).map_err(classify)?;
    print_derived(&derived);
    ensure_dir(out)?;
    let path = out.join("manifest.txt");
    write_text(&path, &render_manifest(cfg, &derived, "derive"))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_derived(d: &DerivedQuantities) {
    let row = |name: &str, value: String| println!("{:<26} {}", name, value);
    row("trap depth", format!("{:.3} uK", d.depth_uk));
    row("radial trap frequency", format!("{:.3} Hz", d.radial_freq_hz));
    row("axial trap frequency", format!("{:.4} Hz", d.axial_freq_hz));
    row(
        "photon scattering rate",
        format!("{:.3} 1/s", d.scattering_rate_per_s),
    );
    row("rayleigh range", format!("{:.4} mm", d.rayleigh_range_mm));
    row("velocity spread", format!("{:.4} mm/s", d.sigma_v_mm_s));
    row("cloud radius (radial)", format!("{:.4} um", d.sigma_r_um));
    row("cloud extent (axial)", format!("{:.4} mm", d.sigma_z_mm));
    row(
        "peak density",
        format!("{:.4e} 1/cm^3", d.peak_density_per_cm3),
    );
    row(
        "wavevector mismatch",
        format!("{:.4} 1/mm", d.delta_k_per_mm),
    );
    row(
        "thermal dephasing time",
        format!("{:.3} us", d.tau_thermal_us),
    );
    row(
        "field dephasing (nonclock)",
        format!("{:.3} us", d.tau_field_nonclock_us),
    );
    row(
        "coherence time (nonclock)",
        format!("{:.3} us", d.tau_nonclock_us),
    );
    row("coherence time (clock)", format!("{:.3} us", d.tau_clock_us));
}

/// Runs the Monte Carlo plan and writes `events.csv` plus the manifest.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let events = simulate_events(cfg)?;
    ensure_dir(out)?;
    let path = out.join("events.csv");
    write_text(&path, &events.to_csv())?;
    let derived = compute_derived(cfg).map_err(classify)?;
    write_text(
        &out.join("manifest.txt"),
        &render_manifest(cfg, &derived, "simulate"),
    )?;
    println!(
        "simulated {} delays x {} trials (seed {}) -> {}",
        cfg.delays_us.len(),
        cfg.trials_per_delay,
        cfg.rng_seed,
        path.display()
    );
    Ok(())
}

fn simulate_events(cfg: &RunConfig) -> Result<EventSet, CliError> {
    let plan = cfg.plan();
    let model = cfg.dephasing().map_err(classify)?;
    let photon = cfg.photon().map_err(classify)?;
    mc::run_plan(&plan, &model, &photon).map_err(classify)
}

/// Reads an event table, writes `results.csv` and `cauchy_schwarz.csv`,
/// and prints a violation summary.
pub fn cmd_analyze(events_path: &Path, out: &Path, significance: f64) -> Result<(), CliError> {
    let text = read_text(events_path)?;
    let events = EventSet::from_csv(&text).map_err(classify)?;
    let points = correlation_sweep(&events).map_err(classify)?;
    write_analysis(&points, out, significance)
}

fn write_analysis(
    points: &[CorrelationPoint],
    out: &Path,
    significance: f64,
) -> Result<(), CliError> {
    ensure_dir(out)?;
    write_text(&out.join("results.csv"), &render_results(points))?;
    let mut cs = String::from("delay_us,ratio,violated,significance\n");
    let mut violations = 0usize;
    for p in points {
        let r = cauchy_schwarz(p.g_value, p.std_error, THERMAL_AUTO, THERMAL_AUTO)
            .map_err(classify)?;
        if r.violated && r.significance >= significance {
            violations += 1;
        }
        cs.push_str(&format!(
            "{:.6},{},{},{}\n",
            p.delay * 1e6,
            r.ratio,
            r.violated as u8,
            r.significance
        ));
    }
    write_text(&out.join("cauchy_schwarz.csv"), &cs)?;
    println!(
        "analyzed {} delays; {} violate the classical bound at >= {} sigma",
        points.len(),
        violations,
        significance
    );
    println!(
        "wrote {} and {}",
        out.join("results.csv").display(),
        out.join("cauchy_schwarz.csv").display()
    );
    Ok(())
}

fn render_results(points: &[CorrelationPoint]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!(
            "{:.6},{},{},{},{},{},{}\n",
            p.delay * 1e6,
            p.g_value,
            p.std_error,
            p.n_trials,
            p.p_s,
            p.p_as,
            p.p_sas
        ));
    }
    s
}

/// Parses a `results.csv` back into correlation points. Errors carry
/// 1-based line numbers.
pub fn parse_results(text: &str) -> Result<Vec<CorrelationPoint>, CliError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("results table is empty".into()))?;
    if header.1.trim_end_matches('\r') != RESULTS_HEADER {
        return Err(CliError::Validation(format!(
            "line 1: expected header `{}`",
            RESULTS_HEADER
        )));
    }
    let mut points = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            return Err(CliError::Validation(format!("line {}: blank line", line_no)));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::Validation(format!(
                "line {}: expected 7 fields, got {}",
                line_no,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, CliError> {
            fields[i].parse::<f64>().map_err(|_| {
                CliError::Validation(format!(
                    "line {}: `{}` is not a number",
                    line_no, fields[i]
                ))
            })
        };
        let delay_us = num(0)?;
        if !(delay_us.is_finite() && delay_us >= 0.0) {
            return Err(CliError::Validation(format!(
                "line {}: delay must be finite and nonnegative",
                line_no
            )));
        }
        let n_trials = fields[3].parse::<u64>().map_err(|_| {
            CliError::Validation(format!(
                "line {}: `{}` is not a trial count",
                line_no, fields[3]
            ))
        })?;
        points.push(CorrelationPoint {
            delay: delay_us / 1e6,
            g_value: num(1)?,
            std_error: num(2)?,
            n_trials,
            p_s: num(4)?,
            p_as: num(5)?,
            p_sas: num(6)?,
        });
    }
    Ok(points)
}

/// Fits the decay in a results table and writes `fit_report.csv` and
/// `model_curve.csv`. The config supplies the wavevector mismatch used to
/// convert fitted times back to field and velocity.
pub fn cmd_fit(results_path: &Path, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let text = read_text(results_path)?;
    let points = parse_results(&text)?;
    let fit = run_fit(&points, cfg, out)?;
    print_fit(&fit);
    Ok(())
}

/// Everything the fit stage reports. Configs populating both storage
/// classes get the two-component fit; configs populating exactly one get
/// a single Gaussian, because the two-component model is degenerate on
/// one-class data.
pub enum FitOutcome {
    Two {
        fit: DecayFitResult,
        field_rms_mg: f64,
        implied_velocity_mm_s: f64,
    },
    Single {
        fit: SingleFitResult,
        implied_velocity_mm_s: f64,
    },
}

impl FitOutcome {
    /// Fitted decay model at delay t [s].
    pub fn model(&self, t: f64) -> f64 {
        match self {
            FitOutcome::Two { fit, .. } => model_eval(&fit.params, t),
            FitOutcome::Single { fit, .. } => {
                let x = t / fit.tau;
                1.0 + fit.amp * (-x * x).exp()
            }
        }
    }

    fn series(&self) -> &'static str {
        match self {
            FitOutcome::Two { .. } => "fit",
            FitOutcome::Single { .. } => "fit_single",
        }
    }
}

fn run_fit(points: &[CorrelationPoint], cfg: &RunConfig, out: &Path) -> Result<FitOutcome, CliError> {
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.delay, p.g_value, p.std_error))
        .collect();
    let delta_k = trapmem::trap::momentum_transfer(&cfg.beam());
    let clock_pop = cfg.populations[0] > 0.0;
    let nonclock_pop = cfg.populations[1] > 0.0;
    let outcome = if clock_pop != nonclock_pop {
        let fit = single_exponent_fit(&data, clock_pop).map_err(classify)?;
        // Only the clock class decays at the purely motional rate, so only
        // then does its time convert to a velocity.
        let implied_velocity_mm_s = if clock_pop {
            1e3 / (fit.tau * delta_k)
        } else {
            f64::NAN
        };
        FitOutcome::Single {
            fit,
            implied_velocity_mm_s,
        }
    } else {
        let fit = fit_decay(&data, None).map_err(classify)?;
        // Deconvolution needs tau_nc strictly below tau_c; when the fit
        // cannot separate them the field is reported as nan but the
        // velocity, which only needs the slow time, is still quoted.
        let (field_rms_mg, implied_velocity_mm_s) = match extract_physics(&fit.params, delta_k) {
            Ok(e) => (e.field_rms * 1e7, e.implied_velocity * 1e3),
            Err(ModelError::DeconvolutionUndefined { .. }) => {
                (f64::NAN, 1e3 / (fit.params.tau_c * delta_k))
            }
            Err(e) => return Err(classify(e)),
        };
        FitOutcome::Two {
            fit,
            field_rms_mg,
            implied_velocity_mm_s,
        }
    };
    ensure_dir(out)?;
    write_text(&out.join("fit_report.csv"), &render_fit_report(&outcome))?;
    write_text(&out.join("model_curve.csv"), &render_model_curve(&outcome, &data))?;
    println!(
        "wrote {} and {}",
        out.join("fit_report.csv").display(),
        out.join("model_curve.csv").display()
    );
    Ok(outcome)
}

fn render_fit_report(outcome: &FitOutcome) -> String {
    let mut s = String::from("parameter,value,std_error\n");
    match outcome {
        FitOutcome::Two {
            fit: f,
            field_rms_mg,
            implied_velocity_mm_s,
        } => {
            let sigma = |i: usize| (f.covariance[i][i]).max(0.0).sqrt();
            s.push_str(&format!(
                "amp_nc,{},{}\n",
                fmt_val(f.params.amp_nc),
                fmt_val(sigma(0))
            ));
            s.push_str(&format!(
                "amp_c,{},{}\n",
                fmt_val(f.params.amp_c),
                fmt_val(sigma(1))
            ));
            s.push_str(&format!(
                "tau_nc_us,{},{}\n",
                fmt_val(f.params.tau_nc * 1e6),
                fmt_val(sigma(2) * 1e6)
            ));
            s.push_str(&format!(
                "tau_c_us,{},{}\n",
                fmt_val(f.params.tau_c * 1e6),
                fmt_val(sigma(3) * 1e6)
            ));
            s.push_str(&format!("chi_square,{},\n", fmt_val(f.chi_square)));
            s.push_str(&format!("dof,{},\n", f.dof));
            s.push_str(&format!("converged,{},\n", f.converged as u8));
            s.push_str(&format!("iterations,{},\n", f.iterations));
            s.push_str(&format!("field_rms_mg,{},\n", fmt_val(*field_rms_mg)));
            s.push_str(&format!(
                "implied_velocity_mm_s,{},\n",
                fmt_val(*implied_velocity_mm_s)
            ));
        }
        FitOutcome::Single {
            fit: f,
            implied_velocity_mm_s,
        } => {
            let sigma = |i: usize| (f.covariance[i][i]).max(0.0).sqrt();
            s.push_str(&format!("amp,{},{}\n", fmt_val(f.amp), fmt_val(sigma(0))));
            s.push_str(&format!(
                "tau_us,{},{}\n",
                fmt_val(f.tau * 1e6),
                fmt_val(sigma(1) * 1e6)
            ));
            s.push_str(&format!("chi_square,{},\n", fmt_val(f.chi_square)));
            s.push_str(&format!("dof,{},\n", f.dof));
            s.push_str(&format!("converged,{},\n", f.converged as u8));
            s.push_str(&format!("iterations,{},\n", f.iterations));
            s.push_str("field_rms_mg,nan,\n");
            s.push_str(&format!(
                "implied_velocity_mm_s,{},\n",
                fmt_val(*implied_velocity_mm_s)
            ));
        }
    }
    s
}

fn curve_grid(data: &[(f64, f64, f64)]) -> Vec<f64> {
    let t_max = data.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if t_max <= 0.0 {
        return vec![0.0];
    }
    (0..=200).map(|k| t_max * k as f64 / 200.0).collect()
}

fn render_model_curve(outcome: &FitOutcome, data: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("t_us,g_model\n");
    for t in curve_grid(data) {
        s.push_str(&format!("{:.6},{}\n", t * 1e6, outcome.model(t)));
    }
    s
}

fn print_fit(outcome: &FitOutcome) {
    match outcome {
        FitOutcome::Two {
            fit: f,
            field_rms_mg,
            implied_velocity_mm_s,
        } => {
            let sigma = |i: usize| (f.covariance[i][i]).max(0.0).sqrt();
            println!(
                "fit {} after {} iterations, chi2/dof = {:.2}/{}",
                if f.converged { "converged" } else { "stopped" },
                f.iterations,
                f.chi_square,
                f.dof
            );
            println!(
                "  amp_nc = {:.4} +/- {:.4}    amp_c = {:.4} +/- {:.4}",
                f.params.amp_nc,
                sigma(0),
                f.params.amp_c,
                sigma(1)
            );
            println!(
                "  tau_nc = {:.3} +/- {:.3} us    tau_c = {:.3} +/- {:.3} us",
                f.params.tau_nc * 1e6,
                sigma(2) * 1e6,
                f.params.tau_c * 1e6,
                sigma(3) * 1e6
            );
            println!(
                "  field_rms = {:.3} mG    implied velocity = {:.3} mm/s",
                field_rms_mg, implied_velocity_mm_s
            );
        }
        FitOutcome::Single {
            fit: f,
            implied_velocity_mm_s,
        } => {
            let sigma = |i: usize| (f.covariance[i][i]).max(0.0).sqrt();
            println!(
                "single-class fit {} after {} iterations, chi2/dof = {:.2}/{}",
                if f.converged { "converged" } else { "stopped" },
                f.iterations,
                f.chi_square,
                f.dof
            );
            println!(
                "  amp = {:.4} +/- {:.4}    tau = {:.3} +/- {:.3} us",
                f.amp,
                sigma(0),
                f.tau * 1e6,
                sigma(1) * 1e6
            );
            println!("  implied velocity = {:.3} mm/s", implied_velocity_mm_s);
        }
    }
}

/// Full chain: derive, simulate, analyze, fit, plus `plot_data.csv`
/// collecting every curve a decay figure needs.
pub fn cmd_pipeline(cfg: &RunConfig, out: &Path, significance: f64) -> Result<(), CliError> {
    let derived = compute_derived(cfg).map_err(classify)?;
    print_derived(&derived);
    ensure_dir(out)?;
    write_text(
        &out.join("manifest.txt"),
        &render_manifest(cfg, &derived, "pipeline"),
    )?;

    let events = simulate_events(cfg)?;
    write_text(&out.join("events.csv"), &events.to_csv())?;
    println!(
        "simulated {} delays x {} trials (seed {})",
        cfg.delays_us.len(),
        cfg.trials_per_delay,
        cfg.rng_seed
    );

    let points = correlation_sweep(&events).map_err(classify)?;
    write_analysis(&points, out, significance)?;

    let outcome = run_fit(&points, cfg, out)?;
    print_fit(&outcome);

    write_text(&out.join("plot_data.csv"), &render_plot_data(&points, &outcome))?;
    println!("wrote {}", out.join("plot_data.csv").display());
    Ok(())
}

fn render_plot_data(points: &[CorrelationPoint], outcome: &FitOutcome) -> String {
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.delay, p.g_value, p.std_error))
        .collect();
    let mut s = String::from("series,t_us,g,std_err\n");
    for p in points {
        s.push_str(&format!(
            "data,{:.6},{},{}\n",
            p.delay * 1e6,
            p.g_value,
            p.std_error
        ));
    }
    // Series name records which model was fitted: `fit` for the
    // two-component decay, `fit_single` for one-class configs.
    for t in curve_grid(&data) {
        s.push_str(&format!(
            "{},{:.6},{},\n",
            outcome.series(),
            t * 1e6,
            outcome.model(t)
        ));
    }
    for p in points {
        s.push_str(&format!("bound,{:.6},{},\n", p.delay * 1e6, THERMAL_AUTO));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_splits_input_from_runtime() {
        let v = classify(ModelError::TooFewPoints {
            what: "fit points",
            needed: 5,
            got: 2,
        });
        assert_eq!(v.exit_code(), 1);
        let r = classify(ModelError::SingularFit { index: 3 });
        assert_eq!(r.exit_code(), 2);
        let d = classify(ModelError::DeconvolutionUndefined {
            tau_nc_us: 50.0,
            tau_c_us: 40.0,
        });
        assert_eq!(d.exit_code(), 2);
    }

    #[test]
    fn results_table_round_trips() {
        let points = vec![
            CorrelationPoint {
                delay: 0.0,
                g_value: 9.25,
                std_error: 0.125,
                n_trials: 300_000,
                p_s: 0.011,
                p_as: 0.009,
                p_sas: 0.00091575,
            },
            CorrelationPoint {
                delay: 12.5e-6,
                g_value: 3.5,
                std_error: 0.08,
                n_trials: 300_000,
                p_s: 0.011,
                p_as: 0.0088,
                p_sas: 0.0003388,
            },
        ];
        let text = render_results(&points);
        let back = parse_results(&text).unwrap();
        assert_eq!(back, points);
    }

    #[test]
    fn results_parse_errors_carry_line_numbers() {
        let bad_header = parse_results("delay,g\n");
        assert!(bad_header.unwrap_err().to_string().contains("line 1"));
        let text = format!("{}\n0.0,2.0,0.1,100,0.1,0.1\n", RESULTS_HEADER);
        let err = parse_results(&text).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{}", err);
        assert!(err.contains("6"), "{}", err);
    }

    #[test]
    fn fit_report_prints_nan_field_when_undefined() {
        let outcome = FitOutcome::Two {
            fit: DecayFitResult {
                params: trapmem::DecayParams {
                    amp_nc: 2.0,
                    amp_c: 2.0,
                    tau_nc: 5e-5,
                    tau_c: 5e-5,
                },
                covariance: [[0.0; 4]; 4],
                chi_square: 1.0,
                dof: 17,
                converged: true,
                iterations: 12,
            },
            field_rms_mg: f64::NAN,
            implied_velocity_mm_s: 66.0,
        };
        let report = render_fit_report(&outcome);
        assert!(report.contains("field_rms_mg,nan,\n"), "{}", report);
        assert!(report.contains("implied_velocity_mm_s,66,\n"), "{}", report);
        assert!(report.contains("converged,1,\n"), "{}", report);
    }

    #[test]
    fn single_class_report_uses_single_fit_rows() {
        let outcome = FitOutcome::Single {
            fit: SingleFitResult {
                amp: 8.0,
                tau: 5.26e-5,
                covariance: [[0.01, 0.0], [0.0, 1e-12]],
                chi_square: 18.0,
                dof: 19,
                converged: true,
                iterations: 9,
                clock_only: true,
            },
            implied_velocity_mm_s: 65.6,
        };
        let report = render_fit_report(&outcome);
        assert!(report.contains("amp,8,"), "{}", report);
        assert!(report.contains("tau_us,52.59"), "{}", report);
        assert!(report.contains("field_rms_mg,nan,\n"), "{}", report);
        assert_eq!(outcome.series(), "fit_single");
        assert!((outcome.model(0.0) - 9.0).abs() < 1e-12);
    }
}
