//! Acceptance gates for the whole toolchain, one test per criterion.
//!
//! Each test prints a single `criterion N (...): PASS|FAIL` line (visible
//! with `cargo test --test acceptance -- --nocapture`) and fails loudly
//! with the offending numbers when a gate is missed. Tolerances are
//! pinned here, next to the checks.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use trapmem::dephase::TransitionClass;
use trapmem::fit::{fit_decay, model_eval, model_gradient, single_exponent_fit};
use trapmem::stats::{auto_correlation, cauchy_schwarz, cross_correlation_from_counts,
    correlation_sweep};
use trapmem::{mc, DecayParams};
use trapmem_cli::commands::parse_results;
use trapmem_cli::config::RunConfig;
use trapmem_cli::manifest::parse_derived;

/// Collects gate failures so one criterion reports every miss at once.
struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Gate {
        Gate {
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if !ok {
            self.failures.push(detail);
        }
    }

    fn window(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.check(
            value >= lo && value <= hi,
            format!("{} = {} outside [{}, {}]", name, value, lo, hi),
        );
    }

    fn finish(self, number: u32, title: &str) {
        if self.failures.is_empty() {
            println!("criterion {} ({}): PASS", number, title);
        } else {
            println!("criterion {} ({}): FAIL", number, title);
            for f in &self.failures {
                println!("  - {}", f);
            }
            panic!(
                "criterion {} failed:\n{}",
                number,
                self.failures.join("\n")
            );
        }
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trapmem"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn read_report(path: &Path) -> HashMap<String, f64> {
    read(path)
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn criterion_1_derived_quantities_sit_in_their_windows() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = bin()
        .args(["derive", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let derived = parse_derived(&read(&dir.path().join("manifest.txt"))).unwrap();

    let mut gate = Gate::new();
    gate.window("trap depth [uK]", derived["depth_uk"], 400.0, 600.0);
    gate.window(
        "radial frequency [Hz]",
        derived["radial_freq_hz"],
        1700.0,
        2300.0,
    );
    gate.window("axial frequency [Hz]", derived["axial_freq_hz"], 7.0, 13.0);
    gate.window(
        "scattering rate [1/s]",
        derived["scattering_rate_per_s"],
        2.0,
        6.0,
    );
    gate.window("cloud radius [um]", derived["sigma_r_um"], 4.675, 6.325);
    gate.window("cloud extent [mm]", derived["sigma_z_mm"], 0.595, 1.105);
    gate.window(
        "peak density [1/cm^3]",
        derived["peak_density_per_cm3"],
        5e11,
        2e12,
    );
    gate.window("velocity spread [mm/s]", derived["sigma_v_mm_s"], 62.7, 69.3);
    gate.window(
        "wavevector mismatch [1/mm]",
        derived["delta_k_per_mm"],
        261.0,
        319.0,
    );
    gate.window(
        "thermal dephasing time [us]",
        derived["tau_thermal_us"],
        47.7,
        58.3,
    );
    gate.check(elapsed < 1.0, format!("derive took {:.2} s (limit 1 s)", elapsed));
    gate.finish(1, "derived trap and ensemble quantities");
}

#[test]
fn criterion_2_envelope_monte_carlo_tracks_the_analytic_curves() {
    let cfg = RunConfig::default();
    let model = cfg.dephasing().unwrap();
    let clock = TransitionClass::clock();
    let nonclock = TransitionClass::non_clock();
    let atoms = 16;
    let samples = 100_000;
    let start = Instant::now();

    let mut gate = Gate::new();
    for (i, t_us) in (0..=100).step_by(10).enumerate() {
        let t = t_us as f64 / 1e6;
        let (est_c, se_c) =
            mc::envelope_estimate(&model, &clock, atoms, t, samples, 123_400 + 2 * i as u64)
                .unwrap();
        let (est_nc, se_nc) =
            mc::envelope_estimate(&model, &nonclock, atoms, t, samples, 123_401 + 2 * i as u64)
                .unwrap();
        let env_c = model.coherence_envelope(&clock, t);
        let env_nc = model.coherence_envelope(&nonclock, t);
        // The default populations weight the two collected classes equally.
        let est_mix = 0.5 * (est_c + est_nc);
        let se_mix = 0.5 * (se_c * se_c + se_nc * se_nc).sqrt();
        let env_mix = model.ensemble_envelope(t);
        for (label, est, se, env) in [
            ("clock", est_c, se_c, env_c),
            ("nonclock", est_nc, se_nc, env_nc),
            ("mixed", est_mix, se_mix, env_mix),
        ] {
            gate.check(
                (est - env).abs() <= 3.0 * se,
                format!(
                    "{} envelope at {} us: estimate {} vs {} (3 se = {})",
                    label,
                    t_us,
                    est,
                    env,
                    3.0 * se
                ),
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    gate.check(
        elapsed < 60.0,
        format!("envelope sweep took {:.1} s (limit 60 s)", elapsed),
    );
    gate.finish(2, "Monte Carlo envelopes match the analytic decay");
}

#[test]
fn criterion_3_default_pipeline_reproduces_the_decay_and_its_violation_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = bin()
        .args(["pipeline", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut gate = Gate::new();
    gate.check(
        elapsed < 600.0,
        format!("pipeline took {:.0} s (limit 600 s)", elapsed),
    );

    let report = read_report(&dir.path().join("fit_report.csv"));
    gate.window("fitted tau_nc [us]", report["tau_nc_us"], 10.0, 22.0);
    gate.window("fitted tau_c [us]", report["tau_c_us"], 40.0, 60.0);
    gate.check(
        report["converged"] == 1.0,
        "fit did not converge".to_string(),
    );

    let points = parse_results(&read(&dir.path().join("results.csv"))).unwrap();
    let g0 = points
        .iter()
        .find(|p| p.delay == 0.0)
        .expect("zero-delay point")
        .g_value;
    gate.check(g0 > 2.0, format!("g(0) = {} not above 2", g0));

    // Nonclassical at every delay up to 60 us, classical again by 90 us.
    for line in read(&dir.path().join("cauchy_schwarz.csv")).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let delay_us: f64 = f[0].parse().unwrap();
        let significance: f64 = f[3].parse().unwrap();
        if delay_us <= 60.5 {
            gate.check(
                significance >= 2.0,
                format!(
                    "violation at {} us only {:.2} sigma (needs >= 2)",
                    delay_us, significance
                ),
            );
        } else if delay_us >= 89.5 {
            gate.check(
                significance < 2.0,
                format!(
                    "{} us still {:.2} sigma above the bound (needs < 2)",
                    delay_us, significance
                ),
            );
        }
    }
    gate.finish(3, "default run: correlation decay and Cauchy-Schwarz pattern");
}

#[test]
fn criterion_4_correlation_estimators_are_exact_and_calibrated() {
    let mut gate = Gate::new();

    // Closed-form check on a small table of counts.
    let p = cross_correlation_from_counts::<f64>(0.0, 1000, 100, 80, 40).unwrap();
    gate.check(
        (p.g_value - 5.0).abs() < 1e-12,
        format!("g from counts = {}", p.g_value),
    );
    gate.check(
        (p.std_error - 0.5361902647381804).abs() < 1e-12,
        format!("se from counts = {}", p.std_error),
    );
    let cs = cauchy_schwarz::<f64>(5.0, 0.1, 2.0, 2.0).unwrap();
    gate.check((cs.ratio - 6.25).abs() < 1e-12, format!("ratio = {}", cs.ratio));
    gate.check(
        (cs.significance - 30.0).abs() < 1e-12,
        format!("significance = {}", cs.significance),
    );
    // Independent arms: g = 1 and the delta-method bracket reduces to
    // (1-p_sas)/p_sas - (1-p_s)/p_s - (1-p_as)/p_as = 36 here.
    let q = cross_correlation_from_counts::<f64>(0.0, 1000, 100, 200, 20).unwrap();
    gate.check(
        (q.g_value - 1.0).abs() < 1e-12,
        format!("independent-arm g = {}", q.g_value),
    );
    gate.check(
        (q.std_error - (0.036f64).sqrt()).abs() < 1e-12,
        format!("independent-arm se = {}", q.std_error),
    );

    // Coverage of the delta-method error bar: draw click tables with known
    // g = 2 and count how often the one-sigma interval covers the truth.
    let mut rng = ChaCha8Rng::seed_from_u64(42_424);
    let (p11, p10, p01) = (0.02, 0.08, 0.08);
    let reps = 1000;
    let n = 2000u64;
    let mut covered = 0;
    for _ in 0..reps {
        let (mut n_sas, mut n_s, mut n_as) = (0u64, 0u64, 0u64);
        for _ in 0..n {
            let u: f64 = rng.random();
            if u < p11 {
                n_sas += 1;
                n_s += 1;
                n_as += 1;
            } else if u < p11 + p10 {
                n_s += 1;
            } else if u < p11 + p10 + p01 {
                n_as += 1;
            }
        }
        let est = cross_correlation_from_counts::<f64>(0.0, n, n_s, n_as, n_sas).unwrap();
        if (est.g_value - 2.0).abs() <= est.std_error {
            covered += 1;
        }
    }
    let coverage = covered as f64 / reps as f64;
    gate.window("one-sigma coverage", coverage, 0.633, 0.733);

    // Thermal photon numbers must show g2 = 2, Poisson numbers g2 = 1.
    let photon = trapmem::PhotonModel {
        mean_excitation: mc::mean_excitations(0.1, [1.0, 0.0, 0.0]).unwrap(),
        stokes_det_eff: 1.0,
        antistokes_det_eff: 1.0,
        retrieval_eff: 1.0,
        dark_prob_s: 0.0,
        dark_prob_as: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let thermal: Vec<u32> = (0..200_000)
        .map(|_| mc::sample_excitations(&photon, &mut rng)[0] as u32)
        .collect();
    check_blocked_g2(&mut gate, "thermal", &thermal, 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(778);
    let poisson = Poisson::new(0.2).unwrap();
    let poissonian: Vec<u32> = (0..200_000)
        .map(|_| poisson.sample(&mut rng) as u32)
        .collect();
    check_blocked_g2(&mut gate, "poisson", &poissonian, 1.0);

    gate.finish(4, "correlation estimators: exactness, coverage, g2 references");
}

/// Auto-correlation of `numbers` in 20 blocks: the blocked mean must land
/// within three blocked standard errors of `expect`.
fn check_blocked_g2(gate: &mut Gate, label: &str, numbers: &[u32], expect: f64) {
    let blocks = 20;
    let size = numbers.len() / blocks;
    let g2s: Vec<f64> = (0..blocks)
        .map(|b| auto_correlation(&numbers[b * size..(b + 1) * size]).unwrap())
        .collect();
    let mean = g2s.iter().sum::<f64>() / blocks as f64;
    let var = g2s.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (blocks - 1) as f64;
    let se = (var / blocks as f64).sqrt();
    gate.check(
        (mean - expect).abs() <= 3.0 * se,
        format!(
            "{} g2 = {:.4} +/- {:.4}, expected {}",
            label, mean, se, expect
        ),
    );
}

#[test]
fn criterion_5_fit_recovers_known_parameters_and_physics() {
    let mut gate = Gate::new();
    let truth = DecayParams {
        amp_nc: 3.0,
        amp_c: 3.0,
        tau_nc: 16e-6,
        tau_c: 45e-6,
    };

    // Noiseless synthetic data: the fit must land on the truth.
    let points: Vec<(f64, f64, f64)> = (0..=20)
        .map(|k| {
            let t = 5e-6 * k as f64;
            (t, model_eval(&truth, t), 0.05)
        })
        .collect();
    let fit = fit_decay(&points, None).unwrap();
    for (name, got, want) in [
        ("amp_nc", fit.params.amp_nc, truth.amp_nc),
        ("amp_c", fit.params.amp_c, truth.amp_c),
        ("tau_nc", fit.params.tau_nc, truth.tau_nc),
        ("tau_c", fit.params.tau_c, truth.tau_c),
    ] {
        gate.check(
            ((got - want) / want).abs() < 1e-6,
            format!("noiseless {}: {} vs {}", name, got, want),
        );
    }
    gate.check(fit.converged, "noiseless fit did not converge".to_string());

    // Analytic gradient against central finite differences.
    for &t in &[0.0, 7e-6, 23e-6, 61e-6] {
        let grad = model_gradient(&truth, t);
        let fields: [(fn(&mut DecayParams) -> &mut f64, f64); 4] = [
            (|p| &mut p.amp_nc, truth.amp_nc),
            (|p| &mut p.amp_c, truth.amp_c),
            (|p| &mut p.tau_nc, truth.tau_nc),
            (|p| &mut p.tau_c, truth.tau_c),
        ];
        for (i, (field, scale)) in fields.iter().enumerate() {
            let h = 1e-6 * scale;
            let mut hi = truth.clone();
            *field(&mut hi) += h;
            let mut lo = truth.clone();
            *field(&mut lo) -= h;
            let fd = (model_eval(&hi, t) - model_eval(&lo, t)) / (2.0 * h);
            gate.check(
                (fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0),
                format!("gradient[{}] at t = {}: analytic {} vs fd {}", i, t, grad[i], fd),
            );
        }
    }

    // Rescaling time must rescale the taus and nothing else.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let noisy: Vec<(f64, f64, f64)> = (0..=20)
        .map(|k| {
            let t = 5e-6 * k as f64;
            let eps: f64 = rng.sample(StandardNormal);
            (t, model_eval(&truth, t) + 0.08 * eps, 0.08)
        })
        .collect();
    let si = fit_decay(&noisy, None).unwrap();
    let scaled: Vec<(f64, f64, f64)> = noisy.iter().map(|p| (p.0 * 1e6, p.1, p.2)).collect();
    let us = fit_decay(&scaled, None).unwrap();
    for (name, a, b) in [
        ("amp_nc", si.params.amp_nc, us.params.amp_nc),
        ("amp_c", si.params.amp_c, us.params.amp_c),
        ("tau_nc", si.params.tau_nc * 1e6, us.params.tau_nc),
        ("tau_c", si.params.tau_c * 1e6, us.params.tau_c),
    ] {
        gate.check(
            ((a - b) / b).abs() < 1e-8,
            format!("rescaling moved {}: {} vs {}", name, a, b),
        );
    }

    // End-to-end in-process run with only the clock class populated: the
    // single-Gaussian fit must recover the configured motional time. The
    // anti-Stokes background is raised so the correlation tail is
    // background-dominated and decays with the envelope itself.
    let mut cfg = RunConfig::default();
    cfg.populations = [1.0, 0.0, 0.0];
    cfg.dark_prob_as = 0.05;
    let model = cfg.dephasing().unwrap();
    let events = mc::run_plan(&cfg.plan(), &model, &cfg.photon().unwrap()).unwrap();
    let sweep = correlation_sweep(&events).unwrap();
    let data: Vec<(f64, f64, f64)> = sweep
        .iter()
        .map(|p| (p.delay, p.g_value, p.std_error))
        .collect();
    let single = single_exponent_fit(&data, true).unwrap();
    let target = 1.0 / (model.sigma_v * model.delta_k);
    gate.check(
        ((single.tau - target) / target).abs() < 0.10,
        format!(
            "clock-only tau = {:.2} us vs motional time {:.2} us",
            single.tau * 1e6,
            target * 1e6
        ),
    );
    gate.finish(5, "fits recover synthetic parameters and the motional time");
}

#[test]
fn criterion_6_reruns_are_bit_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "[plan]\ndelays_us = 0:100:10\ntrials_per_delay = 10000\natoms_per_excitation = 64\n",
    )
    .unwrap();
    let run = |out_dir: &Path, threads: &str| {
        let out = bin()
            .args([
                "pipeline",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    run(&serial, "1");
    run(&parallel, "4");

    let mut gate = Gate::new();
    for name in ["events.csv", "fit_report.csv"] {
        gate.check(
            read(&serial.join(name)) == read(&parallel.join(name)),
            format!("{} differs between 1-thread and 4-thread runs", name),
        );
    }
    gate.finish(6, "simulation and fit bytes independent of thread count");
}
