//! Run manifests: every command that produces output also writes
//! `manifest.txt` recording the tool version, the full configuration, and
//! the derived physical quantities. Because the config parser skips the
//! `[run]` and `[derived]` sections, a manifest can be passed back to
//! `--config` to reproduce the run it describes.

use std::collections::HashMap;

use trapmem::{dephase::TransitionClass, trap, ModelError};

use crate::config::RunConfig;

/// Scalars derived from a configuration, in display units.
#[derive(Debug, Clone, Copy)]
pub struct DerivedQuantities {
    pub depth_uk: f64,
    pub radial_freq_hz: f64,
    pub axial_freq_hz: f64,
    pub scattering_rate_per_s: f64,
    pub rayleigh_range_mm: f64,
    pub sigma_v_mm_s: f64,
    pub sigma_r_um: f64,
    pub sigma_z_mm: f64,
    pub peak_density_per_cm3: f64,
    pub delta_k_per_mm: f64,
    pub tau_thermal_us: f64,
    pub tau_field_nonclock_us: f64,
    pub tau_nonclock_us: f64,
    pub tau_clock_us: f64,
}

/// Evaluates the full derived chain: trap parameters, cloud geometry,
/// and the per-class coherence times.
pub fn compute_derived(cfg: &RunConfig) -> Result<DerivedQuantities, ModelError> {
    let trap_cfg = cfg.trap();
    let ensemble = cfg.ensemble();
    let derived = trap::derive_trap(&trap_cfg)?;
    let (sigma_r, sigma_z) = trap::cloud_radii(&ensemble, derived.radial_freq, derived.axial_freq);
    let density = trap::peak_density(&ensemble, sigma_r, sigma_z);
    let model = cfg.dephasing()?;
    // The per-class times depend only on the class passed in, not on which
    // classes the population vector put in the model, so both are always
    // reportable.
    let clock = model.coherence_time(&TransitionClass::clock());
    let nonclock = model.coherence_time(&TransitionClass::non_clock());
    let field_nonclock = model.field_dephasing_time(&TransitionClass::non_clock());
    Ok(DerivedQuantities {
        depth_uk: derived.depth * 1e6,
        radial_freq_hz: derived.radial_freq / (2.0 * std::f64::consts::PI),
        axial_freq_hz: derived.axial_freq / (2.0 * std::f64::consts::PI),
        scattering_rate_per_s: derived.scattering_rate,
        rayleigh_range_mm: derived.rayleigh_range * 1e3,
        sigma_v_mm_s: model.sigma_v * 1e3,
        sigma_r_um: sigma_r * 1e6,
        sigma_z_mm: sigma_z * 1e3,
        peak_density_per_cm3: density / 1e6,
        delta_k_per_mm: model.delta_k / 1e3,
        tau_thermal_us: 1e6 / (model.sigma_v * model.delta_k),
        tau_field_nonclock_us: field_nonclock * 1e6,
        tau_nonclock_us: nonclock * 1e6,
        tau_clock_us: clock * 1e6,
    })
}

/// Renders a manifest: `[run]` bookkeeping, the exact configuration, and
/// the derived quantities. Floats print with their shortest round-trip
/// representation.
pub fn render_manifest(cfg: &RunConfig, derived: &DerivedQuantities, command: &str) -> String {
    let mut s = String::new();
    s.push_str("[run]\n");
    s.push_str(&format!("tool = trapmem {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!(
        "created_utc = {}\n",
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    ));
    s.push_str(&format!("command = {}\n", command));
    s.push('\n');
    s.push_str(&cfg.to_text());
    s.push_str("\n[derived]\n");
    s.push_str(&format!("depth_uk = {}\n", derived.depth_uk));
    s.push_str(&format!("radial_freq_hz = {}\n", derived.radial_freq_hz));
    s.push_str(&format!("axial_freq_hz = {}\n", derived.axial_freq_hz));
    s.push_str(&format!(
        "scattering_rate_per_s = {}\n",
        derived.scattering_rate_per_s
    ));
    s.push_str(&format!(
        "rayleigh_range_mm = {}\n",
        derived.rayleigh_range_mm
    ));
    s.push_str(&format!("sigma_v_mm_s = {}\n", derived.sigma_v_mm_s));
    s.push_str(&format!("sigma_r_um = {}\n", derived.sigma_r_um));
    s.push_str(&format!("sigma_z_mm = {}\n", derived.sigma_z_mm));
    s.push_str(&format!(
        "peak_density_per_cm3 = {}\n",
        derived.peak_density_per_cm3
    ));
    s.push_str(&format!("delta_k_per_mm = {}\n", derived.delta_k_per_mm));
    s.push_str(&format!("tau_thermal_us = {}\n", derived.tau_thermal_us));
    s.push_str(&format!(
        "tau_field_nonclock_us = {}\n",
        derived.tau_field_nonclock_us
    ));
    s.push_str(&format!("tau_nonclock_us = {}\n", derived.tau_nonclock_us));
    s.push_str(&format!("tau_clock_us = {}\n", derived.tau_clock_us));
    s
}

/// Extracts the `[derived]` section of a manifest as a key -> value map.
/// `inf` parses to infinity, matching how it is written.
pub fn parse_derived(text: &str) -> Result<HashMap<String, f64>, String> {
    let mut map = HashMap::new();
    let mut in_derived = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            in_derived = line == "[derived]";
            continue;
        }
        if !in_derived {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", idx + 1))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("line {}: `{}` is not a number", idx + 1, value.trim()))?;
        map.insert(key.trim().to_string(), v);
    }
    if map.is_empty() {
        return Err("no [derived] section found".into());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities_land_in_expected_ranges() {
        let d = compute_derived(&RunConfig::default()).unwrap();
        assert!(d.depth_uk > 400.0 && d.depth_uk < 600.0);
        assert!(d.radial_freq_hz > 1700.0 && d.radial_freq_hz < 2300.0);
        assert!(d.axial_freq_hz > 7.0 && d.axial_freq_hz < 13.0);
        assert!(d.sigma_v_mm_s > 62.0 && d.sigma_v_mm_s < 70.0);
        assert!(d.delta_k_per_mm > 261.0 && d.delta_k_per_mm < 319.0);
        assert!(d.tau_thermal_us > 47.0 && d.tau_thermal_us < 58.0);
        assert!(d.tau_nonclock_us < d.tau_clock_us);
        assert!((d.tau_clock_us - d.tau_thermal_us).abs() < 1e-9);
    }

    #[test]
    fn manifest_round_trips_as_config_and_parses_derived() {
        let mut cfg = RunConfig::default();
        cfg.rng_seed = 4242;
        cfg.trials_per_delay = 1234;
        let derived = compute_derived(&cfg).unwrap();
        let text = render_manifest(&cfg, &derived, "derive");
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        let map = parse_derived(&text).unwrap();
        assert_eq!(map["depth_uk"], derived.depth_uk);
        assert_eq!(map["tau_clock_us"], derived.tau_clock_us);
        assert_eq!(map.len(), 14);
    }

    #[test]
    fn zero_field_reports_infinite_field_time() {
        let mut cfg = RunConfig::default();
        cfg.field_rms_mg = 0.0;
        let derived = compute_derived(&cfg).unwrap();
        assert!(derived.tau_field_nonclock_us.is_infinite());
        assert!((derived.tau_nonclock_us - derived.tau_clock_us).abs() < 1e-9);
        let text = render_manifest(&cfg, &derived, "derive");
        let map = parse_derived(&text).unwrap();
        assert!(map["tau_field_nonclock_us"].is_infinite());
    }
}
