//! Run configuration: a sectioned `key = value` text format with
//! unit-suffixed keys, plus conversion into the core model types.
//!
//! All scalar fields are stored in the units the file uses (nm, uK, mG,
//! us, ...) and converted to SI only when the core structs are built, so
//! a config survives a write/parse round trip bit-exactly and two runs
//! from the same file see identical inputs.

use std::path::Path;

use trapmem::mc::mean_excitations;
use trapmem::{
    BeamGeometry, DephasingModel, EnsembleConfig, ModelError, PhotonModel, SimPlan, TrapConfig,
};

/// Complete input set for a run, in file units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [trap]
    pub wavelength_nm: f64,
    pub power_w: f64,
    pub waist_um: f64,
    pub bias_field_g: f64,
    // [ensemble]
    pub atom_count: u64,
    pub temperature_uk: f64,
    /// Relative populations of the three ground-state Zeeman levels
    /// (clock source, field-sensitive source, inert), in that order.
    pub populations: [f64; 3],
    // [beam]
    pub write_wavelength_nm: f64,
    pub stokes_angle_deg: f64,
    pub write_detuning_mhz: f64,
    // [dephasing]
    pub field_rms_mg: f64,
    /// Optional override of the thermal velocity spread; when unset the
    /// value derived from the ensemble temperature is used.
    pub sigma_v_mm_s: Option<f64>,
    // [photon]
    pub chi: f64,
    pub stokes_det_eff: f64,
    pub antistokes_det_eff: f64,
    pub retrieval_eff: f64,
    pub dark_prob_s: f64,
    pub dark_prob_as: f64,
    // [plan]
    pub delays_us: Vec<f64>,
    pub trials_per_delay: u64,
    pub rng_seed: u64,
    pub atoms_per_excitation: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            wavelength_nm: 1030.0,
            power_w: 7.0,
            waist_um: 36.0,
            bias_field_g: 3.23,
            atom_count: 200_000,
            temperature_uk: 45.0,
            populations: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            write_wavelength_nm: 794.98,
            stokes_angle_deg: 2.1,
            write_detuning_mhz: 100.0,
            field_rms_mg: 8.0,
            sigma_v_mm_s: None,
            chi: 0.02,
            stokes_det_eff: 0.55,
            antistokes_det_eff: 0.5,
            retrieval_eff: 0.5,
            dark_prob_s: 1e-4,
            dark_prob_as: 0.018,
            delays_us: (0..=20).map(|k| 5.0 * k as f64).collect(),
            trials_per_delay: 300_000,
            rng_seed: 20260823,
            atoms_per_excitation: 256,
        }
    }
}

impl RunConfig {
    /// Serializes in the same section order `parse` documents. Floats use
    /// the shortest round-trip representation, so `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[trap]\n");
        s.push_str(&format!("wavelength_nm = {}\n", self.wavelength_nm));
        s.push_str(&format!("power_w = {}\n", self.power_w));
        s.push_str(&format!("waist_um = {}\n", self.waist_um));
        s.push_str(&format!("bias_field_g = {}\n", self.bias_field_g));
        s.push_str("\n[ensemble]\n");
        s.push_str(&format!("atom_count = {}\n", self.atom_count));
        s.push_str(&format!("temperature_uk = {}\n", self.temperature_uk));
        s.push_str(&format!(
            "populations = {},{},{}\n",
            self.populations[0], self.populations[1], self.populations[2]
        ));
        s.push_str("\n[beam]\n");
        s.push_str(&format!(
            "write_wavelength_nm = {}\n",
            self.write_wavelength_nm
        ));
        s.push_str(&format!("stokes_angle_deg = {}\n", self.stokes_angle_deg));
        s.push_str(&format!(
            "write_detuning_mhz = {}\n",
            self.write_detuning_mhz
        ));
        s.push_str("\n[dephasing]\n");
        s.push_str(&format!("field_rms_mg = {}\n", self.field_rms_mg));
        if let Some(sv) = self.sigma_v_mm_s {
            s.push_str(&format!("sigma_v_mm_s = {}\n", sv));
        }
        s.push_str("\n[photon]\n");
        s.push_str(&format!("chi = {}\n", self.chi));
        s.push_str(&format!("stokes_det_eff = {}\n", self.stokes_det_eff));
        s.push_str(&format!(
            "antistokes_det_eff = {}\n",
            self.antistokes_det_eff
        ));
        s.push_str(&format!("retrieval_eff = {}\n", self.retrieval_eff));
        s.push_str(&format!("dark_prob_s = {}\n", self.dark_prob_s));
        s.push_str(&format!("dark_prob_as = {}\n", self.dark_prob_as));
        s.push_str("\n[plan]\n");
        let delays: Vec<String> = self.delays_us.iter().map(|d| format!("{}", d)).collect();
        s.push_str(&format!("delays_us = {}\n", delays.join(",")));
        s.push_str(&format!("trials_per_delay = {}\n", self.trials_per_delay));
        s.push_str(&format!("rng_seed = {}\n", self.rng_seed));
        s.push_str(&format!(
            "atoms_per_excitation = {}\n",
            self.atoms_per_excitation
        ));
        s
    }

    /// Parses the sectioned `key = value` format. Unspecified keys keep
    /// their defaults, so partial configs are fine. `[run]` and `[derived]`
    /// sections are skipped wholesale, which lets a manifest written by a
    /// previous run be fed back in as a config.
    ///
    /// Errors carry 1-based line numbers.
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r').trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated section header", line_no))?;
                match name {
                    "trap" | "ensemble" | "beam" | "dephasing" | "photon" | "plan" | "run"
                    | "derived" => section = name.to_string(),
                    other => return Err(format!("line {}: unknown section [{}]", line_no, other)),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", line_no))?;
            let key = key.trim();
            let value = value.trim();
            match (section.as_str(), key) {
                ("run", _) | ("derived", _) => {} // manifest bookkeeping, not input
                ("trap", "wavelength_nm") => cfg.wavelength_nm = num(value, line_no)?,
                ("trap", "power_w") => cfg.power_w = num(value, line_no)?,
                ("trap", "waist_um") => cfg.waist_um = num(value, line_no)?,
                ("trap", "bias_field_g") => cfg.bias_field_g = num(value, line_no)?,
                ("ensemble", "atom_count") => cfg.atom_count = int(value, line_no)?,
                ("ensemble", "temperature_uk") => cfg.temperature_uk = num(value, line_no)?,
                ("ensemble", "populations") => cfg.populations = triple(value, line_no)?,
                ("beam", "write_wavelength_nm") => cfg.write_wavelength_nm = num(value, line_no)?,
                ("beam", "stokes_angle_deg") => cfg.stokes_angle_deg = num(value, line_no)?,
                ("beam", "write_detuning_mhz") => cfg.write_detuning_mhz = num(value, line_no)?,
                ("dephasing", "field_rms_mg") => cfg.field_rms_mg = num(value, line_no)?,
                ("dephasing", "sigma_v_mm_s") => cfg.sigma_v_mm_s = Some(num(value, line_no)?),
                ("photon", "chi") => cfg.chi = num(value, line_no)?,
                ("photon", "stokes_det_eff") => cfg.stokes_det_eff = num(value, line_no)?,
                ("photon", "antistokes_det_eff") => cfg.antistokes_det_eff = num(value, line_no)?,
                ("photon", "retrieval_eff") => cfg.retrieval_eff = num(value, line_no)?,
                ("photon", "dark_prob_s") => cfg.dark_prob_s = num(value, line_no)?,
                ("photon", "dark_prob_as") => cfg.dark_prob_as = num(value, line_no)?,
                ("plan", "delays_us") => cfg.delays_us = delays(value, line_no)?,
                ("plan", "trials_per_delay") => cfg.trials_per_delay = int(value, line_no)?,
                ("plan", "rng_seed") => cfg.rng_seed = int(value, line_no)?,
                ("plan", "atoms_per_excitation") => {
                    cfg.atoms_per_excitation = int(value, line_no)? as usize
                }
                ("", k) => return Err(format!("line {}: key `{}` before any section", line_no, k)),
                (s, k) => return Err(format!("line {}: unknown key `{}` in [{}]", line_no, k, s)),
            }
        }
        Ok(cfg)
    }

    /// Reads and parses a config file, prefixing errors with its path.
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {}", path.display(), e))?;
        RunConfig::parse(&text).map_err(|e| format!("{}: {}", path.display(), e))
    }

    /// Validates every core struct this config expands to.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.trap().validate()?;
        self.ensemble().validate()?;
        self.beam().validate()?;
        self.plan().validate()?;
        self.photon()?.validate()?;
        self.dephasing()?.validate()?;
        Ok(())
    }

    pub fn trap(&self) -> TrapConfig {
        TrapConfig {
            wavelength: self.wavelength_nm / 1e9,
            power: self.power_w,
            waist: self.waist_um / 1e6,
            bias_field: self.bias_field_g / 1e4,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            atom_count: self.atom_count,
            temperature: self.temperature_uk / 1e6,
            zeeman_populations: self.populations,
        }
    }

    pub fn beam(&self) -> BeamGeometry {
        BeamGeometry {
            write_wavelength: self.write_wavelength_nm / 1e9,
            stokes_angle: self.stokes_angle_deg.to_radians(),
            write_detuning: self.write_detuning_mhz * 1e6,
        }
    }

    pub fn plan(&self) -> SimPlan {
        SimPlan {
            delays: self.delays_us.iter().map(|d| d / 1e6).collect(),
            trials_per_delay: self.trials_per_delay,
            rng_seed: self.rng_seed,
            atoms_per_excitation: self.atoms_per_excitation,
        }
    }

    pub fn photon(&self) -> Result<PhotonModel, ModelError> {
        Ok(PhotonModel {
            mean_excitation: mean_excitations(self.chi, self.populations)?,
            stokes_det_eff: self.stokes_det_eff,
            antistokes_det_eff: self.antistokes_det_eff,
            retrieval_eff: self.retrieval_eff,
            dark_prob_s: self.dark_prob_s,
            dark_prob_as: self.dark_prob_as,
        })
    }

    /// Velocity spread actually used: the configured override, or the
    /// thermal value for the ensemble temperature.
    pub fn sigma_v(&self) -> f64 {
        match self.sigma_v_mm_s {
            Some(sv) => sv / 1e3,
            None => trapmem::trap::thermal_velocity(&self.ensemble()),
        }
    }

    pub fn dephasing(&self) -> Result<DephasingModel, ModelError> {
        Ok(DephasingModel {
            delta_k: trapmem::trap::momentum_transfer(&self.beam()),
            sigma_v: self.sigma_v(),
            field_rms: self.field_rms_mg / 1e7,
            classes: trapmem::dephase::classes_from_populations(self.populations)?,
        })
    }
}

fn num(value: &str, line_no: usize) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("line {}: `{}` is not a number", line_no, value))
}

fn int(value: &str, line_no: usize) -> Result<u64, String> {
    value
        .parse::<u64>()
        .map_err(|_| format!("line {}: `{}` is not a non-negative integer", line_no, value))
}

fn triple(value: &str, line_no: usize) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!(
            "line {}: expected three comma-separated values, got {}",
            line_no,
            parts.len()
        ));
    }
    Ok([
        num(parts[0], line_no)?,
        num(parts[1], line_no)?,
        num(parts[2], line_no)?,
    ])
}

/// `start:stop:step` (inclusive of `stop` when it sits on the grid) or an
/// explicit comma-separated list, in microseconds.
fn delays(value: &str, line_no: usize) -> Result<Vec<f64>, String> {
    const MAX_DELAYS: usize = 100_000;
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() != 3 {
            return Err(format!(
                "line {}: delay range must be start:stop:step",
                line_no
            ));
        }
        let start = num(parts[0].trim(), line_no)?;
        let stop = num(parts[1].trim(), line_no)?;
        let step = num(parts[2].trim(), line_no)?;
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(format!(
                "line {}: delay range needs finite start <= stop and step > 0",
                line_no
            ));
        }
        let mut out = Vec::new();
        // Half-a-step slack so e.g. 0:100:5 includes 100 despite rounding.
        let mut k = 0u64;
        loop {
            let d = start + step * k as f64;
            if d > stop + 0.5 * step {
                break;
            }
            out.push(d);
            if out.len() > MAX_DELAYS {
                return Err(format!("line {}: delay range produces too many points", line_no));
            }
            k += 1;
        }
        Ok(out)
    } else {
        let out: Result<Vec<f64>, String> =
            value.split(',').map(|p| num(p.trim(), line_no)).collect();
        let out = out?;
        if out.is_empty() {
            return Err(format!("line {}: empty delay list", line_no));
        }
        Ok(out)
    }
}
