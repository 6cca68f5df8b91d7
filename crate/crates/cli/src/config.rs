//! Simulation config in human units. Field suffixes carry the unit.

use std::f64::consts::PI;
use std::path::Path;

use extinction_core::spectra::{CouplingParams, EmitterParams};
use extinction_core::synth::{NoiseModel, ScenarioConfig};
use extinction_core::units::{mhz_to_rad_s, rad, wavelength_nm_to_omega};
use serde::{Deserialize, Serialize};

use crate::{CliError, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    /// Excited-state lifetime `1 / Gamma1`.
    pub lifetime_ns: f64,
    /// Zero-power linewidth (FWHM) `Gamma2 / pi`. Lifetime limited when omitted.
    #[serde(default)]
    pub homogeneous_linewidth_mhz: Option<f64>,
    /// Zero-phonon fraction of the decay.
    pub alpha_dimless: f64,
    pub wavelength_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub beta_eff_dimless: f64,
    pub t0_mag_dimless: f64,
    pub phi_t_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub format_version: u32,
    pub emitter: EmitterConfig,
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub leak_dimless: f64,
    pub scan: ScanConfig,
    /// Pump powers. Without any power a single zero-power transmission scan is written.
    #[serde(default)]
    pub powers_w: Vec<f64>,
    /// Pump powers as multiples of the saturation power; exclusive with `powers_w`.
    #[serde(default)]
    pub powers_saturation_multiple_dimless: Vec<f64>,
    #[serde(default = "NoiseModel::none")]
    pub noise: NoiseModel,
    #[serde(default = "NoiseModel::none")]
    pub fluorescence_noise: NoiseModel,
    #[serde(default = "one")]
    pub eta_dimless: f64,
    #[serde(default = "one")]
    pub fluorescence_gain_counts: f64,
    #[serde(default)]
    pub background_counts: f64,
}

fn field(name: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("config field `{name}`: {reason}"))
}

fn check(ok: bool, name: &str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(field(name, reason))
    }
}

impl SimulationConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let cfg: SimulationConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check(
            self.format_version == FORMAT_VERSION,
            "format_version",
            &format!("unsupported version, expected {FORMAT_VERSION}"),
        )?;
        let e = &self.emitter;
        check(
            e.lifetime_ns.is_finite() && e.lifetime_ns > 0.0,
            "emitter.lifetime_ns",
            "must be > 0",
        )?;
        if let Some(lw) = e.homogeneous_linewidth_mhz {
            let limit = 1e3 / (2.0 * PI * e.lifetime_ns);
            check(
                lw.is_finite() && lw >= limit * (1.0 - 1e-12),
                "emitter.homogeneous_linewidth_mhz",
                &format!("must be at least the lifetime limit {limit:.4} MHz"),
            )?;
        }
        check(
            e.alpha_dimless > 0.0 && e.alpha_dimless <= 1.0,
            "emitter.alpha_dimless",
            "must be in (0, 1]",
        )?;
        check(
            e.wavelength_nm.is_finite() && e.wavelength_nm > 0.0,
            "emitter.wavelength_nm",
            "must be > 0",
        )?;
        let c = &self.coupling;
        check(
            (0.0..=1.0).contains(&c.beta_eff_dimless),
            "coupling.beta_eff_dimless",
            "must be in [0, 1]",
        )?;
        check(
            c.t0_mag_dimless > 0.0 && c.t0_mag_dimless <= 1.0,
            "coupling.t0_mag_dimless",
            "must be in (0, 1]",
        )?;
        check(
            c.phi_t_deg.is_finite(),
            "coupling.phi_t_deg",
            "must be finite",
        )?;
        check(
            self.leak_dimless.is_finite() && self.leak_dimless >= 0.0,
            "leak_dimless",
            "must be >= 0",
        )?;
        check(self.scan.points >= 5, "scan.points", "must be at least 5")?;
        check(
            self.scan.start_mhz.is_finite()
                && self.scan.stop_mhz.is_finite()
                && self.scan.stop_mhz > self.scan.start_mhz,
            "scan.stop_mhz",
            "must be finite and greater than scan.start_mhz",
        )?;
        check(
            self.powers_w.is_empty() || self.powers_saturation_multiple_dimless.is_empty(),
            "powers_saturation_multiple_dimless",
            "cannot be combined with powers_w",
        )?;
        for (i, p) in self.powers_w.iter().enumerate() {
            check(
                p.is_finite() && *p > 0.0,
                &format!("powers_w[{i}]"),
                "must be > 0",
            )?;
        }
        for (i, p) in self.powers_saturation_multiple_dimless.iter().enumerate() {
            check(
                p.is_finite() && *p > 0.0,
                &format!("powers_saturation_multiple_dimless[{i}]"),
                "must be > 0",
            )?;
        }
        for (name, n) in [
            ("noise", &self.noise),
            ("fluorescence_noise", &self.fluorescence_noise),
        ] {
            n.validate(name)
                .map_err(|e| field(&format!("{name}.magnitude"), e))?;
        }
        check(
            self.eta_dimless.is_finite() && self.eta_dimless > 0.0,
            "eta_dimless",
            "must be > 0",
        )?;
        check(
            self.fluorescence_gain_counts.is_finite() && self.fluorescence_gain_counts > 0.0,
            "fluorescence_gain_counts",
            "must be > 0",
        )?;
        check(
            self.background_counts.is_finite(),
            "background_counts",
            "must be finite",
        )?;
        Ok(())
    }

    pub fn emitter_params(&self) -> Result<EmitterParams, CliError> {
        let e = &self.emitter;
        let g1 = 1e9 / e.lifetime_ns;
        let g2 = match e.homogeneous_linewidth_mhz {
            Some(lw) => (PI * lw * 1e6).max(g1 / 2.0),
            None => g1 / 2.0,
        };
        EmitterParams::with_alpha(
            g1,
            g2,
            e.alpha_dimless,
            wavelength_nm_to_omega(e.wavelength_nm),
        )
        .map_err(|err| field("emitter", err))
    }

    pub fn to_scenario(&self) -> Result<ScenarioConfig, CliError> {
        self.validate()?;
        let emitter = self.emitter_params()?;
        let c = &self.coupling;
        let coupling =
            CouplingParams::symmetric(c.beta_eff_dimless, c.t0_mag_dimless, rad(c.phi_t_deg))
                .map_err(|err| field("coupling", err))?;
        let n = self.scan.points;
        let detunings = (0..n)
            .map(|k| {
                let f = self.scan.start_mhz
                    + (self.scan.stop_mhz - self.scan.start_mhz) * k as f64 / (n - 1) as f64;
                mhz_to_rad_s(f)
            })
            .collect();
        let mut sc = ScenarioConfig {
            emitter,
            coupling,
            leak: self.leak_dimless,
            detunings,
            powers: self.powers_w.clone(),
            noise: self.noise,
            fluorescence_noise: self.fluorescence_noise,
            eta: self.eta_dimless,
            fluorescence_gain: self.fluorescence_gain_counts,
            background: self.background_counts,
        };
        if !self.powers_saturation_multiple_dimless.is_empty() {
            let p_sat = sc
                .saturation_power()
                .map_err(|err| field("coupling.beta_eff_dimless", err))?;
            sc.powers = self
                .powers_saturation_multiple_dimless
                .iter()
                .map(|m| m * p_sat)
                .collect();
        }
        sc.validate()
            .map_err(|err| CliError::usage(err.to_string()))?;
        Ok(sc)
    }
}
