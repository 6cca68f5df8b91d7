//! Synthetic experiments: noisy transmission and fluorescence scans, pump
//! power series, and the sideband-leak robustness study.
//!
//! Noise streams are keyed by (seed, channel, pump power) so any single
//! spectrum can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::fit_fano;
use crate::inversion::{select_physical_branch, solve_beta_phi};
use crate::spectra::{
    bloch_steady_state, fano_params, rabi_from_power, saturation_power, transmission_with_leak,
    CouplingParams, EmitterParams, Spectrum,
};

const TRANSMISSION_TAG: u64 = 0x5452_414e_534d_4954;
const FLUORESCENCE_TAG: u64 = 0x464c_554f_5245_5343;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Standard deviation `magnitude` times the peak `|y|` of the noiseless trace.
    GaussianRelative,
    /// Standard deviation `magnitude`.
    GaussianAbsolute,
    /// `magnitude` counts per unit signal, Poisson distributed.
    PoissonCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub magnitude: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            kind: NoiseKind::GaussianAbsolute,
            magnitude: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::param(
                format!("{name}.magnitude"),
                "must be finite and >= 0",
            ));
        }
        if self.kind == NoiseKind::PoissonCounts && self.magnitude == 0.0 {
            return Err(Error::param(
                format!("{name}.magnitude"),
                "poisson-counts needs a positive count scale",
            ));
        }
        Ok(())
    }

    fn is_silent(&self) -> bool {
        self.magnitude == 0.0 && self.kind != NoiseKind::PoissonCounts
    }

    /// Noisy values and their sigmas. Draws are sequential within the
    /// stream for `(tag, key)`.
    fn apply(&self, clean: &[f64], tag: u64, key: u64) -> (Vec<f64>, Vec<f64>) {
        if self.is_silent() {
            return (clean.to_vec(), vec![0.0; clean.len()]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ tag);
        rng.set_stream(key);
        match self.kind {
            NoiseKind::GaussianAbsolute | NoiseKind::GaussianRelative => {
                let sigma = if self.kind == NoiseKind::GaussianAbsolute {
                    self.magnitude
                } else {
                    self.magnitude * clean.iter().fold(0.0f64, |a, y| a.max(y.abs()))
                };
                let nd = Normal::new(0.0, sigma).expect("sigma is finite and >= 0");
                let y = clean.iter().map(|v| v + nd.sample(&mut rng)).collect();
                (y, vec![sigma; clean.len()])
            }
            NoiseKind::PoissonCounts => {
                let m = self.magnitude;
                let mut y = Vec::with_capacity(clean.len());
                let mut s = Vec::with_capacity(clean.len());
                for &v in clean {
                    let lambda = (v * m).max(0.0);
                    let counts = if lambda > 0.0 {
                        Poisson::new(lambda)
                            .expect("positive rate")
                            .sample(&mut rng)
                    } else {
                        0.0
                    };
                    y.push(counts / m);
                    s.push(counts.max(1.0).sqrt() / m);
                }
                (y, s)
            }
        }
    }
}

fn default_gain() -> f64 {
    1.0
}

/// Everything needed to synthesize one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub emitter: EmitterParams,
    pub coupling: CouplingParams,
    /// Fraction `epsilon` of the scattered power re-detected at sideband frequencies.
    #[serde(default)]
    pub leak: f64,
    /// Laser detunings from the emitter resonance (rad/s), strictly increasing.
    pub detunings: Vec<f64>,
    /// Pump powers (W).
    pub powers: Vec<f64>,
    pub noise: NoiseModel,
    pub fluorescence_noise: NoiseModel,
    /// Unknown setup attenuation applied to the normalized transmission.
    pub eta: f64,
    /// Fluorescence counts per unit excited-state population.
    #[serde(default = "default_gain")]
    pub fluorescence_gain: f64,
    #[serde(default)]
    pub background: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.coupling.validate()?;
        if !(self.leak.is_finite() && self.leak >= 0.0) {
            return Err(Error::param("leak", "must be finite and >= 0"));
        }
        if self.detunings.len() < Spectrum::MIN_FIT_POINTS {
            return Err(Error::param(
                "detunings",
                format!("need at least {} points", Spectrum::MIN_FIT_POINTS),
            ));
        }
        if !self.detunings.windows(2).all(|w| w[0] < w[1])
            || !self.detunings.iter().all(|d| d.is_finite())
        {
            return Err(Error::param(
                "detunings",
                "must be finite and strictly increasing",
            ));
        }
        for (i, p) in self.powers.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::param(
                    format!("powers[{i}]"),
                    "must be finite and > 0",
                ));
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::param("eta", "must be finite and > 0"));
        }
        if !(self.fluorescence_gain.is_finite() && self.fluorescence_gain > 0.0) {
            return Err(Error::param("fluorescence_gain", "must be finite and > 0"));
        }
        if !self.background.is_finite() {
            return Err(Error::param("background", "must be finite"));
        }
        if !(self.emitter.omega0() > 0.0) {
            return Err(Error::param(
                "omega0",
                "must be > 0 to convert power to Rabi frequency",
            ));
        }
        self.noise.validate("noise")?;
        self.fluorescence_noise.validate("fluorescence_noise")?;
        Ok(())
    }

    /// Saturation power `P_sat` (W).
    pub fn saturation_power(&self) -> Result<f64> {
        saturation_power(
            &self.emitter,
            self.coupling.beta_pump,
            self.emitter.omega0(),
        )
    }

    fn rabi(&self, power: f64) -> Result<f64> {
        rabi_from_power(
            self.coupling.beta_pump,
            self.emitter.gamma1_zpl(),
            power,
            self.emitter.omega0(),
        )
    }

    fn truth_meta(&self, spectrum: Spectrum, power: f64, rabi: f64) -> Spectrum {
        let s = rabi * rabi / (self.emitter.gamma1_total() * self.emitter.gamma2());
        let beta = self.coupling.beta_scaled(self.emitter.alpha());
        let shape = fano_params(beta, self.coupling.phi_t, self.emitter.linewidth_ratio(), s);
        spectrum
            .with_meta("power_w", power)
            .with_meta("saturation", s)
            .with_meta("fwhm_rad_s", self.emitter.fwhm(s))
            .with_meta("gamma2_rad_s", self.emitter.gamma2())
            .with_meta("beta_eff", self.coupling.beta_eff())
            .with_meta("phi_t_rad", self.coupling.phi_t)
            .with_meta("visibility", shape.visibility)
            .with_meta("asymmetry", shape.asymmetry)
            .with_meta("leak", self.leak)
            .with_meta("eta", self.eta)
    }
}

/// Transmission scan at pump power `power`: `eta` times the normalized
/// transmission with leak, plus noise. The truth is recorded in the metadata.
pub fn generate_spectrum(config: &ScenarioConfig, power: f64) -> Result<Spectrum> {
    config.validate()?;
    let rabi = config.rabi(power)?;
    let beta = config.coupling.beta_scaled(config.emitter.alpha());
    let clean: Vec<f64> = config
        .detunings
        .iter()
        .map(|&d| {
            config.eta
                * transmission_with_leak(
                    &config.emitter,
                    beta,
                    config.coupling.phi_t,
                    rabi,
                    d,
                    config.leak,
                )
        })
        .collect();
    let (y, s) = config
        .noise
        .apply(&clean, TRANSMISSION_TAG, power.to_bits());
    let sp =
        Spectrum::from_columns(&config.detunings, &y, &s)?.with_meta("channel", "transmission");
    Ok(config.truth_meta(sp, power, rabi))
}

/// Fluorescence scan `gain * rho_ee + background` at pump power `power`.
pub fn generate_fluorescence(config: &ScenarioConfig, power: f64) -> Result<Spectrum> {
    config.validate()?;
    let rabi = config.rabi(power)?;
    let clean: Vec<f64> = config
        .detunings
        .iter()
        .map(|&d| {
            config.fluorescence_gain * bloch_steady_state(d, &config.emitter, rabi).rho_ee
                + config.background
        })
        .collect();
    let (y, s) = config
        .fluorescence_noise
        .apply(&clean, FLUORESCENCE_TAG, power.to_bits());
    let sp =
        Spectrum::from_columns(&config.detunings, &y, &s)?.with_meta("channel", "fluorescence");
    Ok(config.truth_meta(sp, power, rabi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerScan {
    pub power: f64,
    pub fluorescence: Spectrum,
    pub transmission: Spectrum,
}

/// Fluorescence and transmission scans for every configured pump power, in
/// configuration order.
pub fn generate_power_series(config: &ScenarioConfig) -> Result<Vec<PowerScan>> {
    config.validate()?;
    let one = |&power: &f64| -> Result<PowerScan> {
        Ok(PowerScan {
            power,
            fluorescence: generate_fluorescence(config, power)?,
            transmission: generate_spectrum(config, power)?,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        config.powers.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        config.powers.iter().map(one).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakRow {
    pub epsilon: f64,
    pub beta_eff: Option<f64>,
    /// Rad.
    pub phi_t: Option<f64>,
    pub delta_beta_eff: Option<f64>,
    pub delta_phi_t: Option<f64>,
    pub error: Option<String>,
}

/// Points in the noiseless scan used by [`leak_robustness_study`].
pub const LEAK_STUDY_POINTS: usize = 801;

/// For each leak fraction, synthesizes a noiseless zero-power scan with
/// that leak, fits it with the leak-free Fano model at the known width
/// `2 Gamma2`, inverts, and reports the shift from the true coupling.
/// Failures are reported per row.
pub fn leak_robustness_study(base: &ScenarioConfig, epsilons: &[f64]) -> Result<Vec<LeakRow>> {
    base.coupling.validate()?;
    for (i, e) in epsilons.iter().enumerate() {
        if !(e.is_finite() && *e >= 0.0) {
            return Err(Error::param(
                format!("epsilon[{i}]"),
                "must be finite and >= 0",
            ));
        }
    }
    let em = &base.emitter;
    let g2 = em.gamma2();
    let grid: Vec<f64> = (0..LEAK_STUDY_POINTS)
        .map(|k| g2 * (-20.0 + 40.0 * k as f64 / (LEAK_STUDY_POINTS - 1) as f64))
        .collect();
    let beta = base.coupling.beta_scaled(em.alpha());
    let truth_beta = base.coupling.beta_eff();
    let truth_phi = base.coupling.phi_t;
    let row = |eps: f64| -> Result<(f64, f64)> {
        let t: Vec<f64> = grid
            .iter()
            .map(|&d| transmission_with_leak(em, beta, truth_phi, 0.0, d, eps))
            .collect();
        let sp = Spectrum::from_columns(&grid, &t, &[])?;
        let fit = fit_fano(&sp, 2.0 * g2, 0.0)?;
        let pair = solve_beta_phi(fit.visibility, fit.asymmetry, em.linewidth_ratio())?;
        let res = select_physical_branch(&pair, base.coupling.t0_mag, em.alpha())?;
        let phi = res.phi_t.ok_or(Error::Degenerate)?.value;
        Ok((res.beta_eff.value, phi))
    };
    Ok(epsilons
        .iter()
        .map(|&eps| match row(eps) {
            Ok((b, p)) => LeakRow {
                epsilon: eps,
                beta_eff: Some(b),
                phi_t: Some(p),
                delta_beta_eff: Some(b - truth_beta),
                delta_phi_t: Some(p - truth_phi),
                error: None,
            },
            Err(e) => LeakRow {
                epsilon: eps,
                beta_eff: None,
                phi_t: None,
                delta_beta_eff: None,
                delta_phi_t: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}
