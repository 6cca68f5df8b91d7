//! Closed forms for structures that admit a normal-mode description: a
//! lossless continuous waveguide and a symmetric cavity in the weak-coupling
//! regime.
//!
//! Only `|Omega|` enters the spectra, so the phase convention of the cavity
//! Rabi frequency is not tracked. Lossy or asymmetric cavities would enter
//! through another [`CavityParams`]-like type feeding the same general model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::spectra::{self, CouplingParams, EmitterParams};

/// Default minimum `kappa / gamma_cav` for the weak-coupling formulas.
pub const DEFAULT_WEAK_COUPLING_RATIO: f64 = 10.0;

fn lorentz(emitter: &EmitterParams, rabi: f64, detuning: f64) -> f64 {
    // Saturation is recomputed here so these closed forms do not depend on
    // the general model's internals.
    let s = rabi * rabi / (emitter.gamma1_total() * emitter.gamma2());
    let u = detuning / emitter.gamma2();
    emitter.linewidth_ratio() / (u * u + 1.0 + s)
}

/// Transmission through a lossless continuous waveguide with one-way
/// coupling `beta_g = 2 beta_pump = 2 beta_probe`.
pub fn waveguide_transmission(
    beta_g: f64,
    alpha: f64,
    emitter: &EmitterParams,
    rabi: f64,
    detuning: f64,
) -> f64 {
    let ab = alpha * beta_g;
    1.0 - ab * (2.0 - ab) * lorentz(emitter, rabi, detuning)
}

/// Reflection from a lossless continuous waveguide.
pub fn waveguide_reflection(
    beta_g: f64,
    alpha: f64,
    emitter: &EmitterParams,
    rabi: f64,
    detuning: f64,
) -> f64 {
    (alpha * beta_g).powi(2) * lorentz(emitter, rabi, detuning)
}

/// Symmetric, mode-matched cavity between the two guides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Cavity resonance (rad/s).
    pub omega_c: f64,
    /// Field decay rate into the two guides (rad/s).
    pub kappa: f64,
    /// Emission rate into the cavity mode when the pump is on cavity resonance (rad/s).
    pub gamma_cav: f64,
    /// Required `kappa / gamma_cav`.
    #[serde(default = "default_ratio")]
    pub weak_coupling_ratio: f64,
}

fn default_ratio() -> f64 {
    DEFAULT_WEAK_COUPLING_RATIO
}

impl CavityParams {
    pub fn new(omega_c: f64, kappa: f64, gamma_cav: f64) -> Result<Self> {
        let c = CavityParams {
            omega_c,
            kappa,
            gamma_cav,
            weak_coupling_ratio: DEFAULT_WEAK_COUPLING_RATIO,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::param("kappa", "must be finite and > 0"));
        }
        if !(self.gamma_cav.is_finite() && self.gamma_cav >= 0.0) {
            return Err(Error::param("gamma_cav", "must be finite and >= 0"));
        }
        if !(self.weak_coupling_ratio > 0.0) {
            return Err(Error::param("weak_coupling_ratio", "must be > 0"));
        }
        Ok(())
    }

    pub fn is_weakly_coupled(&self) -> bool {
        self.gamma_cav * self.weak_coupling_ratio < self.kappa
    }
}

/// Field transmission of the empty cavity, `t0 = -1 / (1 - i (omega - omega_C) / kappa)`.
pub fn cavity_t0(omega: f64, cavity: &CavityParams) -> Complex64 {
    let d = (omega - cavity.omega_c) / cavity.kappa;
    -Complex64::new(1.0, 0.0) / Complex64::new(1.0, -d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityCoupling {
    /// `beta_cav = 2 beta_pump = 2 beta_probe`.
    pub beta_cav: f64,
    pub phi_t: f64,
    pub t0: Complex64,
}

impl CavityCoupling {
    /// Equivalent general-model coupling (symmetric, `beta_eff = beta_cav`).
    pub fn to_coupling(&self) -> CouplingParams {
        CouplingParams {
            beta_pump: self.beta_cav / 2.0,
            beta_probe: self.beta_cav / 2.0,
            t0_mag: self.t0.norm(),
            r0_mag: 0.0,
            phi_t: self.phi_t,
            phi_r: 0.0,
        }
    }
}

/// Coupling efficiency and propagation phase for a pump at `omega`.
/// The phase depends on the laser-cavity detuning only, never on where the
/// emitter sits.
pub fn cavity_coupling(
    cavity: &CavityParams,
    emitter: &EmitterParams,
    omega: f64,
) -> Result<CavityCoupling> {
    cavity.validate()?;
    if emitter.gamma1_zpl() <= 0.0 {
        return Err(Error::param(
            "gamma1_zpl",
            "must be > 0 for cavity coupling",
        ));
    }
    if !cavity.is_weakly_coupled() {
        return Err(Error::param(
            "gamma_cav",
            format!(
                "kappa / gamma_cav = {:.3} is below the weak-coupling threshold {}",
                cavity.kappa / cavity.gamma_cav,
                cavity.weak_coupling_ratio
            ),
        ));
    }
    let t0 = cavity_t0(omega, cavity);
    let beta_cav = t0.norm_sqr() * cavity.gamma_cav / emitter.gamma1_zpl();
    if beta_cav > 1.0 {
        return Err(Error::param(
            "gamma_cav",
            format!("beta_cav = {beta_cav} > 1: gamma_cav exceeds gamma1_zpl"),
        ));
    }
    Ok(CavityCoupling {
        beta_cav,
        phi_t: FRAC_PI_2 + (-t0).arg(),
        t0,
    })
}

/// Transmission `P_out / P_in` through the cavity for a laser at `omega`,
/// emitter resonance taken from `emitter.omega0()`.
pub fn cavity_transmission(
    cavity: &CavityParams,
    emitter: &EmitterParams,
    rabi: f64,
    omega: f64,
) -> Result<f64> {
    let c = cavity_coupling(cavity, emitter, omega)?;
    Ok(spectra::transmission(
        emitter,
        &c.to_coupling(),
        rabi,
        omega - emitter.omega0(),
    ))
}
