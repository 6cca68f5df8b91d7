//! Forward models for an emitter driven through a passive linear structure.
//!
//! All rates and detunings are angular (rad/s). The common Lorentzian factor
//! `(Gamma1 / 2 Gamma2) / ((dw / Gamma2)^2 + 1 + S)` is shared by every
//! spectrum here; the models differ only in how the coherent (interference)
//! and incoherent (scattered power) terms are weighted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::HBAR;

/// Relative slack allowed on `Gamma1 <= 2 Gamma2` so that an exactly
/// lifetime-limited emitter built from rounded inputs is still accepted.
const LIFETIME_LIMIT_SLACK: f64 = 1e-12;

/// Two-level emitter rates and resonance.
///
/// Fields are private: a value of this type always satisfies
/// `Gamma1 > 0`, `Gamma2 > 0`, `0 <= gamma1 <= Gamma1` and `Gamma1 <= 2 Gamma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmitterParams", into = "RawEmitterParams")]
pub struct EmitterParams {
    gamma1_total: f64,
    gamma2: f64,
    gamma1_zpl: f64,
    omega0: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawEmitterParams {
    gamma1_total: f64,
    gamma2: f64,
    gamma1_zpl: f64,
    omega0: f64,
}

impl TryFrom<RawEmitterParams> for EmitterParams {
    type Error = Error;

    fn try_from(raw: RawEmitterParams) -> Result<Self> {
        EmitterParams::new(raw.gamma1_total, raw.gamma2, raw.gamma1_zpl, raw.omega0)
    }
}

impl From<EmitterParams> for RawEmitterParams {
    fn from(e: EmitterParams) -> Self {
        RawEmitterParams {
            gamma1_total: e.gamma1_total,
            gamma2: e.gamma2,
            gamma1_zpl: e.gamma1_zpl,
            omega0: e.omega0,
        }
    }
}

impl EmitterParams {
    pub fn new(gamma1_total: f64, gamma2: f64, gamma1_zpl: f64, omega0: f64) -> Result<Self> {
        if !(gamma1_total.is_finite() && gamma1_total > 0.0) {
            return Err(Error::param("gamma1_total", "must be finite and > 0"));
        }
        if !(gamma2.is_finite() && gamma2 > 0.0) {
            return Err(Error::param("gamma2", "must be finite and > 0"));
        }
        if !(gamma1_zpl.is_finite() && (0.0..=gamma1_total).contains(&gamma1_zpl)) {
            return Err(Error::param(
                "gamma1_zpl",
                "must satisfy 0 <= gamma1_zpl <= gamma1_total",
            ));
        }
        if gamma1_total > 2.0 * gamma2 * (1.0 + LIFETIME_LIMIT_SLACK) {
            return Err(Error::param(
                "gamma2",
                format!(
                    "gamma1_total = {gamma1_total:e} exceeds 2 gamma2 = {:e} (lifetime limit)",
                    2.0 * gamma2
                ),
            ));
        }
        if !omega0.is_finite() || omega0 < 0.0 {
            return Err(Error::param("omega0", "must be finite and >= 0"));
        }
        Ok(EmitterParams {
            gamma1_total,
            gamma2,
            gamma1_zpl,
            omega0,
        })
    }

    /// Builds the emitter from `Gamma1`, `Gamma2` and the branching ratio
    /// `alpha = gamma1 / Gamma1`.
    pub fn with_alpha(gamma1_total: f64, gamma2: f64, alpha: f64, omega0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1]"));
        }
        Self::new(gamma1_total, gamma2, alpha * gamma1_total, omega0)
    }

    /// Lifetime-limited emitter, `Gamma2 = Gamma1 / 2`.
    pub fn lifetime_limited(gamma1_total: f64, alpha: f64, omega0: f64) -> Result<Self> {
        Self::with_alpha(gamma1_total, gamma1_total / 2.0, alpha, omega0)
    }

    pub fn gamma1_total(&self) -> f64 {
        self.gamma1_total
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn gamma1_zpl(&self) -> f64 {
        self.gamma1_zpl
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn alpha(&self) -> f64 {
        self.gamma1_zpl / self.gamma1_total
    }

    /// `Gamma1 / (2 Gamma2)`, equal to 1 at the lifetime limit.
    pub fn linewidth_ratio(&self) -> f64 {
        self.gamma1_total / (2.0 * self.gamma2)
    }

    /// Power-broadened FWHM `2 Gamma2 sqrt(1 + S)` (rad/s).
    pub fn fwhm(&self, s: f64) -> f64 {
        2.0 * self.gamma2 * (1.0 + s).sqrt()
    }

    fn saturation_unchecked(&self, rabi: f64) -> f64 {
        rabi * rabi / (self.gamma1_total * self.gamma2)
    }

    /// Rabi frequency giving saturation parameter `s`.
    pub fn rabi_for_saturation(&self, s: f64) -> f64 {
        (s.max(0.0) * self.gamma1_total * self.gamma2).sqrt()
    }

    /// `(Gamma1 / 2 Gamma2) / ((dw / Gamma2)^2 + 1 + S)`.
    fn lorentz_factor(&self, detuning: f64, s: f64) -> f64 {
        let u = detuning / self.gamma2;
        self.linewidth_ratio() / (u * u + 1.0 + s)
    }
}

/// Photonic environment seen by the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub beta_pump: f64,
    pub beta_probe: f64,
    /// `|t0|`, field transmission of the bare structure.
    pub t0_mag: f64,
    /// `|r0|`, field reflection of the bare structure.
    pub r0_mag: f64,
    /// Propagation phase difference in transmission (rad).
    pub phi_t: f64,
    /// Reflection analogue of `phi_t` (rad).
    pub phi_r: f64,
}

impl CouplingParams {
    /// Symmetric coupling `beta_pump = beta_probe = beta_eff / 2`, no reflection.
    pub fn symmetric(beta_eff: f64, t0_mag: f64, phi_t: f64) -> Result<Self> {
        let c = CouplingParams {
            beta_pump: beta_eff / 2.0,
            beta_probe: beta_eff / 2.0,
            t0_mag,
            r0_mag: 0.0,
            phi_t,
            phi_r: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_pump", self.beta_pump),
            ("beta_probe", self.beta_probe),
            ("t0_mag", self.t0_mag),
            ("r0_mag", self.r0_mag),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::param(name, format!("{v} is outside [0, 1]")));
            }
        }
        if self.beta_eff() > 1.0 + 1e-12 {
            return Err(Error::param(
                "beta_pump",
                format!("beta_eff = {} exceeds 1", self.beta_eff()),
            ));
        }
        if self.t0_mag.powi(2) + self.r0_mag.powi(2) > 1.0 + 1e-12 {
            return Err(Error::param("t0_mag", "|t0|^2 + |r0|^2 > 1 is not passive"));
        }
        if !(self.phi_t.is_finite() && self.phi_r.is_finite()) {
            return Err(Error::param("phi_t", "phases must be finite"));
        }
        Ok(())
    }

    /// `sqrt(4 beta_pump beta_probe)`.
    pub fn beta_eff(&self) -> f64 {
        (4.0 * self.beta_pump * self.beta_probe).sqrt()
    }

    /// Scaled coupling `alpha beta_eff / |t0|` that sets the normalized spectrum.
    pub fn beta_scaled(&self, alpha: f64) -> f64 {
        alpha * self.beta_eff() / self.t0_mag
    }
}

/// Drive strength, given either directly as a Rabi frequency or as an input
/// power into the pump guide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveConfig {
    Rabi { rabi: f64 },
    Power { power_in: f64, omega: f64 },
}

impl DriveConfig {
    pub fn rabi(&self, beta_pump: f64, gamma1_zpl: f64) -> Result<f64> {
        match *self {
            DriveConfig::Rabi { rabi } if rabi >= 0.0 && rabi.is_finite() => Ok(rabi),
            DriveConfig::Rabi { .. } => Err(Error::param("rabi", "must be finite and >= 0")),
            DriveConfig::Power { power_in, omega } => {
                rabi_from_power(beta_pump, gamma1_zpl, power_in, omega)
            }
        }
    }
}

/// Steady-state density-matrix elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub rho_ee: f64,
    pub rho_ge_re: f64,
    pub rho_ge_im: f64,
}

impl BlochState {
    pub fn rho_ge_norm_sqr(&self) -> f64 {
        self.rho_ge_re * self.rho_ge_re + self.rho_ge_im * self.rho_ge_im
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Detuning `omega - omega0` (rad/s).
    pub detuning: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Sampled signal versus detuning.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Spectrum {
    points: Vec<SpectrumPoint>,
    pub meta: BTreeMap<String, String>,
}

impl Spectrum {
    /// Minimum number of points any fit will accept.
    pub const MIN_FIT_POINTS: usize = 5;

    pub fn new(points: Vec<SpectrumPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.detuning.is_finite() && p.value.is_finite()) {
                return Err(Error::InvalidSpectrum(format!(
                    "non-finite value at point {i}"
                )));
            }
            if !(p.sigma.is_finite() && p.sigma >= 0.0) {
                return Err(Error::InvalidSpectrum(format!(
                    "sigma at point {i} must be finite and >= 0"
                )));
            }
        }
        if let Some(i) = points
            .windows(2)
            .position(|w| w[1].detuning <= w[0].detuning)
        {
            return Err(Error::InvalidSpectrum(format!(
                "detunings must be strictly increasing (points {i} and {})",
                i + 1
            )));
        }
        Ok(Spectrum {
            points,
            meta: BTreeMap::new(),
        })
    }

    /// Builds a spectrum from parallel columns; `sigma` may be empty for
    /// unweighted data.
    pub fn from_columns(detuning: &[f64], value: &[f64], sigma: &[f64]) -> Result<Self> {
        if detuning.len() != value.len() || !(sigma.is_empty() || sigma.len() == value.len()) {
            return Err(Error::InvalidSpectrum("column lengths differ".into()));
        }
        let points = detuning
            .iter()
            .zip(value)
            .enumerate()
            .map(|(i, (&d, &v))| SpectrumPoint {
                detuning: d,
                value: v,
                sigma: sigma.get(i).copied().unwrap_or(0.0),
            })
            .collect();
        Self::new(points)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn points(&self) -> &[SpectrumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn detunings(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.detuning)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.value)
    }

    /// True when every point carries a positive sigma.
    pub fn is_weighted(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.sigma > 0.0)
    }

    /// Applies `f` to every value and sigma scale factor; detunings are kept.
    pub fn map_values(&self, f: impl Fn(f64) -> f64, sigma_scale: f64) -> Self {
        Spectrum {
            points: self
                .points
                .iter()
                .map(|p| SpectrumPoint {
                    detuning: p.detuning,
                    value: f(p.value),
                    sigma: p.sigma * sigma_scale,
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Shifts every detuning by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Spectrum {
            points: self
                .points
                .iter()
                .map(|p| SpectrumPoint {
                    detuning: p.detuning + delta,
                    ..*p
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Saturation parameter `S = Omega^2 / (Gamma1 Gamma2)`.
pub fn saturation(rabi: f64, emitter: &EmitterParams) -> Result<f64> {
    if !(rabi.is_finite() && rabi >= 0.0) {
        return Err(Error::param("rabi", "must be finite and >= 0"));
    }
    Ok(emitter.saturation_unchecked(rabi))
}

/// Rabi frequency produced by power `power_in` (W) in the pump guide:
/// `Omega^2 = 4 beta_pump gamma1 P_in / (hbar omega)`.
pub fn rabi_from_power(beta_pump: f64, gamma1_zpl: f64, power_in: f64, omega: f64) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::param("omega", "must be finite and > 0"));
    }
    for (name, v) in [
        ("beta_pump", beta_pump),
        ("gamma1_zpl", gamma1_zpl),
        ("power_in", power_in),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param(name, "must be finite and >= 0"));
        }
    }
    Ok((4.0 * beta_pump * gamma1_zpl * power_in / (HBAR * omega)).sqrt())
}

/// Saturation power: the input power at which `S = 1`.
pub fn saturation_power(emitter: &EmitterParams, beta_pump: f64, omega: f64) -> Result<f64> {
    if !(beta_pump > 0.0 && emitter.gamma1_zpl > 0.0) {
        return Err(Error::param(
            "beta_pump",
            "saturation power needs beta_pump > 0 and gamma1_zpl > 0",
        ));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::param("omega", "must be finite and > 0"));
    }
    Ok(HBAR * omega * emitter.gamma1_total * emitter.gamma2
        / (4.0 * beta_pump * emitter.gamma1_zpl))
}

/// Steady-state solution of the optical Bloch equations with real Rabi
/// frequency `rabi` at detuning `dw = omega - omega0`.
pub fn bloch_steady_state(detuning: f64, emitter: &EmitterParams, rabi: f64) -> BlochState {
    let s = emitter.saturation_unchecked(rabi);
    let u = detuning / emitter.gamma2;
    let denom = u * u + 1.0 + s;
    let amp = -(rabi / (2.0 * emitter.gamma2)) / denom;
    BlochState {
        rho_ee: 0.5 * s / denom,
        rho_ge_re: amp * u,
        rho_ge_im: amp,
    }
}

/// Transmitted power fraction `P_out / P_in` into the probe guide.
pub fn transmission(
    emitter: &EmitterParams,
    coupling: &CouplingParams,
    rabi: f64,
    detuning: f64,
) -> f64 {
    let s = emitter.saturation_unchecked(rabi);
    let ab = emitter.alpha() * coupling.beta_eff();
    let t0 = coupling.t0_mag;
    let u = detuning / emitter.gamma2;
    let bracket = 2.0 * ab * t0 * (coupling.phi_t.sin() + u * coupling.phi_t.cos()) - ab * ab;
    t0 * t0 - bracket * emitter.lorentz_factor(detuning, s)
}

/// Reflected power fraction `P_refl / P_in` back into the pump guide.
pub fn reflection(
    emitter: &EmitterParams,
    coupling: &CouplingParams,
    rabi: f64,
    detuning: f64,
) -> f64 {
    let s = emitter.saturation_unchecked(rabi);
    let ab = emitter.alpha() * coupling.beta_pump;
    let r0 = coupling.r0_mag;
    let u = detuning / emitter.gamma2;
    let bracket = 4.0 * ab * r0 * (coupling.phi_r.sin() + u * coupling.phi_r.cos()) - 4.0 * ab * ab;
    r0 * r0 - bracket * emitter.lorentz_factor(detuning, s)
}

/// Transmission normalized to its off-resonant value, parametrized by the
/// scaled coupling `beta_scaled = alpha beta_eff / |t0|`. The unknown setup
/// attenuation cancels in this ratio.
pub fn normalized_transmission(
    emitter: &EmitterParams,
    beta_scaled: f64,
    phi_t: f64,
    rabi: f64,
    detuning: f64,
) -> f64 {
    transmission_with_leak(emitter, beta_scaled, phi_t, rabi, detuning, 0.0)
}

/// Normalized transmission when a fraction `leak` of the scattered power
/// reaches the detector a second time at other (sideband) frequencies. The
/// incoherent term is multiplied by `1 + leak`; the interference term is not.
pub fn transmission_with_leak(
    emitter: &EmitterParams,
    beta_scaled: f64,
    phi_t: f64,
    rabi: f64,
    detuning: f64,
    leak: f64,
) -> f64 {
    let s = emitter.saturation_unchecked(rabi);
    let u = detuning / emitter.gamma2;
    let bracket = 2.0 * (phi_t.sin() + u * phi_t.cos()) - beta_scaled * (1.0 + leak);
    1.0 - beta_scaled * bracket * emitter.lorentz_factor(detuning, s)
}

/// Visibility and asymmetry of a Fano lineshape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoShape {
    pub visibility: f64,
    pub asymmetry: f64,
}

/// Fano lineshape `T(x) = (1 - (V + q^2)) / (1 + x^2) + (q + x)^2 / (1 + x^2)`
/// at normalized detuning `x = dw / (Gamma2 sqrt(1 + S))`.
///
/// `V + q^2 > 1` is accepted; the first term simply goes negative.
pub fn fano(visibility: f64, asymmetry: f64, x: f64) -> f64 {
    let d = 1.0 + x * x;
    (1.0 - (visibility + asymmetry * asymmetry)) / d + (asymmetry + x).powi(2) / d
}

/// Maps the physical parameters onto `(V, q)`.
pub fn fano_params(beta_scaled: f64, phi_t: f64, lw_ratio: f64, s: f64) -> FanoShape {
    FanoShape {
        visibility: beta_scaled * (2.0 * phi_t.sin() - beta_scaled) * lw_ratio / (1.0 + s),
        asymmetry: -beta_scaled * phi_t.cos() * lw_ratio / (1.0 + s).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz_to_rad_s, wavelength_nm_to_omega, SPEED_OF_LIGHT};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn device_emitter() -> EmitterParams {
        // Gamma1 = 1 / 4.5 ns, Gamma2 = 2 Gamma1 so that Gamma1 / 2 Gamma2 = 0.25.
        let g1 = 1.0 / 4.5e-9;
        EmitterParams::with_alpha(g1, 2.0 * g1, 0.33, wavelength_nm_to_omega(785.0)).unwrap()
    }

    fn random_emitter(rng: &mut impl Rng) -> EmitterParams {
        let g1 = rng.random_range(1e7..1e9);
        let g2 = g1 / 2.0 * rng.random_range(1.0..20.0);
        EmitterParams::with_alpha(g1, g2, rng.random_range(0.0..=1.0), 2.4e15).unwrap()
    }

    #[test]
    fn emitter_rejects_invalid_rates() {
        assert!(EmitterParams::new(-1.0, 1.0, 0.5, 0.0).is_err());
        assert!(EmitterParams::new(1.0, 0.0, 0.5, 0.0).is_err());
        assert!(EmitterParams::new(1.0, 1.0, 1.5, 0.0).is_err());
        // Gamma1 > 2 Gamma2 violates positivity.
        assert!(EmitterParams::new(3.0, 1.0, 0.5, 0.0).is_err());
        assert!(EmitterParams::new(2.0, 1.0, 0.5, 0.0).is_ok());
    }

    #[test]
    fn emitter_serde_validates() {
        let bad = r#"{"gamma1_total":3.0,"gamma2":1.0,"gamma1_zpl":0.5,"omega0":0.0}"#;
        assert!(serde_json::from_str::<EmitterParams>(bad).is_err());
        let good = device_emitter();
        let back: EmitterParams =
            serde_json::from_str(&serde_json::to_string(&good).unwrap()).unwrap();
        assert_eq!(back, good);
    }

    #[test]
    fn saturation_examples() {
        let e = EmitterParams::with_alpha(2.0, 1.5, 0.5, 0.0).unwrap();
        assert_eq!(saturation(0.0, &e).unwrap(), 0.0);
        let r = (e.gamma1_total() * e.gamma2()).sqrt();
        assert!((saturation(r, &e).unwrap() - 1.0).abs() < 1e-15);
        assert!(saturation(-1.0, &e).is_err());

        let g1 = mhz_to_rad_s(35.4);
        let e = EmitterParams::lifetime_limited(g1, 1.0, 0.0).unwrap();
        // g1^2 / (g1 * g1 / 2) = 2
        assert!((saturation(g1, &e).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rabi_from_power_examples() {
        let omega = wavelength_nm_to_omega(785.0);
        assert_eq!(rabi_from_power(0.02, 7e7, 0.0, omega).unwrap(), 0.0);
        assert_eq!(rabi_from_power(0.0, 7e7, 1e-12, omega).unwrap(), 0.0);
        assert!(rabi_from_power(0.02, 7e7, 1e-12, 0.0).is_err());

        // Independent evaluation: hbar omega = h c / lambda.
        let gamma1 = 0.33 / 4.5e-9;
        let h = 2.0 * PI * 1.054_571_817e-34;
        let photon_energy = h * SPEED_OF_LIGHT / 785e-9;
        let expected = (4.0 * 0.02 * gamma1 * 1e-12 / photon_energy).sqrt();
        let got = rabi_from_power(0.02, gamma1, 1e-12, omega).unwrap();
        assert!((got - expected).abs() / expected < 1e-12);
        // ~ 4.81e6 rad/s for these inputs
        assert!((got - 4.815e6).abs() / 4.815e6 < 1e-3, "{got}");

        // Omega^2 linear in P: two-point slope equals value/P.
        let r1 = rabi_from_power(0.02, gamma1, 1e-12, omega).unwrap();
        let r2 = rabi_from_power(0.02, gamma1, 3e-12, omega).unwrap();
        let slope = (r2 * r2 - r1 * r1) / 2e-12;
        assert!((slope - r1 * r1 / 1e-12).abs() / slope < 1e-12);
    }

    #[test]
    fn bloch_examples() {
        let e = device_emitter();
        let r = e.rabi_for_saturation(1.0);
        assert!((bloch_steady_state(0.0, &e, r).rho_ee - 0.25).abs() < 1e-15);
        let big = bloch_steady_state(3.0 * e.gamma2(), &e, e.rabi_for_saturation(1e12));
        assert!((big.rho_ee - 0.5).abs() < 1e-10);
    }

    #[test]
    fn bloch_hwhm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let e = random_emitter(&mut rng);
            let s: f64 = rng.random_range(0.0..50.0);
            let r = e.rabi_for_saturation(s);
            let peak = bloch_steady_state(0.0, &e, r).rho_ee;
            let hw = e.gamma2() * (1.0 + s).sqrt();
            for d in [hw, -hw] {
                let half = bloch_steady_state(d, &e, r).rho_ee;
                if peak > 0.0 {
                    assert!((half / (peak / 2.0) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bloch_positivity_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let e = random_emitter(&mut rng);
            let rabi = rng.random_range(0.0..1e10);
            let d = rng.random_range(-1e10..1e10);
            let st = bloch_steady_state(d, &e, rabi);
            assert!((0.0..=0.5).contains(&st.rho_ee));
            assert!(st.rho_ge_norm_sqr() <= st.rho_ee * (1.0 - st.rho_ee) * (1.0 + 1e-12));
        }
    }

    /// Output power assembled from the field superposition and the Bloch
    /// solution, without the closed-form simplification.
    fn transmission_from_fields(e: &EmitterParams, c: &CouplingParams, rabi: f64, d: f64) -> f64 {
        let st = bloch_steady_state(d, e, rabi);
        let a = c.beta_eff() * e.gamma1_zpl() / rabi;
        // Re(exp(-i phi) rho_ge)
        let re = c.phi_t.cos() * st.rho_ge_re + c.phi_t.sin() * st.rho_ge_im;
        c.t0_mag * c.t0_mag + 2.0 * c.t0_mag * a * re + a * a * st.rho_ee
    }

    #[test]
    fn transmission_matches_field_superposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let e = random_emitter(&mut rng);
            let c = CouplingParams::symmetric(
                rng.random_range(0.0..1.0),
                rng.random_range(0.05..1.0),
                rng.random_range(-PI..PI),
            )
            .unwrap();
            let rabi = rng.random_range(1e3..1e10);
            let d = rng.random_range(-5.0..5.0) * e.gamma2();
            let a = transmission(&e, &c, rabi, d);
            let b = transmission_from_fields(&e, &c, rabi, d);
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn transmission_examples() {
        let e = device_emitter();
        let none = CouplingParams::symmetric(0.0, 0.63, 1.0).unwrap();
        for d in [-1e9, 0.0, 2e8] {
            assert!((transmission(&e, &none, 0.0, d) - 0.63f64.powi(2)).abs() < 1e-15);
        }
        let ideal = EmitterParams::lifetime_limited(1e8, 1.0, 0.0).unwrap();
        let c = CouplingParams::symmetric(1.0, 1.0, FRAC_PI_2).unwrap();
        assert!(transmission(&ideal, &c, 1e-3, 0.0).abs() < 1e-12);

        // Device point: on-resonance contrast beta (2 sin(phi) - beta) lw
        // with beta = alpha beta_eff / |t0| = 0.0471, i.e. about 2 %.
        let c = CouplingParams::symmetric(0.09, 0.63, 61f64.to_radians()).unwrap();
        let t_far = transmission(&e, &c, 0.0, 1e14);
        let t0 = transmission(&e, &c, 0.0, 0.0);
        let contrast = 1.0 - t0 / t_far;
        assert!((contrast - 0.02006).abs() < 1e-4, "{contrast}");
        // Asymmetric: the dip is deeper on the side where cos(phi) x < 0 pulls T down.
        let hw = e.gamma2();
        assert!(transmission(&e, &c, 0.0, hw) < transmission(&e, &c, 0.0, -hw));
    }

    #[test]
    fn reflection_examples() {
        let e = device_emitter();
        let c = CouplingParams {
            beta_pump: 0.0,
            beta_probe: 0.0,
            t0_mag: 0.5,
            r0_mag: 0.4,
            phi_t: 0.0,
            phi_r: 0.3,
        };
        assert!((reflection(&e, &c, 0.0, 1e8) - 0.16).abs() < 1e-15);

        // Continuous guide: |r0| = 0 gives (alpha beta_g)^2 lw with beta_g = 2 beta_pump.
        let c = CouplingParams {
            beta_pump: 0.2,
            beta_probe: 0.2,
            t0_mag: 1.0,
            r0_mag: 0.0,
            phi_t: FRAC_PI_2,
            phi_r: 0.0,
        };
        let expect = (0.33f64 * 0.4).powi(2) * e.linewidth_ratio();
        assert!((reflection(&e, &c, 0.0, 0.0) - expect).abs() < 1e-15);

        let ideal = EmitterParams::lifetime_limited(1e8, 1.0, 0.0).unwrap();
        let c = CouplingParams {
            beta_pump: 0.5,
            beta_probe: 0.5,
            t0_mag: 1.0,
            r0_mag: 0.0,
            phi_t: FRAC_PI_2,
            phi_r: 0.0,
        };
        assert!((reflection(&ideal, &c, 1e-3, 0.0) - 1.0).abs() < 1e-12);
        assert!(transmission(&ideal, &c, 1e-3, 0.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_transmission_examples() {
        let e = device_emitter();
        for d in [-3e9, 0.0, 1e8] {
            assert_eq!(normalized_transmission(&e, 0.0, 0.4, 0.0, d), 1.0);
        }
        // Consistency with the unnormalized model.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let e = random_emitter(&mut rng);
            let c = CouplingParams::symmetric(
                rng.random_range(0.0..1.0),
                rng.random_range(0.05..1.0),
                rng.random_range(-PI..PI),
            )
            .unwrap();
            let rabi = rng.random_range(0.0..1e9);
            let d = rng.random_range(-5.0..5.0) * e.gamma2();
            let a = transmission(&e, &c, rabi, d) / c.t0_mag.powi(2);
            let b = normalized_transmission(&e, c.beta_scaled(e.alpha()), c.phi_t, rabi, d);
            assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()));
        }
        // Device values: T(0) = 1 - V0.
        let beta = 0.33 * 0.09 / 0.63;
        let shape = fano_params(beta, 61f64.to_radians(), 0.25, 0.0);
        let t = normalized_transmission(&e, beta, 61f64.to_radians(), 0.0, 0.0);
        assert!((t - (1.0 - shape.visibility)).abs() < 1e-15);
        assert!((t - 0.9799).abs() < 1e-4, "{t}");
    }

    #[test]
    fn fano_examples() {
        for x in [-4.0, 0.0, 0.7] {
            assert_eq!(fano(0.0, 0.0, x), 1.0);
        }
        assert!((fano(0.3, -0.2, 0.0) - 0.7).abs() < 1e-15);
        // T = 1 + (2 q x - V) / (1 + x^2) has its minimum where
        // q x^2 - V x - q = 0; checked by dense scan.
        let (v, q): (f64, f64) = (0.05, 0.02);
        let x_min = (v - (v * v + 4.0 * q * q).sqrt()) / (2.0 * q);
        let at_min = fano(v, q, x_min);
        assert!((at_min - (1.0 + (2.0 * q * x_min - v) / (1.0 + x_min * x_min))).abs() < 1e-15);
        let scan_min = (-20_000..=20_000)
            .map(|i| fano(v, q, i as f64 * 1e-3))
            .fold(f64::INFINITY, f64::min);
        assert!(at_min <= scan_min + 1e-15);
        assert!((scan_min - at_min) < 1e-6);
        // Accepts V + q^2 > 1 without clamping.
        assert!(fano(1.2, 0.3, 0.0) < 0.0);
    }

    #[test]
    fn fano_params_examples() {
        let z = fano_params(0.0, 1.0, 0.25, 0.3);
        assert_eq!((z.visibility, z.asymmetry), (0.0, 0.0));
        let f = fano_params(0.3, FRAC_PI_2, 0.5, 1.0);
        assert!(f.asymmetry.abs() < 1e-16);
        assert!((f.visibility - 0.3 * 1.7 * 0.5 / 2.0).abs() < 1e-15);
        // Minus-branch solution reproduces V0 = 1.8 %, q0 = -5.2e-3.
        let p = fano_params(0.0424, 60.6f64.to_radians(), 0.25, 0.0);
        assert!((p.visibility - 0.018).abs() < 1e-4, "{}", p.visibility);
        assert!((p.asymmetry + 0.0052).abs() < 1e-4, "{}", p.asymmetry);
    }

    #[test]
    fn leak_examples() {
        let e = device_emitter();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let b = rng.random_range(0.0..1.0);
            let phi = rng.random_range(-PI..PI);
            let d = rng.random_range(-3e9..3e9);
            assert_eq!(
                transmission_with_leak(&e, b, phi, 0.0, d, 0.0),
                normalized_transmission(&e, b, phi, 0.0, d)
            );
        }
        // Large leak: the on-resonance dip shrinks monotonically.
        let beta = 0.33 * 0.09 / 0.7;
        let phi = 61f64.to_radians();
        let mut last = f64::INFINITY;
        for i in 0..2000 {
            let eps = i as f64 * 0.5;
            let depth = 1.0 - transmission_with_leak(&e, beta, phi, 0.0, 0.0, eps);
            assert!(depth < last);
            last = depth;
        }
    }

    #[test]
    fn asymptotics() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let e = random_emitter(&mut rng);
            let c = CouplingParams {
                beta_pump: rng.random_range(0.0..0.5),
                beta_probe: rng.random_range(0.0..0.5),
                t0_mag: 0.6,
                r0_mag: 0.5,
                phi_t: rng.random_range(-PI..PI),
                phi_r: rng.random_range(-PI..PI),
            };
            let rabi = rng.random_range(0.0..1e9);
            for d in [1e7 * e.gamma2(), -1e7 * e.gamma2()] {
                assert!((transmission(&e, &c, rabi, d) - 0.36).abs() < 1e-6);
                assert!((reflection(&e, &c, rabi, d) - 0.25).abs() < 1e-6);
                let t = normalized_transmission(&e, c.beta_scaled(e.alpha()), c.phi_t, rabi, d);
                assert!((t - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn saturation_washes_out_dip() {
        let e = device_emitter();
        let beta = 0.33 * 0.09 / 0.63;
        let phi = 61f64.to_radians();
        let mut last = f64::INFINITY;
        for i in 0..2000 {
            let s = i as f64 * 0.01;
            let dip =
                (normalized_transmission(&e, beta, phi, e.rabi_for_saturation(s), 0.0) - 1.0).abs();
            assert!(dip < last);
            last = dip;
        }
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::from_columns(&[0.0, 1.0, 1.0], &[1.0; 3], &[]).is_err());
        assert!(Spectrum::from_columns(&[0.0, 1.0], &[1.0; 2], &[0.1, -0.1]).is_err());
        let s = Spectrum::from_columns(&[0.0, 1.0], &[1.0; 2], &[]).unwrap();
        assert!(!s.is_weighted());
    }

    proptest! {
        #[test]
        fn fano_equals_physical_model(
            beta in 0.0f64..2.0,
            phi in -PI..PI,
            lw in 0.01f64..1.0,
            s in 0.0f64..20.0,
            x in -20.0f64..20.0,
        ) {
            let g1 = 2.0e8;
            let e = EmitterParams::with_alpha(g1, g1 / (2.0 * lw), 0.5, 0.0).unwrap();
            let shape = fano_params(beta, phi, e.linewidth_ratio(), s);
            let a = fano(shape.visibility, shape.asymmetry, x);
            let d = x * e.gamma2() * (1.0 + s).sqrt();
            let b = normalized_transmission(&e, beta, phi, e.rabi_for_saturation(s), d);
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}
