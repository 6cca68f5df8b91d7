//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Detunings are in units of `Gamma2`; the emitter is built from the
//! linewidth ratio alone since only ratios enter the normalized spectra.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use extinction_core::inversion::{select_physical_branch, solve_beta_phi};
use extinction_core::spectra::{fano_params, transmission_with_leak, EmitterParams};
use extinction_core::units::{deg, rad};
use wasm_bindgen::prelude::*;

fn emitter(lw_ratio: f64) -> Result<EmitterParams, JsError> {
    EmitterParams::with_alpha(2.0 * lw_ratio, 1.0, 1.0, 1.0)
        .map_err(|e| JsError::new(&e.to_string()))
}

fn beta_scaled(beta_eff: f64, t0: f64, alpha: f64) -> Result<f64, JsError> {
    if !(t0 > 0.0 && t0 <= 1.0) {
        return Err(JsError::new("|t0| must be in (0, 1]"));
    }
    Ok(alpha * beta_eff / t0)
}

/// Normalized transmission on `n` detunings evenly spread over `[-span, span]`
/// (units of `Gamma2`), as interleaved `(detuning, T)` pairs.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn transmission_curve(
    beta_eff: f64,
    t0: f64,
    alpha: f64,
    phi_deg: f64,
    lw_ratio: f64,
    saturation: f64,
    leak: f64,
    span: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    if n < 2 || !(span > 0.0) {
        return Err(JsError::new("need n >= 2 and span > 0"));
    }
    let em = emitter(lw_ratio)?;
    let beta = beta_scaled(beta_eff, t0, alpha)?;
    let rabi = em.rabi_for_saturation(saturation);
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let d = -span + 2.0 * span * k as f64 / (n - 1) as f64;
        out.push(d);
        out.push(transmission_with_leak(
            &em,
            beta,
            rad(phi_deg),
            rabi,
            d,
            leak.max(0.0),
        ));
    }
    Ok(out)
}

/// Both inversion branches for zero-power `(V0, q0)`.
#[wasm_bindgen]
pub struct Inversion {
    pub discriminant: f64,
    pub beta_eff_minus: f64,
    pub phi_minus_deg: f64,
    pub beta_eff_plus: f64,
    pub phi_plus_deg: f64,
    /// `true` when the plus branch is the reported one.
    pub selected_plus: bool,
    pub ambiguous: bool,
    /// No branch has `beta_eff <= 1`.
    pub unphysical: bool,
}

#[wasm_bindgen]
pub fn invert(v0: f64, q0: f64, lw_ratio: f64, t0: f64, alpha: f64) -> Result<Inversion, JsError> {
    let pair = solve_beta_phi(v0, q0, lw_ratio).map_err(|e| JsError::new(&e.to_string()))?;
    let scale = t0 / alpha;
    let mut inv = Inversion {
        discriminant: pair.discriminant,
        beta_eff_minus: pair.minus.beta_scaled * scale,
        phi_minus_deg: pair.minus.phi_t.map_or(f64::NAN, deg),
        beta_eff_plus: pair.plus.beta_scaled * scale,
        phi_plus_deg: pair.plus.phi_t.map_or(f64::NAN, deg),
        selected_plus: false,
        ambiguous: false,
        unphysical: false,
    };
    match select_physical_branch(&pair, t0, alpha) {
        Ok(r) => {
            inv.selected_plus = r.branch_used == extinction_core::inversion::Branch::Plus;
            inv.ambiguous = r.ambiguous;
        }
        Err(extinction_core::Error::NoPhysicalBranch { .. }) => inv.unphysical = true,
        Err(e) => return Err(JsError::new(&e.to_string())),
    }
    Ok(inv)
}

/// Saturation curves for `n` values of `S` in `[0, s_max]`, as interleaved
/// `(S, FWHM / 2 Gamma2, V, q)` quadruples.
#[wasm_bindgen]
pub fn saturation_curves(
    beta_eff: f64,
    t0: f64,
    alpha: f64,
    phi_deg: f64,
    lw_ratio: f64,
    s_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    if n < 2 || !(s_max > 0.0) {
        return Err(JsError::new("need n >= 2 and s_max > 0"));
    }
    emitter(lw_ratio)?;
    let beta = beta_scaled(beta_eff, t0, alpha)?;
    let mut out = Vec::with_capacity(4 * n);
    for k in 0..n {
        let s = s_max * k as f64 / (n - 1) as f64;
        let f = fano_params(beta, rad(phi_deg), lw_ratio, s);
        out.extend([s, (1.0 + s).sqrt(), f.visibility, f.asymmetry]);
    }
    Ok(out)
}
