use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::lineshapes::{FanoFit, LorentzianFit};
use super::lsq::{minimize, Bounds, CovarianceScaling, LsqOptions};
use crate::error::{Error, Result};
use crate::estimate::Estimate;

/// Below this chi-square p-value the shared-`P_sat` fit is considered
/// inconsistent and the independent per-channel fits are used instead.
pub const JOINT_P_VALUE_THRESHOLD: f64 = 1e-3;

/// Fits of one fluorescence/transmission pair at a given pump power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEntry {
    /// Pump power, any linear unit.
    pub power: f64,
    pub lorentzian: LorentzianFit,
    pub fano: FanoFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    entries: Vec<PowerEntry>,
}

impl PowerSeries {
    pub fn new(mut entries: Vec<PowerEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.power.is_finite() && e.power > 0.0) {
                return Err(Error::param(
                    format!("entries[{i}].power"),
                    format!("must be finite and > 0, got {}", e.power),
                ));
            }
        }
        entries.sort_by(|a, b| a.power.total_cmp(&b.power));
        Ok(PowerSeries { entries })
    }

    pub fn entries(&self) -> &[PowerEntry] {
        &self.entries
    }

    pub fn distinct_powers(&self) -> usize {
        let mut n = 0;
        let mut last = f64::NAN;
        for e in &self.entries {
            if e.power != last {
                n += 1;
                last = e.power;
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationMode {
    /// One `P_sat` shared by linewidth, visibility and asymmetry.
    Joint,
    /// Each channel with its own `P_sat`.
    Independent,
}

/// Two-parameter fit `y(P) = y0 * (1 + k P)^(-n)` of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    /// Zero-power value. For the linewidth channel this is `Gamma2`, not the FWHM.
    pub intercept: Estimate,
    /// `k = 1 / P_sat`.
    pub inverse_p_sat: Estimate,
    /// `k` held at zero because the channel carried no power dependence.
    pub k_fixed: bool,
    pub chi2: f64,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentChannels {
    pub linewidth: ChannelFit,
    pub visibility: ChannelFit,
    pub asymmetry: ChannelFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFit {
    pub gamma2: Estimate,
    pub v0: Estimate,
    pub q0: Estimate,
    pub inverse_p_sat: Estimate,
    pub chi2: f64,
    pub dof: usize,
    /// `None` when the inputs carried no usable sigmas.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPowerResult {
    pub mode: ExtrapolationMode,
    /// Rad/s.
    pub gamma2: Estimate,
    pub v0: Estimate,
    pub q0: Estimate,
    /// `None` when no saturation was resolved (`k = 0`).
    pub p_sat: Option<Estimate>,
    pub joint: Option<JointFit>,
    pub independent: IndependentChannels,
    pub fallback_reason: Option<String>,
}

impl ZeroPowerResult {
    fn k(&self, channel: &ChannelFit) -> f64 {
        match (&self.mode, &self.joint) {
            (ExtrapolationMode::Joint, Some(j)) => j.inverse_p_sat.value,
            _ => channel.inverse_p_sat.value,
        }
    }

    /// Fitted FWHM at pump power `p`.
    pub fn fwhm_at(&self, p: f64) -> f64 {
        2.0 * self.gamma2.value * (1.0 + self.k(&self.independent.linewidth) * p).sqrt()
    }

    pub fn visibility_at(&self, p: f64) -> f64 {
        self.v0.value / (1.0 + self.k(&self.independent.visibility) * p)
    }

    pub fn asymmetry_at(&self, p: f64) -> f64 {
        self.q0.value / (1.0 + self.k(&self.independent.asymmetry) * p).sqrt()
    }
}

struct Channel {
    y: Vec<f64>,
    sigma: Vec<f64>,
    scale: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn channel(y: Vec<f64>, sigma: Vec<f64>) -> Channel {
    let scale = max_abs(&y);
    Channel { y, sigma, scale }
}

/// Exponent `n` in `y0 (1 + k P)^(-n)`; the FWHM grows, hence negative.
const EXPONENTS: [f64; 3] = [-0.5, 1.0, 0.5];

fn channel_model(y0: f64, k: f64, p: f64, n: f64) -> f64 {
    y0 * (1.0 + k * p).powf(-n)
}

/// Extrapolates linewidth, visibility and asymmetry to zero pump power
/// assuming `S = P / P_sat`.
///
/// The shared-`P_sat` fit is tried first. If its chi-square p-value falls
/// below [`JOINT_P_VALUE_THRESHOLD`] or it fails, the independent
/// per-channel fits (always computed) are returned instead and the reason is
/// recorded.
pub fn extrapolate_zero_power(series: &PowerSeries) -> Result<ZeroPowerResult> {
    if series.distinct_powers() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} distinct pump powers, need at least 3",
            series.distinct_powers()
        )));
    }
    let e = series.entries();
    let powers: Vec<f64> = e.iter().map(|x| x.power).collect();
    let p_max = powers[powers.len() - 1];
    let x: Vec<f64> = powers.iter().map(|p| p / p_max).collect();

    // Channel 0 holds the half width so that its intercept is Gamma2.
    let chans = [
        channel(
            e.iter().map(|x| x.lorentzian.fwhm / 2.0).collect(),
            e.iter().map(|x| x.lorentzian.fwhm_sigma() / 2.0).collect(),
        ),
        channel(
            e.iter().map(|x| x.fano.visibility).collect(),
            e.iter().map(|x| x.fano.visibility_sigma()).collect(),
        ),
        channel(
            e.iter().map(|x| x.fano.asymmetry).collect(),
            e.iter().map(|x| x.fano.asymmetry_sigma()).collect(),
        ),
    ];
    let weighted = chans
        .iter()
        .all(|c| c.sigma.iter().all(|s| s.is_finite() && *s > 0.0));
    let weights: Vec<Vec<f64>> = chans
        .iter()
        .map(|c| {
            if weighted {
                c.sigma.iter().map(|s| 1.0 / s).collect()
            } else {
                vec![1.0 / c.scale; c.y.len()]
            }
        })
        .collect();
    let scaling = if weighted {
        CovarianceScaling::Absolute
    } else {
        CovarianceScaling::ReducedChiSquare
    };

    // Start from a straight line through FWHM^2 versus P.
    let (a, b) = linear_regression(&x, &chans[0].y.iter().map(|h| h * h).collect::<Vec<_>>());
    let k0 = if a > 0.0 { (b / a).max(0.0) } else { 0.0 };
    let g0 = if a > 0.0 {
        a.sqrt()
    } else {
        chans[0].y.iter().cloned().fold(f64::INFINITY, f64::min)
    };

    let independent = IndependentChannels {
        linewidth: fit_channel(
            &x,
            &chans[0],
            &weights[0],
            EXPONENTS[0],
            g0,
            k0,
            scaling,
            p_max,
        )?,
        visibility: fit_channel(
            &x,
            &chans[1],
            &weights[1],
            EXPONENTS[1],
            f64::NAN,
            k0,
            scaling,
            p_max,
        )?,
        asymmetry: fit_channel(
            &x,
            &chans[2],
            &weights[2],
            EXPONENTS[2],
            f64::NAN,
            k0,
            scaling,
            p_max,
        )?,
    };

    let joint = fit_joint_channels(&x, &chans, &weights, g0, k0, scaling, p_max);
    let (joint, fallback_reason) = match joint {
        Ok(j) => match j.p_value {
            Some(p) if p < JOINT_P_VALUE_THRESHOLD => {
                let reason = format!(
                    "shared saturation power rejected: chi2 = {:.3} for {} dof, p = {:.2e} < {:.0e}",
                    j.chi2, j.dof, p, JOINT_P_VALUE_THRESHOLD
                );
                (Some(j), Some(reason))
            }
            _ => (Some(j), None),
        },
        Err(err) => (
            None,
            Some(format!("shared saturation power fit failed: {err}")),
        ),
    };

    let result = match (&joint, &fallback_reason) {
        (Some(j), None) => ZeroPowerResult {
            mode: ExtrapolationMode::Joint,
            gamma2: j.gamma2,
            v0: j.v0,
            q0: j.q0,
            p_sat: p_sat(&j.inverse_p_sat),
            joint: joint.clone(),
            independent,
            fallback_reason: None,
        },
        _ => ZeroPowerResult {
            mode: ExtrapolationMode::Independent,
            gamma2: independent.linewidth.intercept,
            v0: independent.visibility.intercept,
            q0: independent.asymmetry.intercept,
            p_sat: p_sat(&independent.linewidth.inverse_p_sat),
            joint,
            independent,
            fallback_reason,
        },
    };
    Ok(result)
}

fn p_sat(k: &Estimate) -> Option<Estimate> {
    (k.value > 0.0).then(|| Estimate::new(1.0 / k.value, k.sigma / (k.value * k.value)))
}

fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn sigma_of(cov: &nalgebra::DMatrix<f64>, i: usize) -> f64 {
    cov[(i, i)].max(0.0).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn fit_channel(
    x: &[f64],
    ch: &Channel,
    w: &[f64],
    n: f64,
    y0_init: f64,
    k0: f64,
    scaling: CovarianceScaling,
    p_max: f64,
) -> Result<ChannelFit> {
    let s = ch.scale;
    let y0 = if y0_init.is_finite() {
        y0_init
    } else {
        x.iter()
            .zip(&ch.y)
            .map(|(xi, yi)| yi * (1.0 + k0 * xi).powf(n))
            .sum::<f64>()
            / x.len() as f64
    };
    let opts = LsqOptions::default();
    let bounds = Bounds::new(
        vec![f64::NEG_INFINITY, 0.0],
        vec![f64::INFINITY, f64::INFINITY],
    )?;
    let res = minimize(
        |p, out| {
            for i in 0..x.len() {
                out[i] = (channel_model(p[0], p[1], x[i], n) - ch.y[i] / s) * w[i] * s;
            }
        },
        x.len(),
        &[y0 / s, k0],
        Some(&bounds),
        &opts,
        scaling,
    )?;
    if let Some(cov) = &res.covariance {
        return Ok(ChannelFit {
            intercept: Estimate::new(res.params[0] * s, sigma_of(cov, 0) * s),
            inverse_p_sat: Estimate::new(res.params[1] / p_max, sigma_of(cov, 1) / p_max),
            k_fixed: false,
            chi2: res.chi2,
            dof: res.dof,
        });
    }
    // No power dependence resolvable (for example a vanishing channel): k = 0.
    let res = minimize(
        |p, out| {
            for i in 0..x.len() {
                out[i] = (p[0] - ch.y[i] / s) * w[i] * s;
            }
        },
        x.len(),
        &[y0 / s],
        None,
        &opts,
        scaling,
    )?;
    let cov = res.require_covariance()?;
    Ok(ChannelFit {
        intercept: Estimate::new(res.params[0] * s, sigma_of(cov, 0) * s),
        inverse_p_sat: Estimate::exact(0.0),
        k_fixed: true,
        chi2: res.chi2,
        dof: res.dof,
    })
}

fn fit_joint_channels(
    x: &[f64],
    chans: &[Channel; 3],
    weights: &[Vec<f64>],
    g0: f64,
    k0: f64,
    scaling: CovarianceScaling,
    p_max: f64,
) -> Result<JointFit> {
    let m = x.len();
    let init_intercept = |c: &Channel, n: f64| {
        x.iter()
            .zip(&c.y)
            .map(|(xi, yi)| yi * (1.0 + k0 * xi).powf(n))
            .sum::<f64>()
            / m as f64
    };
    let init = [
        g0 / chans[0].scale,
        init_intercept(&chans[1], EXPONENTS[1]) / chans[1].scale,
        init_intercept(&chans[2], EXPONENTS[2]) / chans[2].scale,
        k0,
    ];
    let bounds = Bounds::new(
        vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0],
        vec![f64::INFINITY; 4],
    )?;
    let res = minimize(
        |p, out| {
            for (c, ch) in chans.iter().enumerate() {
                for i in 0..m {
                    let model = channel_model(p[c], p[3], x[i], EXPONENTS[c]);
                    out[c * m + i] = (model - ch.y[i] / ch.scale) * weights[c][i] * ch.scale;
                }
            }
        },
        3 * m,
        &init,
        Some(&bounds),
        &LsqOptions::default(),
        scaling,
    )?;
    let cov = res.require_covariance()?;
    let est = |i: usize, s: f64| Estimate::new(res.params[i] * s, sigma_of(cov, i) * s);
    let p_value = match scaling {
        CovarianceScaling::Absolute if res.dof > 0 => {
            let d =
                ChiSquared::new(res.dof as f64).map_err(|e| Error::param("dof", e.to_string()))?;
            Some(d.sf(res.chi2))
        }
        _ => None,
    };
    Ok(JointFit {
        gamma2: est(0, chans[0].scale),
        v0: est(1, chans[1].scale),
        q0: est(2, chans[2].scale),
        inverse_p_sat: est(3, 1.0 / p_max),
        chi2: res.chi2,
        dof: res.dof,
        p_value,
    })
}
