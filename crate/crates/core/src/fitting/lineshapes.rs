use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lsq::{self, fit_spectrum, Bounds, CovarianceScaling, LsqOptions, LsqResult};
use crate::error::{Error, Result};
use crate::spectra::{fano, Spectrum};

/// `offset + amplitude / (1 + (2 (x - center) / fwhm)^2)`.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let t = 2.0 * (x - center) / fwhm;
    offset + amplitude / (1.0 + t * t)
}

/// Lorentzian fit to a fluorescence trace. Covariance order is
/// `(center, fwhm, amplitude, offset)`; center and fwhm in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub covariance: [[f64; 4]; 4],
    pub chi2: f64,
    pub dof: usize,
    pub weighted: bool,
}

impl LorentzianFit {
    pub fn eval(&self, x: f64) -> f64 {
        lorentzian(x, self.center, self.fwhm, self.amplitude, self.offset)
    }

    pub fn center_sigma(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn fwhm_sigma(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
}

/// Fano fit to a transmission trace,
/// `normalization * T((x - center) / (width / 2))`.
///
/// Covariance order is `(V, q, center, normalization)`. When the center had
/// to be held at its initial value the center row and column are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoFit {
    pub visibility: f64,
    pub asymmetry: f64,
    pub center: f64,
    pub width: f64,
    pub normalization: f64,
    pub covariance: [[f64; 4]; 4],
    pub width_fixed: bool,
    /// Zero when the width was fixed.
    pub width_sigma: f64,
    pub center_fixed: bool,
    pub chi2: f64,
    pub dof: usize,
    /// Chi-square gap between the best and the next distinct local minimum
    /// found by the multi-start, if any.
    pub runner_up_gap: Option<f64>,
}

impl FanoFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.normalization
            * fano(
                self.visibility,
                self.asymmetry,
                (x - self.center) / (self.width / 2.0),
            )
    }

    pub fn visibility_sigma(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn asymmetry_sigma(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn center_sigma(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Noise level from the median absolute deviation of first differences.
fn robust_noise(values: &[f64]) -> f64 {
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let m = median(d.clone());
    1.4826 * median(d.into_iter().map(|x| (x - m).abs()).collect()) / std::f64::consts::SQRT_2
}

fn check_len(spectrum: &Spectrum, what: &str) -> Result<()> {
    if spectrum.len() < Spectrum::MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{what} spectrum has {} points, need at least {}",
            spectrum.len(),
            Spectrum::MIN_FIT_POINTS
        )));
    }
    Ok(())
}

fn to_array4(m: &DMatrix<f64>, idx: [Option<usize>; 4], scale: [f64; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            if let (Some(a), Some(b)) = (idx[i], idx[j]) {
                out[i][j] = m[(a, b)] * scale[i] * scale[j];
            }
        }
    }
    out
}

struct LorentzInit {
    mid: f64,
    half_span: f64,
    params: [f64; 4],
}

fn lorentz_init(spectrum: &Spectrum) -> Result<LorentzInit> {
    let pts = spectrum.points();
    let (x0, x1) = (pts[0].detuning, pts[pts.len() - 1].detuning);
    let mid = 0.5 * (x0 + x1);
    let half_span = 0.5 * (x1 - x0);
    let values: Vec<f64> = spectrum.values().collect();
    let offset = median(values.clone());
    let (imax, ymax) = values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let amplitude = ymax - offset;
    let noise = if spectrum.is_weighted() {
        median(pts.iter().map(|p| p.sigma).collect())
    } else {
        robust_noise(&values)
    };
    if !(amplitude > 3.0 * noise) {
        return Err(Error::FitRejected(format!(
            "no discernible peak: max - offset = {amplitude:e} <= 3 x noise ({noise:e}) at detuning {:e} rad/s",
            pts[imax].detuning
        )));
    }
    let half = offset + amplitude / 2.0;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if values[i] <= half {
                let (xa, ya) = (pts[prev].detuning, values[prev]);
                let (xb, yb) = (pts[i].detuning, values[i]);
                return Some(xa + (half - ya) * (xb - xa) / (yb - ya));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut (imax + 1..pts.len()));
    let xp = pts[imax].detuning;
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (xp - l),
        (None, Some(r)) => 2.0 * (r - xp),
        (None, None) => half_span,
    };
    Ok(LorentzInit {
        mid,
        half_span,
        params: [
            (xp - mid) / half_span,
            (fwhm / half_span).max(1e-6),
            amplitude,
            offset,
        ],
    })
}

/// Fits `offset + amplitude / (1 + (2 (x - center) / fwhm)^2)`.
///
/// Rejects traces without a peak rising more than three noise levels
/// (median sigma, or a robust estimate for unweighted data) above the
/// median level.
pub fn fit_lorentzian(spectrum: &Spectrum) -> Result<LorentzianFit> {
    check_len(spectrum, "fluorescence")?;
    let init = lorentz_init(spectrum)?;
    let (mid, hs) = (init.mid, init.half_span);
    let bounds = Bounds::new(
        vec![-2.0, 1e-6, 0.0, f64::NEG_INFINITY],
        vec![2.0, 20.0, f64::INFINITY, f64::INFINITY],
    )?;
    let res = fit_spectrum(
        |x, p| lorentzian((x - mid) / hs, p[0], p[1], p[2], p[3]),
        spectrum,
        &init.params,
        Some(&bounds),
        &LsqOptions::default(),
    )?;
    let cov = res.require_covariance()?;
    let p = &res.params;
    Ok(LorentzianFit {
        center: mid + p[0] * hs,
        fwhm: p[1] * hs,
        amplitude: p[2],
        offset: p[3],
        covariance: to_array4(
            cov,
            [Some(0), Some(1), Some(2), Some(3)],
            [hs, hs, 1.0, 1.0],
        ),
        chi2: res.chi2,
        dof: res.dof,
        weighted: res.scaling == CovarianceScaling::Absolute,
    })
}

/// Fits the Fano lineshape with the width held at `width_fixed` (rad/s);
/// `V`, `q`, the center and the normalization are free.
///
/// Five deterministic starting points are tried and the lowest chi-square
/// wins. If the center is not identifiable (a flat trace, `V = q = 0`) it is
/// held at `center_init` and flagged.
pub fn fit_fano(spectrum: &Spectrum, width_fixed: f64, center_init: f64) -> Result<FanoFit> {
    check_len(spectrum, "transmission")?;
    if !(width_fixed.is_finite() && width_fixed > 0.0) {
        return Err(Error::param("width_fixed", "must be finite and > 0"));
    }
    if !center_init.is_finite() {
        return Err(Error::param("center_init", "must be finite"));
    }
    let scale = width_fixed / 2.0;
    let pts = spectrum.points();
    let xs: Vec<f64> = pts
        .iter()
        .map(|p| (p.detuning - center_init) / scale)
        .collect();

    // Wings: the 20 % of points farthest from the initial center.
    let mut by_dist: Vec<usize> = (0..pts.len()).collect();
    by_dist.sort_by(|&a, &b| xs[b].abs().total_cmp(&xs[a].abs()));
    let n_wing = (pts.len() / 5).max(2);
    let norm0 = by_dist[..n_wing].iter().map(|&i| pts[i].value).sum::<f64>() / n_wing as f64;
    if !(norm0 > 0.0) {
        return Err(Error::FitRejected(format!(
            "off-resonant level {norm0:e} is not positive"
        )));
    }
    let i0 = by_dist[pts.len() - 1];
    let v0 = (1.0 - pts[i0].value / norm0).clamp(-0.9, 1.9);

    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    let bounds = Bounds::new(
        vec![-1.0, -2.0, xmin, 1e-12 * norm0],
        vec![2.0, 2.0, xmax, f64::INFINITY],
    )?;
    let model = |d: f64, p: &[f64]| p[3] * fano(p[0], p[1], (d - center_init) / scale - p[2]);
    let dv = 0.5 * v0.abs().max(1e-3);
    let c0 = 0.0f64.clamp(xmin, xmax);
    let starts = [
        [v0, 0.0, c0, norm0],
        [v0, dv, c0, norm0],
        [v0, -dv, c0, norm0],
        [v0 * 1.2, 0.0, (c0 + 0.25).min(xmax), norm0],
        [v0 * 0.8, 0.0, (c0 - 0.25).max(xmin), norm0],
    ];
    let opts = LsqOptions::default();
    let mut results: Vec<LsqResult> = Vec::new();
    let mut first_err = None;
    for s in &starts {
        let mut s = *s;
        s[0] = s[0].clamp(-1.0, 2.0);
        match fit_spectrum(model, spectrum, &s, Some(&bounds), &opts) {
            Ok(r) => results.push(r),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if results.is_empty() {
        return Err(first_err.expect("at least one start ran"));
    }
    results.sort_by(|a, b| a.chi2.total_cmp(&b.chi2));
    let best = &results[0];
    let runner_up_gap = results[1..]
        .iter()
        .find(|r| {
            r.params
                .iter()
                .zip(&best.params)
                .take(3)
                .any(|(a, b)| (a - b).abs() > 1e-6 * (1.0 + b.abs()))
        })
        .map(|r| r.chi2 - best.chi2);

    if let Some(cov) = &best.covariance {
        let p = &best.params;
        return Ok(FanoFit {
            visibility: p[0],
            asymmetry: p[1],
            center: center_init + p[2] * scale,
            width: width_fixed,
            normalization: p[3],
            covariance: to_array4(
                cov,
                [Some(0), Some(1), Some(2), Some(3)],
                [1.0, 1.0, scale, 1.0],
            ),
            width_fixed: true,
            width_sigma: 0.0,
            center_fixed: false,
            chi2: best.chi2,
            dof: best.dof,
            runner_up_gap,
        });
    }

    // Center not identifiable: hold it at the initial value.
    let fixed_model = |d: f64, p: &[f64]| p[2] * fano(p[0], p[1], (d - center_init) / scale);
    let fixed_bounds = Bounds::new(
        vec![-1.0, -2.0, 1e-12 * norm0],
        vec![2.0, 2.0, f64::INFINITY],
    )?;
    let p = &best.params;
    let res = lsq::least_squares(
        fixed_model,
        spectrum,
        &[p[0], p[1], p[3]],
        Some(&fixed_bounds),
        &opts,
    )?;
    let cov = res.require_covariance()?;
    let p = &res.params;
    Ok(FanoFit {
        visibility: p[0],
        asymmetry: p[1],
        center: center_init,
        width: width_fixed,
        normalization: p[2],
        covariance: to_array4(cov, [Some(0), Some(1), None, Some(2)], [1.0; 4]),
        width_fixed: true,
        width_sigma: 0.0,
        center_fixed: true,
        chi2: res.chi2,
        dof: res.dof,
        runner_up_gap,
    })
}

/// Fits fluorescence and transmission together with a shared center and
/// width. Starts from the two-step solution.
pub fn fit_joint(
    fluorescence: &Spectrum,
    transmission: &Spectrum,
) -> Result<(LorentzianFit, FanoFit)> {
    let lor = fit_lorentzian(fluorescence)?;
    let fan = fit_fano(transmission, lor.fwhm, lor.center)?;
    let (wf, sf) = lsq::spectrum_weights(fluorescence)?;
    let (wt, st) = lsq::spectrum_weights(transmission)?;
    if sf != st {
        return Err(Error::InvalidSpectrum(
            "joint fit needs both traces weighted or both unweighted".into(),
        ));
    }
    let origin = lor.center;
    let scale = lor.fwhm / 2.0;
    let fl = fluorescence.points();
    let tr = transmission.points();
    let n_f = fl.len();
    let init = [
        0.0,
        2.0,
        lor.amplitude,
        lor.offset,
        fan.visibility,
        fan.asymmetry,
        fan.normalization,
    ];
    let bounds = Bounds::new(
        vec![
            f64::NEG_INFINITY,
            1e-6,
            0.0,
            f64::NEG_INFINITY,
            -1.0,
            -2.0,
            1e-12 * fan.normalization,
        ],
        vec![
            f64::INFINITY,
            f64::INFINITY,
            f64::INFINITY,
            f64::INFINITY,
            2.0,
            2.0,
            f64::INFINITY,
        ],
    )?;
    let res = lsq::minimize(
        |p, out| {
            for (i, pt) in fl.iter().enumerate() {
                let x = (pt.detuning - origin) / scale;
                out[i] = (lorentzian(x, p[0], p[1], p[2], p[3]) - pt.value) * wf[i];
            }
            for (i, pt) in tr.iter().enumerate() {
                let x = (pt.detuning - origin) / scale;
                let e = (x - p[0]) / (p[1] / 2.0);
                out[n_f + i] = (p[6] * fano(p[4], p[5], e) - pt.value) * wt[i];
            }
        },
        n_f + tr.len(),
        &init,
        Some(&bounds),
        &LsqOptions::default(),
        sf,
    )?;
    let cov = res.require_covariance()?;
    let p = &res.params;
    let center = origin + p[0] * scale;
    let fwhm = p[1] * scale;
    let lor = LorentzianFit {
        center,
        fwhm,
        amplitude: p[2],
        offset: p[3],
        covariance: to_array4(
            cov,
            [Some(0), Some(1), Some(2), Some(3)],
            [scale, scale, 1.0, 1.0],
        ),
        chi2: res.chi2,
        dof: res.dof,
        weighted: sf == CovarianceScaling::Absolute,
    };
    let fan = FanoFit {
        visibility: p[4],
        asymmetry: p[5],
        center,
        width: fwhm,
        normalization: p[6],
        covariance: to_array4(
            cov,
            [Some(4), Some(5), Some(0), Some(6)],
            [1.0, 1.0, scale, 1.0],
        ),
        width_fixed: false,
        width_sigma: cov[(1, 1)].max(0.0).sqrt() * scale,
        center_fixed: false,
        chi2: res.chi2,
        dof: res.dof,
        runner_up_gap: None,
    };
    Ok((lor, fan))
}
