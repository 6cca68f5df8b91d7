//! Closed-form inversion of zero-power `(V0, q0)` to the scaled coupling
//! `beta = alpha beta_eff / |t0|` and the propagation phase `phi_T`, choice
//! of the physical branch, and Monte-Carlo error propagation.
//!
//! Inputs are assumed to be zero-power extrapolations (`S -> 0`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::spectra::{fano_params, FanoShape};
use crate::units::wrap_angle;

/// Discriminants down to this negative value are treated as rounding noise.
const DISCRIMINANT_SLACK: f64 = 1e-12;

/// Monte-Carlo samples per RNG stream.
const BLOCK: usize = 1024;

pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Minus,
    Plus,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSolution {
    pub beta_scaled: f64,
    /// In `(-pi, pi]`; `None` when the phase is undefined (`beta = 0`).
    pub phi_t: Option<f64>,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPair {
    pub minus: BranchSolution,
    pub plus: BranchSolution,
    /// `1 - q~^2 - V~`.
    pub discriminant: f64,
    /// `V0 = q0 = 0`: no scattering seen, phase undefined.
    pub degenerate: bool,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0 && v <= 1.0) {
        return Err(Error::param(name, format!("must be in (0, 1], got {v}")));
    }
    Ok(())
}

/// Both solutions `(beta, phi_T)` of the zero-power Fano parameters.
pub fn solve_beta_phi(v0: f64, q0: f64, lw_ratio: f64) -> Result<BranchPair> {
    check_unit("lw_ratio", lw_ratio)?;
    if !(v0.is_finite() && q0.is_finite()) {
        return Err(Error::param("v0/q0", "must be finite"));
    }
    let v = v0 / lw_ratio;
    let q = q0 / lw_ratio;
    let disc = 1.0 - q * q - v;
    if disc < -DISCRIMINANT_SLACK {
        return Err(Error::InconsistentMeasurement { discriminant: disc });
    }
    let root = disc.max(0.0).sqrt();
    let plus_sq = 2.0 - v + 2.0 * root;
    // beta-^2 beta+^2 = V~^2 + 4 q~^2 avoids the cancellation in 2 - V~ - 2 sqrt(D).
    let minus_sq = if plus_sq > 0.0 {
        (v * v + 4.0 * q * q) / plus_sq
    } else {
        0.0
    };
    let phase = |b: f64| -> Option<f64> {
        let b2 = b * b;
        let y = 4.0 * q * q - v * (v + b2 - 4.0);
        let x = 2.0 * q * (2.0 * v + b2 - 4.0);
        if x != 0.0 || y != 0.0 {
            Some(y.atan2(x))
        } else if b > 0.0 {
            // Both arguments vanish on the plus branch when beta- = 0;
            // use the direct form sin = (V~ + b^2) / 2b, cos = -q~ / b.
            Some((v + b2).atan2(-2.0 * q))
        } else {
            None
        }
    };
    let bm = minus_sq.max(0.0).sqrt();
    let bp = plus_sq.max(0.0).sqrt();
    Ok(BranchPair {
        minus: BranchSolution {
            beta_scaled: bm,
            phi_t: phase(bm),
            branch: Branch::Minus,
        },
        plus: BranchSolution {
            beta_scaled: bp,
            phi_t: phase(bp),
            branch: Branch::Plus,
        },
        discriminant: disc,
        degenerate: v0 == 0.0 && q0 == 0.0,
    })
}

/// Zero-power `(V, q)` of a solution; the back-substitution check.
pub fn verify_branch(solution: &BranchSolution, lw_ratio: f64) -> FanoShape {
    match solution.phi_t {
        Some(phi) => fano_params(solution.beta_scaled, phi, lw_ratio, 0.0),
        None => FanoShape {
            visibility: 0.0,
            asymmetry: 0.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub n_samples: usize,
    pub seed: u64,
    pub failed_fraction: f64,
    pub branch_flip_fraction: f64,
    pub beta_eff_mean: f64,
    pub phi_t_mean: f64,
}

/// A second physical solution when the branch choice is ambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternativeBranch {
    pub branch: Branch,
    pub beta_eff: f64,
    pub phi_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub beta_eff: Estimate,
    /// Rad. `None` for the degenerate case.
    pub phi_t: Option<Estimate>,
    pub branch_used: Branch,
    /// Both branches give `beta_eff <= 1`; the other one is in `alternative`.
    pub ambiguous: bool,
    pub alternative: Option<AlternativeBranch>,
    pub rejected_branch_reason: Option<String>,
    pub beta_eff_minus: f64,
    pub beta_eff_plus: f64,
    pub monte_carlo: Option<McStats>,
}

/// Converts both branches to `beta_eff = beta |t0| / alpha` and keeps the
/// physical ones (`beta_eff <= 1`). If both are physical the minus branch is
/// returned and the result is flagged ambiguous.
pub fn select_physical_branch(
    pair: &BranchPair,
    t0_mag: f64,
    alpha: f64,
) -> Result<CouplingResult> {
    check_unit("t0_mag", t0_mag)?;
    check_unit("alpha", alpha)?;
    let be_m = pair.minus.beta_scaled * t0_mag / alpha;
    let be_p = pair.plus.beta_scaled * t0_mag / alpha;
    let ok_m = be_m <= 1.0;
    let ok_p = be_p <= 1.0;
    let pick = |s: &BranchSolution, be: f64| (s.branch, be, s.phi_t);
    let ((branch, be, phi), alt, reason) = match (ok_m, ok_p) {
        (false, false) => {
            return Err(Error::NoPhysicalBranch {
                beta_eff_minus: be_m,
                beta_eff_plus: be_p,
            })
        }
        (true, false) => (
            pick(&pair.minus, be_m),
            None,
            Some(format!("plus branch gives beta_eff = {be_p:.4} > 1")),
        ),
        (false, true) => (
            pick(&pair.plus, be_p),
            None,
            Some(format!("minus branch gives beta_eff = {be_m:.4} > 1")),
        ),
        (true, true) => (
            pick(&pair.minus, be_m),
            Some(AlternativeBranch {
                branch: Branch::Plus,
                beta_eff: be_p,
                phi_t: pair.plus.phi_t,
            }),
            None,
        ),
    };
    Ok(CouplingResult {
        beta_eff: Estimate::exact(be),
        phi_t: phi.map(Estimate::exact),
        branch_used: branch,
        ambiguous: alt.is_some(),
        alternative: alt,
        rejected_branch_reason: reason,
        beta_eff_minus: be_m,
        beta_eff_plus: be_p,
        monte_carlo: None,
    })
}

/// Measured inputs to the inversion with their one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionInputs {
    pub v0: Estimate,
    pub q0: Estimate,
    pub lw_ratio: Estimate,
    pub t0_mag: Estimate,
    pub alpha: Estimate,
}

impl InversionInputs {
    fn validate(&self) -> Result<()> {
        for (name, e) in [
            ("v0", self.v0),
            ("q0", self.q0),
            ("lw_ratio", self.lw_ratio),
            ("t0_mag", self.t0_mag),
            ("alpha", self.alpha),
        ] {
            if !(e.sigma.is_finite() && e.sigma >= 0.0) {
                return Err(Error::param(
                    format!("{name}.sigma"),
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Point inversion at the central values.
    pub fn invert(&self) -> Result<CouplingResult> {
        let pair = solve_beta_phi(self.v0.value, self.q0.value, self.lw_ratio.value)?;
        select_physical_branch(&pair, self.t0_mag.value, self.alpha.value)
    }
}

enum Draw {
    Ok {
        beta_eff: f64,
        phi: f64,
        flipped: bool,
    },
    Failed,
}

struct Samplers {
    v0: Normal<f64>,
    q0: Normal<f64>,
    lw: Normal<f64>,
    t0: Normal<f64>,
    alpha: Normal<f64>,
}

fn normal(e: Estimate, name: &str) -> Result<Normal<f64>> {
    Normal::new(e.value, e.sigma).map_err(|err| Error::param(name, err.to_string()))
}

/// Draws from `d` until the value lands in `(0, 1]`.
fn truncated(d: &Normal<f64>, rng: &mut ChaCha8Rng) -> Option<f64> {
    (0..10_000)
        .map(|_| d.sample(rng))
        .find(|x| *x > 0.0 && *x <= 1.0)
}

fn one_draw(s: &Samplers, rng: &mut ChaCha8Rng, central: Branch) -> Draw {
    let v0 = s.v0.sample(rng);
    let q0 = s.q0.sample(rng);
    let (Some(lw), Some(t0), Some(alpha)) = (
        truncated(&s.lw, rng),
        truncated(&s.t0, rng),
        truncated(&s.alpha, rng),
    ) else {
        return Draw::Failed;
    };
    let Ok(pair) = solve_beta_phi(v0, q0, lw) else {
        return Draw::Failed;
    };
    let Ok(res) = select_physical_branch(&pair, t0, alpha) else {
        return Draw::Failed;
    };
    // Prefer the branch chosen at the central point when it stays physical.
    let (be, phi, branch) = match (&res.alternative, central) {
        (Some(alt), Branch::Plus) => (alt.beta_eff, alt.phi_t, alt.branch),
        _ => (
            res.beta_eff.value,
            res.phi_t.map(|p| p.value),
            res.branch_used,
        ),
    };
    match phi {
        Some(phi) => Draw::Ok {
            beta_eff: be,
            phi,
            flipped: branch != central,
        },
        None => Draw::Failed,
    }
}

fn run_block(s: &Samplers, seed: u64, block: usize, n: usize, central: Branch) -> Vec<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    (0..n).map(|_| one_draw(s, &mut rng, central)).collect()
}

/// Propagates Gaussian input uncertainties through the inversion by Monte
/// Carlo. `|t0|`, `alpha` and `lw_ratio` are truncated to `(0, 1]` by
/// rejection. Values are the central-point inversion; sigmas are the sample
/// standard deviations. Deterministic for a given seed, independent of the
/// thread count.
pub fn propagate_uncertainty(
    inputs: &InversionInputs,
    n_samples: usize,
    seed: u64,
) -> Result<CouplingResult> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::param(
            "n_samples",
            format!("must be >= {MIN_SAMPLES}, got {n_samples}"),
        ));
    }
    inputs.validate()?;
    let mut central = inputs.invert()?;
    let Some(phi_c) = central.phi_t.map(|p| p.value) else {
        return Err(Error::Degenerate);
    };
    let samplers = Samplers {
        v0: normal(inputs.v0, "v0")?,
        q0: normal(inputs.q0, "q0")?,
        lw: normal(inputs.lw_ratio, "lw_ratio")?,
        t0: normal(inputs.t0_mag, "t0_mag")?,
        alpha: normal(inputs.alpha, "alpha")?,
    };
    let branch = central.branch_used;
    let blocks: Vec<(usize, usize)> = (0..n_samples.div_ceil(BLOCK))
        .map(|b| (b, BLOCK.min(n_samples - b * BLOCK)))
        .collect();

    #[cfg(feature = "parallel")]
    let draws: Vec<Vec<Draw>> = {
        use rayon::prelude::*;
        blocks
            .par_iter()
            .map(|&(b, n)| run_block(&samplers, seed, b, n, branch))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<Vec<Draw>> = blocks
        .iter()
        .map(|&(b, n)| run_block(&samplers, seed, b, n, branch))
        .collect();

    let mut betas = Vec::with_capacity(n_samples);
    let mut dphis = Vec::with_capacity(n_samples);
    let mut failed = 0usize;
    let mut flips = 0usize;
    for d in draws.iter().flatten() {
        match d {
            Draw::Ok {
                beta_eff,
                phi,
                flipped,
            } => {
                betas.push(*beta_eff);
                dphis.push(wrap_angle(phi - phi_c));
                flips += *flipped as usize;
            }
            Draw::Failed => failed += 1,
        }
    }
    let failed_fraction = failed as f64 / n_samples as f64;
    if failed_fraction > 0.5 {
        return Err(Error::UnstableInversion { failed_fraction });
    }
    let (mb, sb) = mean_std(&betas);
    let (mp, sp) = mean_std(&dphis);
    central.beta_eff.sigma = sb;
    central.phi_t = Some(Estimate::new(phi_c, sp));
    central.monte_carlo = Some(McStats {
        n_samples,
        seed,
        failed_fraction,
        branch_flip_fraction: flips as f64 / n_samples as f64,
        beta_eff_mean: mb,
        phi_t_mean: wrap_angle(phi_c + mp),
    });
    Ok(central)
}

/// Computed about the first sample so that identical samples give exactly zero spread.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let Some(&x0) = v.first() else {
        return (f64::NAN, 0.0);
    };
    let n = v.len() as f64;
    let m = v.iter().map(|x| x - x0).sum::<f64>() / n;
    if v.len() < 2 {
        return (x0, 0.0);
    }
    let var = v.iter().map(|x| (x - x0 - m).powi(2)).sum::<f64>() / (n - 1.0);
    (x0 + m, var.sqrt())
}
