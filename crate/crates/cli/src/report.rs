//! The analysis report. Every number carries its unit in the field name.

use std::path::Path;

use extinction_core::fitting::{
    ChannelFit, ExtrapolationMode, FanoFit, LorentzianFit, ZeroPowerResult,
};
use extinction_core::units::rad_s_to_mhz;
use extinction_core::Estimate;
use serde::{Deserialize, Serialize};

use crate::{read_file, sha256_hex, write_json, CliError, CliResult, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    /// Wall-clock time of writing; excluded from `content_sha256`.
    pub generated_unix_s: Option<u64>,
    /// Digest of the report with this field and `generated_unix_s` cleared.
    pub content_sha256: Option<String>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            generated_unix_s: None,
            content_sha256: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, shown_as: impl Into<String>) -> CliResult<Self> {
        Ok(FileDigest {
            path: shown_as.into(),
            sha256: sha256_hex(&read_file(path)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub manifest: Option<FileDigest>,
    pub files: Vec<FileDigest>,
    pub joint_lineshape_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianRow {
    pub center_mhz: Estimate,
    pub fwhm_mhz: Estimate,
    pub amplitude_counts: f64,
    pub offset_counts: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl From<&LorentzianFit> for LorentzianRow {
    fn from(f: &LorentzianFit) -> Self {
        LorentzianRow {
            center_mhz: Estimate::new(rad_s_to_mhz(f.center), rad_s_to_mhz(f.center_sigma())),
            fwhm_mhz: Estimate::new(rad_s_to_mhz(f.fwhm), rad_s_to_mhz(f.fwhm_sigma())),
            amplitude_counts: f.amplitude,
            offset_counts: f.offset,
            chi2: f.chi2,
            dof: f.dof,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanoRow {
    pub visibility_dimless: Estimate,
    pub asymmetry_dimless: Estimate,
    pub center_mhz: Estimate,
    /// FWHM of the Fano denominator.
    pub width_mhz: Estimate,
    pub width_fixed: bool,
    pub center_fixed: bool,
    pub normalization_dimless: f64,
    pub chi2: f64,
    pub dof: usize,
    pub runner_up_chi2_gap: Option<f64>,
}

impl From<&FanoFit> for FanoRow {
    fn from(f: &FanoFit) -> Self {
        FanoRow {
            visibility_dimless: Estimate::new(f.visibility, f.visibility_sigma()),
            asymmetry_dimless: Estimate::new(f.asymmetry, f.asymmetry_sigma()),
            center_mhz: Estimate::new(rad_s_to_mhz(f.center), rad_s_to_mhz(f.center_sigma())),
            width_mhz: Estimate::new(rad_s_to_mhz(f.width), rad_s_to_mhz(f.width_sigma)),
            width_fixed: f.width_fixed,
            center_fixed: f.center_fixed,
            normalization_dimless: f.normalization,
            chi2: f.chi2,
            dof: f.dof,
            runner_up_chi2_gap: f.runner_up_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRow {
    pub power_w: f64,
    /// Paths as listed in the manifest, relative to its directory.
    pub fluorescence_file: String,
    pub transmission_file: String,
    pub lorentzian: LorentzianRow,
    pub fano: FanoRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRow {
    /// Zero-power intercept: Gamma2/pi in MHz for the linewidth, else dimensionless.
    pub intercept: Estimate,
    pub inverse_p_sat_per_w: Estimate,
    /// `1/P_sat` used for the curves of this channel (the shared one in joint mode).
    pub curve_inverse_p_sat_per_w: f64,
    pub k_fixed: bool,
    pub chi2: f64,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrapolationSection {
    pub mode: ExtrapolationMode,
    pub gamma2_over_pi_mhz: Estimate,
    pub v0_dimless: Estimate,
    pub q0_dimless: Estimate,
    pub p_sat_w: Option<Estimate>,
    pub joint_chi2: Option<f64>,
    pub joint_dof: Option<usize>,
    pub joint_p_value: Option<f64>,
    pub fallback_reason: Option<String>,
    pub linewidth: ChannelRow,
    pub visibility: ChannelRow,
    pub asymmetry: ChannelRow,
}

fn scaled(e: Estimate, f: f64) -> Estimate {
    Estimate::new(e.value * f, e.sigma * f)
}

/// Gamma2 (rad/s) to Gamma2/pi in MHz.
pub fn gamma2_to_mhz(g2: f64) -> f64 {
    rad_s_to_mhz(2.0 * g2)
}

pub fn mhz_to_gamma2(mhz: f64) -> f64 {
    extinction_core::units::mhz_to_rad_s(mhz) / 2.0
}

impl ExtrapolationSection {
    pub fn from_result(r: &ZeroPowerResult) -> Self {
        let shared = match (&r.mode, &r.joint) {
            (ExtrapolationMode::Joint, Some(j)) => Some(j.inverse_p_sat.value),
            _ => None,
        };
        let row = |c: &ChannelFit, unit: f64| ChannelRow {
            intercept: scaled(c.intercept, unit),
            inverse_p_sat_per_w: c.inverse_p_sat,
            curve_inverse_p_sat_per_w: shared.unwrap_or(c.inverse_p_sat.value),
            k_fixed: c.k_fixed,
            chi2: c.chi2,
            dof: c.dof,
        };
        let to_mhz = gamma2_to_mhz(1.0);
        ExtrapolationSection {
            mode: r.mode,
            gamma2_over_pi_mhz: scaled(r.gamma2, to_mhz),
            v0_dimless: r.v0,
            q0_dimless: r.q0,
            p_sat_w: r.p_sat,
            joint_chi2: r.joint.as_ref().map(|j| j.chi2),
            joint_dof: r.joint.as_ref().map(|j| j.dof),
            joint_p_value: r.joint.as_ref().and_then(|j| j.p_value),
            fallback_reason: r.fallback_reason.clone(),
            linewidth: row(&r.independent.linewidth, to_mhz),
            visibility: row(&r.independent.visibility, 1.0),
            asymmetry: row(&r.independent.asymmetry, 1.0),
        }
    }

    pub fn fwhm_mhz_at(&self, p: f64) -> f64 {
        self.gamma2_over_pi_mhz.value * (1.0 + self.linewidth.curve_inverse_p_sat_per_w * p).sqrt()
    }

    pub fn visibility_at(&self, p: f64) -> f64 {
        self.v0_dimless.value / (1.0 + self.visibility.curve_inverse_p_sat_per_w * p)
    }

    pub fn asymmetry_at(&self, p: f64) -> f64 {
        self.q0_dimless.value / (1.0 + self.asymmetry.curve_inverse_p_sat_per_w * p).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionInputsRow {
    pub v0_dimless: Estimate,
    pub q0_dimless: Estimate,
    pub lw_ratio_dimless: Estimate,
    pub t0_mag_dimless: Estimate,
    pub alpha_dimless: Estimate,
    pub samples: usize,
    pub seed: u64,
    /// V0 and q0 are zero-power values, so S = 0 is assumed.
    pub assumes_zero_power: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRow {
    pub branch: String,
    pub beta_scaled_dimless: f64,
    pub beta_eff_dimless: f64,
    pub phi_t_deg: Option<f64>,
    pub physical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionStatus {
    Ok,
    /// V0 = q0 = 0: no coupling resolved, the phase is undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloRow {
    pub samples: usize,
    pub seed: u64,
    pub failed_fraction: f64,
    pub branch_flip_fraction: f64,
    pub beta_eff_mean_dimless: f64,
    pub phi_t_mean_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    pub status: InversionStatus,
    pub inputs: InversionInputsRow,
    pub discriminant_dimless: f64,
    pub branches: Vec<BranchRow>,
    pub selected_branch: String,
    pub beta_eff_dimless: Estimate,
    pub phi_t_deg: Option<Estimate>,
    pub ambiguous: bool,
    pub rationale: String,
    pub monte_carlo: Option<MonteCarloRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSection {
    pub map: FileDigest,
    pub beta_eff_dimless: f64,
    pub phi_t_deg: f64,
    pub tolerance_deg: f64,
    pub contour_branches: usize,
    pub contour_points: usize,
    pub map_beta_eff_min_dimless: f64,
    pub map_beta_eff_max_dimless: f64,
    pub dipole_angle_min_deg: f64,
    pub dipole_angle_max_deg: f64,
    /// Human-readable angle range, e.g. `[25°, 49°]`.
    pub dipole_angle_range: String,
    pub contour_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub format_version: u32,
    pub provenance: Provenance,
    pub inputs: Inputs,
    pub powers: Vec<PowerRow>,
    pub warnings: Vec<String>,
    pub extrapolation: Option<ExtrapolationSection>,
    pub inversion: Option<InversionSection>,
    pub localization: Option<LocalizationSection>,
}

impl Default for AnalysisReport {
    fn default() -> Self {
        AnalysisReport {
            format_version: FORMAT_VERSION,
            provenance: Provenance::default(),
            inputs: Inputs::default(),
            powers: Vec::new(),
            warnings: Vec::new(),
            extrapolation: None,
            inversion: None,
            localization: None,
        }
    }
}

impl AnalysisReport {
    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
            && self.extrapolation.is_none()
            && self.inversion.is_none()
            && self.localization.is_none()
    }

    /// SHA-256 of the canonical JSON with the timestamp and the digest itself cleared.
    pub fn content_digest(&self) -> String {
        let mut r = self.clone();
        r.provenance.generated_unix_s = None;
        r.provenance.content_sha256 = None;
        sha256_hex(&serde_json::to_vec(&r).expect("report serializes"))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_file(path)?;
        let r: AnalysisReport = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if r.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "{}: unsupported format_version {}, expected {FORMAT_VERSION}",
                path.display(),
                r.format_version
            )));
        }
        Ok(r)
    }

    /// Stamps time and digest, then writes pretty JSON.
    pub fn save(&mut self, path: &Path) -> CliResult<()> {
        self.provenance.generated_unix_s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
        self.provenance.content_sha256 = Some(self.content_digest());
        write_json(path, self)
    }
}
