use extinction_core::localization::{
    beta_range_on_contour, dipole_angle, load_map, phase_contour, write_contour_csv, CouplingMap,
};
use extinction_core::units::{deg, rad};
use extinction_core::Error;

use crate::report::{AnalysisReport, FileDigest, InversionStatus, LocalizationSection};
use crate::{write_file, CliError, CliResult, LocateArgs};

/// `[25°, 49°]` style, whole degrees.
pub fn format_angle_range(lo_deg: f64, hi_deg: f64) -> String {
    format!("[{lo_deg:.0}°, {hi_deg:.0}°]")
}

/// Contour of the measured phase and the dipole tilt range it implies.
pub fn localize(
    map: &CouplingMap,
    beta_eff: f64,
    phi_deg: f64,
    tolerance_deg: f64,
) -> CliResult<(LocalizationSection, Vec<u8>)> {
    if !(tolerance_deg.is_finite() && tolerance_deg > 0.0) {
        return Err(CliError::usage("--tolerance-deg must be > 0"));
    }
    let contour = phase_contour(map, rad(phi_deg), rad(tolerance_deg))?;
    if contour.is_empty() {
        return Err(
            Error::NoSolution(format!("no point of the map has phi_T = {phi_deg} deg")).into(),
        );
    }
    let (lo, hi) = beta_range_on_contour(map, &contour)?;
    if beta_eff > hi {
        return Err(Error::NoSolution(format!(
            "measured beta_eff {beta_eff:.4} exceeds the map maximum {hi:.4} on the phi_T = {phi_deg} deg contour"
        ))
        .into());
    }
    let theta_hi = deg(dipole_angle(beta_eff, hi)?);
    let theta_lo = deg(dipole_angle(beta_eff, lo.max(beta_eff))?);
    let mut csv = Vec::new();
    write_contour_csv(map, &contour, &mut csv)?;
    let section = LocalizationSection {
        map: FileDigest {
            path: String::new(),
            sha256: String::new(),
        },
        beta_eff_dimless: beta_eff,
        phi_t_deg: phi_deg,
        tolerance_deg,
        contour_branches: contour.branches.len(),
        contour_points: contour.branches.iter().map(|b| b.points.len()).sum(),
        map_beta_eff_min_dimless: lo,
        map_beta_eff_max_dimless: hi,
        dipole_angle_min_deg: theta_lo,
        dipole_angle_max_deg: theta_hi,
        dipole_angle_range: format_angle_range(theta_lo, theta_hi),
        contour_file: None,
    };
    Ok((section, csv))
}

pub fn run(args: &LocateArgs) -> CliResult<()> {
    let report = match &args.report {
        Some(p) => Some(AnalysisReport::load(p)?),
        None => None,
    };
    let (beta, phi) = match &report {
        Some(r) => {
            let inv = r
                .inversion
                .as_ref()
                .ok_or_else(|| CliError::usage("report has no inversion result"))?;
            match (&inv.status, &inv.phi_t_deg) {
                (InversionStatus::Ok, Some(p)) => (inv.beta_eff_dimless.value, p.value),
                _ => return Err(Error::Degenerate.into()),
            }
        }
        None => match (args.beta_eff, args.phi_deg) {
            (Some(b), Some(p)) => (b, p),
            _ => {
                return Err(CliError::usage(
                    "either --report or both --beta-eff and --phi-deg are required",
                ))
            }
        },
    };
    let map = load_map(&args.map).map_err(|e| CliError::from(e).context(args.map.display()))?;
    let (mut section, csv) = localize(&map, beta, phi, args.tolerance_deg)?;
    section.map = FileDigest::of(&args.map, args.map.display().to_string())?;
    if let Some(path) = &args.contour_out {
        write_file(path, &csv)?;
        section.contour_file = Some(path.display().to_string());
    }

    println!(
        "phi_T = {:.2} deg contour: {} branches, {} points",
        section.phi_t_deg, section.contour_branches, section.contour_points
    );
    println!(
        "aligned-dipole beta_eff on contour: {:.4} to {:.4}",
        section.map_beta_eff_min_dimless, section.map_beta_eff_max_dimless
    );
    println!(
        "dipole angle to x for beta_eff = {:.4}: {}",
        section.beta_eff_dimless, section.dipole_angle_range
    );

    if let Some(out) = &args.out {
        let mut r = report.unwrap_or_default();
        r.localization = Some(section);
        r.save(out)?;
    }
    Ok(())
}
