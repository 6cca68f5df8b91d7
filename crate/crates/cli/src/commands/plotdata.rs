use std::fmt::Write as _;
use std::path::Path;

use extinction_core::fitting::lorentzian;
use extinction_core::io::load_spectrum;
use extinction_core::spectra::fano;
use extinction_core::units::rad_s_to_mhz;

use super::relative_to;
use crate::report::{AnalysisReport, ExtrapolationSection, PowerRow};
use crate::{write_file, CliError, CliResult, PlotdataArgs};

/// Points on each fitted power-dependence curve.
pub const CURVE_POINTS: usize = 100;

pub const OVERLAY_HEADER: &str = "detuning_mhz,signal,sigma,model";
pub const POWER_HEADER: &str =
    "power_w,fwhm_mhz,fwhm_sigma_mhz,visibility_dimless,visibility_sigma_dimless,asymmetry_dimless,asymmetry_sigma_dimless";
pub const CURVE_HEADER: &str = "power_w,fwhm_mhz,visibility_dimless,asymmetry_dimless";

fn overlay(path: &Path, model: impl Fn(f64) -> f64) -> CliResult<String> {
    let sp = load_spectrum(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let mut s = String::from(OVERLAY_HEADER);
    s.push('\n');
    for p in sp.points() {
        let x = rad_s_to_mhz(p.detuning);
        let _ = writeln!(s, "{x},{},{},{}", p.value, p.sigma, model(x));
    }
    Ok(s)
}

fn overlays(anchor: &Path, row: &PowerRow) -> CliResult<(String, String)> {
    let l = &row.lorentzian;
    let fl = overlay(&relative_to(anchor, &row.fluorescence_file), |x| {
        lorentzian(
            x,
            l.center_mhz.value,
            l.fwhm_mhz.value,
            l.amplitude_counts,
            l.offset_counts,
        )
    })?;
    let f = &row.fano;
    let tr = overlay(&relative_to(anchor, &row.transmission_file), |x| {
        f.normalization_dimless
            * fano(
                f.visibility_dimless.value,
                f.asymmetry_dimless.value,
                (x - f.center_mhz.value) / (f.width_mhz.value / 2.0),
            )
    })?;
    Ok((fl, tr))
}

pub fn power_table(rows: &[PowerRow]) -> String {
    let mut s = String::from(POWER_HEADER);
    s.push('\n');
    for r in rows {
        let (w, v, q) = (
            &r.lorentzian.fwhm_mhz,
            &r.fano.visibility_dimless,
            &r.fano.asymmetry_dimless,
        );
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.power_w, w.value, w.sigma, v.value, v.sigma, q.value, q.sigma
        );
    }
    s
}

/// Fitted curves from zero to the largest measured power.
pub fn curve_table(x: &ExtrapolationSection, p_max: f64) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for k in 0..CURVE_POINTS {
        let p = p_max * k as f64 / (CURVE_POINTS - 1) as f64;
        let _ = writeln!(
            s,
            "{p},{},{},{}",
            x.fwhm_mhz_at(p),
            x.visibility_at(p),
            x.asymmetry_at(p)
        );
    }
    s
}

pub fn run(args: &PlotdataArgs) -> CliResult<()> {
    let report = AnalysisReport::load(&args.report)?;
    if report.powers.is_empty() {
        return Err(CliError::usage(format!(
            "{}: report has no fitted powers to plot",
            args.report.display()
        )));
    }
    let manifest = report
        .inputs
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::usage("report does not name its manifest"))?;
    let anchor = Path::new(&manifest.path);
    let mut written = 0;
    for (i, row) in report.powers.iter().enumerate() {
        let (fl, tr) = overlays(anchor, row)?;
        write_file(
            &args.out.join(format!("p{i:02}_fluorescence_overlay.csv")),
            fl.as_bytes(),
        )?;
        write_file(
            &args.out.join(format!("p{i:02}_transmission_overlay.csv")),
            tr.as_bytes(),
        )?;
        written += 2;
    }
    if let Some(x) = &report.extrapolation {
        let p_max = report.powers.iter().fold(0.0f64, |m, r| m.max(r.power_w));
        write_file(
            &args.out.join("power_dependence.csv"),
            power_table(&report.powers).as_bytes(),
        )?;
        write_file(
            &args.out.join("extrapolation_curves.csv"),
            curve_table(x, p_max).as_bytes(),
        )?;
        written += 2;
    }
    println!("wrote {written} files to {}", args.out.display());
    Ok(())
}
