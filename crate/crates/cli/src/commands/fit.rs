use extinction_core::fitting::{
    extrapolate_zero_power, fit_fano, fit_joint, fit_lorentzian, FanoFit, LorentzianFit,
    PowerEntry, PowerSeries,
};
use extinction_core::io::load_spectrum;

use super::{relative_to, Manifest, ManifestEntry};
use crate::report::{
    AnalysisReport, ExtrapolationSection, FanoRow, FileDigest, LorentzianRow, PowerRow,
};
use crate::{CliError, CliResult, FitArgs};

fn fit_entry(
    manifest: &std::path::Path,
    e: &ManifestEntry,
    joint: bool,
) -> Result<(LorentzianFit, FanoFit), String> {
    let fl = load_spectrum(relative_to(manifest, &e.fluorescence))
        .map_err(|err| format!("fluorescence file `{}`: {err}", e.fluorescence))?;
    let tr = load_spectrum(relative_to(manifest, &e.transmission))
        .map_err(|err| format!("transmission file `{}`: {err}", e.transmission))?;
    if joint {
        return fit_joint(&fl, &tr).map_err(|err| format!("joint fit: {err}"));
    }
    let lor = fit_lorentzian(&fl).map_err(|err| format!("fluorescence fit: {err}"))?;
    let fano =
        fit_fano(&tr, lor.fwhm, lor.center).map_err(|err| format!("transmission fit: {err}"))?;
    Ok((lor, fano))
}

/// Fits every manifest entry, isolating per-power failures, then
/// extrapolates to zero power when at least three powers survive.
pub fn analyze(args: &FitArgs) -> CliResult<AnalysisReport> {
    let manifest = Manifest::load(&args.manifest)?;
    let mut report = AnalysisReport::default();
    report.inputs.manifest = Some(FileDigest::of(
        &args.manifest,
        args.manifest.display().to_string(),
    )?);
    report.inputs.joint_lineshape_fit = args.joint;

    for e in &manifest.entries {
        for f in [&e.fluorescence, &e.transmission] {
            if let Ok(d) = FileDigest::of(&relative_to(&args.manifest, f), f.clone()) {
                report.inputs.files.push(d);
            }
        }
    }

    let fits: Vec<_> = manifest
        .entries
        .iter()
        .map(|e| fit_entry(&args.manifest, e, args.joint))
        .collect();

    let mut series = Vec::new();
    for (e, fit) in manifest.entries.iter().zip(fits) {
        match fit {
            Ok((lor, fano)) => {
                report.powers.push(PowerRow {
                    power_w: e.power_w,
                    fluorescence_file: e.fluorescence.clone(),
                    transmission_file: e.transmission.clone(),
                    lorentzian: LorentzianRow::from(&lor),
                    fano: FanoRow::from(&fano),
                });
                if e.power_w > 0.0 {
                    series.push(PowerEntry {
                        power: e.power_w,
                        lorentzian: lor,
                        fano,
                    });
                } else {
                    report
                        .warnings
                        .push("power 0 W: excluded from the zero-power extrapolation".to_string());
                }
            }
            Err(msg) => report
                .warnings
                .push(format!("power {} W skipped: {msg}", e.power_w)),
        }
    }

    if report.powers.is_empty() {
        return Err(CliError::fit(format!(
            "no power could be fitted:\n  {}",
            report.warnings.join("\n  ")
        )));
    }

    let series = PowerSeries::new(series)?;
    if series.distinct_powers() >= 3 {
        match extrapolate_zero_power(&series) {
            Ok(r) => report.extrapolation = Some(ExtrapolationSection::from_result(&r)),
            Err(err) => report
                .warnings
                .push(format!("zero-power extrapolation failed: {err}")),
        }
    } else {
        report.warnings.push(format!(
            "zero-power extrapolation needs at least 3 distinct powers, got {}",
            series.distinct_powers()
        ));
    }
    Ok(report)
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let mut report = analyze(args)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{:>12} {:>16} {:>22} {:>22}",
        "power_w", "fwhm_mhz", "visibility", "asymmetry"
    );
    for r in &report.powers {
        println!(
            "{:>12.4e} {:>8.3} ± {:<5.3} {:>10.5} ± {:<9.5} {:>10.5} ± {:<9.5}",
            r.power_w,
            r.lorentzian.fwhm_mhz.value,
            r.lorentzian.fwhm_mhz.sigma,
            r.fano.visibility_dimless.value,
            r.fano.visibility_dimless.sigma,
            r.fano.asymmetry_dimless.value,
            r.fano.asymmetry_dimless.sigma
        );
    }
    if let Some(x) = &report.extrapolation {
        println!(
            "zero power ({:?}): Gamma2/pi = {:.3} ± {:.3} MHz, V0 = {:.5} ± {:.5}, q0 = {:.3e} ± {:.1e}",
            x.mode,
            x.gamma2_over_pi_mhz.value,
            x.gamma2_over_pi_mhz.sigma,
            x.v0_dimless.value,
            x.v0_dimless.sigma,
            x.q0_dimless.value,
            x.q0_dimless.sigma
        );
        if let Some(reason) = &x.fallback_reason {
            println!("  independent channels used: {reason}");
        }
    }
    report.save(&args.out)
}
