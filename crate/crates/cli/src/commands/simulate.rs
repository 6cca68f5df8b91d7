use serde::{Deserialize, Serialize};

use extinction_core::io::save_spectrum;
use extinction_core::spectra::fano_params;
use extinction_core::synth::{generate_power_series, generate_spectrum};
use extinction_core::units::deg;

use super::{Manifest, ManifestEntry};
use crate::config::SimulationConfig;
use crate::report::gamma2_to_mhz;
use crate::{write_json, CliError, CliResult, SimulateArgs, FORMAT_VERSION};

/// Ground truth written next to the synthetic spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub format_version: u32,
    pub config: SimulationConfig,
    pub gamma2_over_pi_mhz: f64,
    pub lw_ratio_dimless: f64,
    pub beta_scaled_dimless: f64,
    pub v0_dimless: f64,
    pub q0_dimless: f64,
    pub p_sat_w: Option<f64>,
    pub powers_w: Vec<f64>,
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let cfg = SimulationConfig::load(&args.config)?;
    let sc = cfg.to_scenario()?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("{}: {e}", args.out.display())))?;

    let em = &sc.emitter;
    let beta = sc.coupling.beta_scaled(em.alpha());
    let shape = fano_params(beta, sc.coupling.phi_t, em.linewidth_ratio(), 0.0);
    let truth = Truth {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        gamma2_over_pi_mhz: gamma2_to_mhz(em.gamma2()),
        lw_ratio_dimless: em.linewidth_ratio(),
        beta_scaled_dimless: beta,
        v0_dimless: shape.visibility,
        q0_dimless: shape.asymmetry,
        p_sat_w: sc.saturation_power().ok().filter(|p| p.is_finite()),
        powers_w: sc.powers.clone(),
    };

    let mut written = Vec::new();
    if sc.powers.is_empty() {
        let name = "transmission.csv";
        save_spectrum(&generate_spectrum(&sc, 0.0)?, args.out.join(name))?;
        written.push(name.to_string());
    } else {
        let scans = generate_power_series(&sc)?;
        let mut entries = Vec::with_capacity(scans.len());
        for (i, scan) in scans.iter().enumerate() {
            let fl = format!("p{i:02}_fluorescence.csv");
            let tr = format!("p{i:02}_transmission.csv");
            save_spectrum(&scan.fluorescence, args.out.join(&fl))?;
            save_spectrum(&scan.transmission, args.out.join(&tr))?;
            written.push(fl.clone());
            written.push(tr.clone());
            entries.push(ManifestEntry {
                power_w: scan.power,
                fluorescence: fl,
                transmission: tr,
            });
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            entries,
        };
        write_json(&args.out.join("manifest.json"), &manifest)?;
    }
    write_json(&args.out.join("truth.json"), &truth)?;

    println!(
        "wrote {} spectra to {} (Gamma2/pi = {:.3} MHz, V0 = {:.5}, q0 = {:.5}, phi_T = {:.2} deg)",
        written.len(),
        args.out.display(),
        truth.gamma2_over_pi_mhz,
        truth.v0_dimless,
        truth.q0_dimless,
        deg(sc.coupling.phi_t)
    );
    Ok(())
}
