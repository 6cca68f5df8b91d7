use extinction_core::inversion::{
    propagate_uncertainty, solve_beta_phi, CouplingResult, InversionInputs,
};
use extinction_core::units::deg;
use extinction_core::Estimate;

use crate::report::{
    mhz_to_gamma2, AnalysisReport, BranchRow, InversionInputsRow, InversionSection,
    InversionStatus, MonteCarloRow,
};
use crate::{CliError, CliResult, InvertArgs};

fn deg_estimate(e: Estimate) -> Estimate {
    Estimate::new(deg(e.value), deg(e.sigma))
}

/// Inputs from the flags, or from the extrapolation section of a report.
fn gather(args: &InvertArgs, report: Option<&AnalysisReport>) -> CliResult<InversionInputs> {
    let t0_mag = Estimate::new(args.t0, args.t0_sigma);
    let alpha = Estimate::new(args.alpha, args.alpha_sigma);
    let Some(report) = report else {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::usage(format!("--{name} is required")))
        };
        return Ok(InversionInputs {
            v0: Estimate::new(need(args.v0, "v0")?, args.v0_sigma),
            q0: Estimate::new(need(args.q0, "q0")?, args.q0_sigma),
            lw_ratio: Estimate::new(need(args.lw_ratio, "lw-ratio")?, args.lw_ratio_sigma),
            t0_mag,
            alpha,
        });
    };
    let x = report
        .extrapolation
        .as_ref()
        .ok_or_else(|| CliError::usage("report has no zero-power extrapolation"))?;
    let tau = args
        .lifetime_ns
        .ok_or_else(|| CliError::usage("--lifetime-ns is required with --report"))?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CliError::usage("--lifetime-ns must be > 0"));
    }
    let g1 = 1e9 / tau;
    let g2 = mhz_to_gamma2(x.gamma2_over_pi_mhz.value);
    let lw = g1 / (2.0 * g2);
    let rel = ((x.gamma2_over_pi_mhz.sigma / x.gamma2_over_pi_mhz.value).powi(2)
        + (args.lifetime_sigma_ns / tau).powi(2))
    .sqrt();
    Ok(InversionInputs {
        v0: x.v0_dimless,
        q0: x.q0_dimless,
        lw_ratio: Estimate::new(lw, lw * rel),
        t0_mag,
        alpha,
    })
}

fn has_spread(i: &InversionInputs) -> bool {
    [i.v0, i.q0, i.lw_ratio, i.t0_mag, i.alpha]
        .iter()
        .any(|e| e.sigma > 0.0)
}

pub fn invert(inputs: &InversionInputs, samples: usize, seed: u64) -> CliResult<InversionSection> {
    let pair = solve_beta_phi(inputs.v0.value, inputs.q0.value, inputs.lw_ratio.value)?;
    let central = inputs.invert()?;
    let degenerate = central.phi_t.is_none();
    let result: CouplingResult = if !degenerate && has_spread(inputs) {
        propagate_uncertainty(inputs, samples, seed)?
    } else {
        central
    };

    let scale = inputs.t0_mag.value / inputs.alpha.value;
    let branches = [&pair.minus, &pair.plus]
        .iter()
        .map(|b| {
            let be = b.beta_scaled * scale;
            BranchRow {
                branch: b.branch.to_string(),
                beta_scaled_dimless: b.beta_scaled,
                beta_eff_dimless: be,
                phi_t_deg: b.phi_t.map(deg),
                physical: be <= 1.0,
            }
        })
        .collect();

    let rationale = if degenerate {
        "V0 = q0 = 0: no coupling resolved, phi_T is undefined".to_string()
    } else if let Some(alt) = &result.alternative {
        format!(
            "both branches are physical; {} branch reported, {} branch gives beta_eff = {:.4}",
            result.branch_used, alt.branch, alt.beta_eff
        )
    } else {
        result
            .rejected_branch_reason
            .clone()
            .unwrap_or_else(|| format!("{} branch selected", result.branch_used))
    };

    Ok(InversionSection {
        status: if degenerate {
            InversionStatus::Degenerate
        } else {
            InversionStatus::Ok
        },
        inputs: InversionInputsRow {
            v0_dimless: inputs.v0,
            q0_dimless: inputs.q0,
            lw_ratio_dimless: inputs.lw_ratio,
            t0_mag_dimless: inputs.t0_mag,
            alpha_dimless: inputs.alpha,
            samples,
            seed,
            assumes_zero_power: true,
        },
        discriminant_dimless: pair.discriminant,
        branches,
        selected_branch: result.branch_used.to_string(),
        beta_eff_dimless: result.beta_eff,
        phi_t_deg: result.phi_t.map(deg_estimate),
        ambiguous: result.ambiguous,
        rationale,
        monte_carlo: result.monte_carlo.map(|m| MonteCarloRow {
            samples: m.n_samples,
            seed: m.seed,
            failed_fraction: m.failed_fraction,
            branch_flip_fraction: m.branch_flip_fraction,
            beta_eff_mean_dimless: m.beta_eff_mean,
            phi_t_mean_deg: deg(m.phi_t_mean),
        }),
    })
}

pub fn print_section(s: &InversionSection) {
    println!("status: {:?}", s.status);
    println!("discriminant: {:.6}", s.discriminant_dimless);
    println!(
        "{:>7} {:>12} {:>12} {:>12} {:>9}",
        "branch", "beta", "beta_eff", "phi_t_deg", "physical"
    );
    for b in &s.branches {
        let phi = b
            .phi_t_deg
            .map_or("undefined".to_string(), |p| format!("{p:.3}"));
        println!(
            "{:>7} {:>12.6} {:>12.6} {:>12} {:>9}",
            b.branch, b.beta_scaled_dimless, b.beta_eff_dimless, phi, b.physical
        );
    }
    println!("selected: {} branch ({})", s.selected_branch, s.rationale);
    if s.monte_carlo.is_some() {
        println!(
            "beta_eff = {:.4} ± {:.4}",
            s.beta_eff_dimless.value, s.beta_eff_dimless.sigma
        );
    } else {
        println!("beta_eff = {:.4}", s.beta_eff_dimless.value);
    }
    match &s.phi_t_deg {
        Some(p) if s.monte_carlo.is_some() => {
            println!("phi_T = {:.2} ± {:.2} deg", p.value, p.sigma)
        }
        Some(p) => println!("phi_T = {:.2} deg", p.value),
        None => println!("phi_T = undefined"),
    }
    if let Some(mc) = &s.monte_carlo {
        println!(
            "monte carlo: {} samples, seed {}, failed {:.2}%, branch flips {:.2}%",
            mc.samples,
            mc.seed,
            100.0 * mc.failed_fraction,
            100.0 * mc.branch_flip_fraction
        );
    }
    if s.ambiguous {
        println!("warning: branch choice is ambiguous");
    }
}

pub fn run(args: &InvertArgs) -> CliResult<()> {
    let mut report = match &args.report {
        Some(p) => Some(AnalysisReport::load(p)?),
        None => None,
    };
    let inputs = gather(args, report.as_ref())?;
    let section = invert(&inputs, args.samples, args.seed)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&section).map_err(|e| CliError::io(e.to_string()))?
        );
    } else {
        print_section(&section);
    }
    if let Some(out) = &args.out {
        let mut r = report.take().unwrap_or_default();
        r.inversion = Some(section);
        r.save(out)?;
    }
    Ok(())
}
