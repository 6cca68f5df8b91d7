mod common;

use std::path::Path;

use common::*;
use extinction_cli::report::AnalysisReport;
use serde_json::Value;

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

fn simulate(dir: &Path, powers: &str, seed: u64) {
    std::fs::write(dir.join("cfg.json"), config(powers, seed)).unwrap();
    let o = extinction(&["simulate", "--config", "cfg.json", "--out", "data"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn fit(dir: &Path, out: &str) -> std::process::Output {
    extinction(
        &["fit", "--manifest", "data/manifest.json", "--out", out],
        dir,
    )
}

#[test]
fn simulate_minimal_writes_one_spectrum() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), "", 1);
    assert_eq!(csv_files(&t.path().join("data")), ["transmission.csv"]);
    let truth: Value =
        serde_json::from_slice(&std::fs::read(t.path().join("data/truth.json")).unwrap()).unwrap();
    assert!((truth["lw_ratio_dimless"].as_f64().unwrap() - 0.2456).abs() < 1e-3);
}

#[test]
fn simulate_twelve_powers_writes_24_files() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), TWELVE_POWERS, 1);
    let files = csv_files(&t.path().join("data"));
    assert_eq!(files.len(), 24);
    assert_eq!(
        files
            .iter()
            .filter(|f| f.ends_with("_fluorescence.csv"))
            .count(),
        12
    );
    let text = std::fs::read_to_string(t.path().join("data/p00_transmission.csv")).unwrap();
    assert!(text.contains("\ndetuning_mhz,signal,sigma\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn negative_leak_is_a_schema_error() {
    let t = tempfile::tempdir().unwrap();
    let cfg = config("\"leak_dimless\": -0.5,", 1);
    std::fs::write(t.path().join("cfg.json"), cfg).unwrap();
    let o = extinction(
        &["simulate", "--config", "cfg.json", "--out", "data"],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("leak_dimless"), "{}", stderr(&o));
}

#[test]
fn fit_recovers_truth() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), TWELVE_POWERS, 11);
    let o = fit(t.path(), "report.json");
    assert!(o.status.success(), "{}", stderr(&o));
    let r = AnalysisReport::load(&t.path().join("report.json")).unwrap();
    assert_eq!(r.powers.len(), 12);
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    let truth: Value =
        serde_json::from_slice(&std::fs::read(t.path().join("data/truth.json")).unwrap()).unwrap();
    let x = r.extrapolation.unwrap();
    for (est, key) in [
        (x.gamma2_over_pi_mhz, "gamma2_over_pi_mhz"),
        (x.v0_dimless, "v0_dimless"),
        (x.q0_dimless, "q0_dimless"),
    ] {
        let z = est.z_score(truth[key].as_f64().unwrap());
        assert!(z < 3.0, "{key}: {est} vs {} ({z:.2} sigma)", truth[key]);
    }
    assert_eq!(r.inputs.files.len(), 24);
    assert!(r.provenance.generated_unix_s.is_some());
}

#[test]
fn empty_manifest_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    std::fs::create_dir(t.path().join("data")).unwrap();
    std::fs::write(
        t.path().join("data/manifest.json"),
        r#"{"format_version": 1, "entries": []}"#,
    )
    .unwrap();
    let o = fit(t.path(), "report.json");
    assert_eq!(o.status.code(), Some(2));
    assert!(!t.path().join("report.json").exists());
}

#[test]
fn missing_fluorescence_file_skips_that_power() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), TWELVE_POWERS, 3);
    std::fs::remove_file(t.path().join("data/p04_fluorescence.csv")).unwrap();
    let o = fit(t.path(), "report.json");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("p04_fluorescence.csv"));
    let r = AnalysisReport::load(&t.path().join("report.json")).unwrap();
    assert_eq!(r.powers.len(), 11);
    assert_eq!(r.warnings.len(), 1);
    assert!(r.extrapolation.is_some());
}

#[test]
fn invert_device_inputs() {
    let t = tempfile::tempdir().unwrap();
    let o = extinction(
        &[
            "invert",
            "--v0",
            "0.018",
            "--v0-sigma",
            "0.001",
            "--q0",
            "-5.2e-3",
            "--q0-sigma",
            "1e-4",
            "--lw-ratio",
            "0.25",
            "--lw-ratio-sigma",
            "0.0556",
            "--t0",
            "0.63",
            "--t0-sigma",
            "0.06",
            "--alpha",
            "0.33",
            "--json",
        ],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let be = v["beta_eff_dimless"]["value"].as_f64().unwrap();
    let phi = v["phi_t_deg"]["value"].as_f64().unwrap();
    assert!((0.07..=0.11).contains(&be), "{be}");
    assert!((59.0..=63.0).contains(&phi), "{phi}");
    assert_eq!(v["selected_branch"], "minus");
    assert_eq!(v["branches"][1]["physical"], false);
    assert!(v["branches"][1]["beta_eff_dimless"].as_f64().unwrap() > 1.0);
}

#[test]
fn invert_zero_inputs_is_degenerate() {
    let t = tempfile::tempdir().unwrap();
    let o = extinction(
        &[
            "invert",
            "--v0",
            "0",
            "--q0",
            "0",
            "--lw-ratio",
            "0.25",
            "--t0",
            "0.63",
            "--alpha",
            "0.33",
        ],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("status: Degenerate"));
    assert!(stdout(&o).contains("phi_T = undefined"));
}

#[test]
fn invert_negative_discriminant_exits_4() {
    let t = tempfile::tempdir().unwrap();
    let o = extinction(
        &[
            "invert",
            "--v0",
            "0.3",
            "--q0",
            "0",
            "--lw-ratio",
            "0.25",
            "--t0",
            "0.63",
            "--alpha",
            "0.33",
        ],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("inconsistent"), "{}", stderr(&o));
}

#[test]
fn locate_contour_matches_analytic_line() {
    let t = tempfile::tempdir().unwrap();
    write_analytic_map(&t.path().join("map.csv"));
    let o = extinction(
        &[
            "locate",
            "--map",
            "map.csv",
            "--beta-eff",
            "0.09",
            "--phi-deg",
            "61",
            "--contour-out",
            "contour.csv",
        ],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("[25°, 49°]"), "{}", stdout(&o));
    let text = std::fs::read_to_string(t.path().join("contour.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("branch_id,y_nm,z_nm,beta_eff"));
    let mut n = 0;
    for l in lines {
        let f: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        let (y, z, beta) = (f[1], f[2], f[3]);
        assert!((z.abs() - CONTOUR_Z_61).abs() < 0.2, "z = {z}");
        assert!(
            (beta - (0.21 - 0.1 * (y / 240.0).powi(2))).abs() < 1e-3,
            "{l}"
        );
        n += 1;
    }
    assert!(n > 100);
}

#[test]
fn locate_beta_above_map_has_no_solution() {
    let t = tempfile::tempdir().unwrap();
    write_analytic_map(&t.path().join("map.csv"));
    let o = extinction(
        &[
            "locate",
            "--map",
            "map.csv",
            "--beta-eff",
            "0.3",
            "--phi-deg",
            "61",
        ],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("no solution"), "{}", stderr(&o));
}

#[test]
fn plotdata_single_power_writes_two_overlays() {
    let t = tempfile::tempdir().unwrap();
    simulate(
        t.path(),
        r#""powers_saturation_multiple_dimless": [0.5],"#,
        2,
    );
    let o = fit(t.path(), "report.json");
    assert!(o.status.success(), "{}", stderr(&o));
    let o = extinction(
        &["plotdata", "--report", "report.json", "--out", "plots"],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let files = csv_files(&t.path().join("plots"));
    assert_eq!(
        files,
        [
            "p00_fluorescence_overlay.csv",
            "p00_transmission_overlay.csv"
        ]
    );
    let text =
        std::fs::read_to_string(t.path().join("plots/p00_transmission_overlay.csv")).unwrap();
    assert!(text.starts_with("detuning_mhz,signal,sigma,model\n"));
    assert_eq!(text.lines().count(), 402);
}

#[test]
fn plotdata_twelve_powers_writes_curves() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), TWELVE_POWERS, 5);
    assert!(fit(t.path(), "report.json").status.success());
    let o = extinction(
        &["plotdata", "--report", "report.json", "--out", "plots"],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_files(&t.path().join("plots")).len(), 26);
    let pd = std::fs::read_to_string(t.path().join("plots/power_dependence.csv")).unwrap();
    assert_eq!(pd.lines().count(), 13);
    let curves = std::fs::read_to_string(t.path().join("plots/extrapolation_curves.csv")).unwrap();
    let rows: Vec<&str> = curves.lines().collect();
    assert_eq!(
        rows[0],
        "power_w,fwhm_mhz,visibility_dimless,asymmetry_dimless"
    );
    assert_eq!(rows.len(), 101);
    let first: Vec<f64> = rows[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
}

#[test]
fn plotdata_empty_report_is_an_error() {
    let t = tempfile::tempdir().unwrap();
    let mut r = AnalysisReport::default();
    r.save(&t.path().join("empty.json")).unwrap();
    let o = extinction(
        &["plotdata", "--report", "empty.json", "--out", "plots"],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_is_deterministic_and_round_trips() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), TWELVE_POWERS, 9);
    let mut reports = Vec::new();
    for k in 0..2 {
        let fit_out = format!("fit{k}.json");
        let inv_out = format!("inv{k}.json");
        assert!(fit(t.path(), &fit_out).status.success());
        let o = extinction(
            &[
                "invert",
                "--report",
                &fit_out,
                "--lifetime-ns",
                "4.5",
                "--lifetime-sigma-ns",
                "1",
                "--t0",
                "0.63",
                "--t0-sigma",
                "0.06",
                "--alpha",
                "0.33",
                "--samples",
                "5000",
                "--seed",
                "42",
                "--out",
                &inv_out,
            ],
            t.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(AnalysisReport::load(&t.path().join(&inv_out)).unwrap());
    }
    assert!(reports[0].inversion.is_some());
    assert_eq!(reports[0].content_digest(), reports[1].content_digest());
    let mut a = reports[0].clone();
    let mut b = reports[1].clone();
    a.provenance.generated_unix_s = None;
    b.provenance.generated_unix_s = None;
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );

    let text = serde_json::to_string_pretty(&a).unwrap();
    let back: AnalysisReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, a);
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
}

#[test]
fn locate_from_report() {
    let t = tempfile::tempdir().unwrap();
    write_analytic_map(&t.path().join("map.csv"));
    let o = extinction(
        &[
            "invert",
            "--v0",
            "0.018",
            "--q0",
            "-5.2e-3",
            "--lw-ratio",
            "0.25",
            "--t0",
            "0.63",
            "--alpha",
            "0.33",
            "--out",
            "inv.json",
        ],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = extinction(
        &[
            "locate", "--map", "map.csv", "--report", "inv.json", "--out", "loc.json",
        ],
        t.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = AnalysisReport::load(&t.path().join("loc.json")).unwrap();
    let loc = r.localization.unwrap();
    assert!(r.inversion.is_some());
    assert_eq!(loc.map.sha256.len(), 64);
    assert!(loc.dipole_angle_min_deg < loc.dipole_angle_max_deg);
}
