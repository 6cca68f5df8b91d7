#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use extinction_core::localization::{write_map, CouplingMap};
use extinction_core::units::rad;

pub fn extinction(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extinction"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn config(powers: &str, seed: u64) -> String {
    format!(
        r#"{{"format_version": 1,
 "emitter": {{"lifetime_ns": 4.5, "homogeneous_linewidth_mhz": 144, "alpha_dimless": 0.33, "wavelength_nm": 785}},
 "coupling": {{"beta_eff_dimless": 0.09, "t0_mag_dimless": 0.63, "phi_t_deg": 61}},
 "scan": {{"start_mhz": -1000, "stop_mhz": 1000, "points": 401}},
 {powers}
 "noise": {{"kind": "gaussian-absolute", "magnitude": 0.002, "seed": {seed}}},
 "fluorescence_noise": {{"kind": "gaussian-relative", "magnitude": 0.03, "seed": {}}},
 "eta_dimless": 0.4, "fluorescence_gain_counts": 1000}}"#,
        seed + 1
    )
}

pub const TWELVE_POWERS: &str = r#""powers_saturation_multiple_dimless": [0.1, 0.2, 0.3, 0.5, 0.7, 1, 1.3, 1.6, 2, 2.5, 3, 4],"#;

/// Iso-phase lines at `z = ±100 sqrt(31/60)` nm for 61 deg; `beta_eff`
/// falls from 0.21 at `y = 0` to 0.11 at `|y| = 240` nm.
pub const CONTOUR_Z_61: f64 = 71.879_528_842_826_09;

pub fn analytic_map() -> CouplingMap {
    let axis = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    };
    CouplingMap::from_fn(
        axis(-240.0, 240.0, 8.0),
        axis(-128.0, 128.0, 8.0),
        |y, z| {
            (
                0.21 - 0.1 * (y / 240.0).powi(2),
                rad(30.0 + 60.0 * (z / 100.0).powi(2)),
            )
        },
    )
    .unwrap()
}

pub fn write_analytic_map(path: &Path) {
    let mut buf = Vec::new();
    write_map(&analytic_map(), &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}
