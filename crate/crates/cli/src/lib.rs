//! Command-line front end: simulate, fit, invert, locate and plotdata.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use extinction_core::Error;
use sha2::{Digest, Sha256};

pub mod commands;
pub mod config;
pub mod report;

pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_INVERSION: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn fit(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FIT,
            message: message.into(),
        }
    }

    /// Prefixes the message, keeping the exit code.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter { .. }
        | Error::InvalidSpectrum(_)
        | Error::SpectrumFormat { .. }
        | Error::MapFormat { .. } => EXIT_USAGE,
        Error::FitRejected(_)
        | Error::RankDeficient(_)
        | Error::NotConverged { .. }
        | Error::InsufficientData(_) => EXIT_FIT,
        Error::InconsistentMeasurement { .. }
        | Error::Degenerate
        | Error::NoPhysicalBranch { .. }
        | Error::UnstableInversion { .. }
        | Error::NoSolution(_) => EXIT_INVERSION,
        Error::Io(_) => EXIT_IO,
        Error::Csv(e) if e.is_io_error() => EXIT_IO,
        Error::Csv(_) => EXIT_USAGE,
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::io(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

#[derive(Debug, Parser)]
#[command(
    name = "extinction",
    version,
    about = "Extinction spectroscopy of a single emitter coupled to a photonic structure"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic fluorescence and transmission scans from a JSON config.
    Simulate(SimulateArgs),
    /// Fit every power in a manifest and extrapolate to zero power.
    Fit(FitArgs),
    /// Recover beta_eff and phi_T from the zero-power Fano parameters.
    Invert(InvertArgs),
    /// Locate the emitter on a simulated coupling map.
    Locate(LocateArgs),
    /// Write plot-ready CSV tables from a report.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Manifest JSON listing fluorescence and transmission files per power.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit fluorescence and transmission with a shared width and center.
    #[arg(long)]
    pub joint: bool,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Take V0, q0 and Gamma2 from a fit report instead of the flags.
    #[arg(long, conflicts_with_all = ["v0", "q0", "lw_ratio"])]
    pub report: Option<PathBuf>,
    /// Lifetime 1/Gamma1, used with --report to form Gamma1/(2 Gamma2).
    #[arg(long, requires = "report")]
    pub lifetime_ns: Option<f64>,
    #[arg(long, default_value_t = 0.0, requires = "lifetime_ns")]
    pub lifetime_sigma_ns: f64,
    /// Zero-power visibility V0.
    #[arg(long, allow_hyphen_values = true, required_unless_present = "report")]
    pub v0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub v0_sigma: f64,
    /// Zero-power asymmetry q0.
    #[arg(long, allow_hyphen_values = true, required_unless_present = "report")]
    pub q0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub q0_sigma: f64,
    /// Gamma1/(2 Gamma2), in (0, 1].
    #[arg(long, required_unless_present = "report")]
    pub lw_ratio: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lw_ratio_sigma: f64,
    /// Off-resonant transmission amplitude |t0|.
    #[arg(long)]
    pub t0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub t0_sigma: f64,
    /// Zero-phonon branching ratio.
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha_sigma: f64,
    /// Monte-Carlo samples for the uncertainty.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report (the input report updated, or a new one).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the inversion section as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    /// Coupling map CSV `y_nm,z_nm,beta_eff,phi_t_deg`.
    #[arg(long)]
    pub map: PathBuf,
    /// Report holding an inversion result.
    #[arg(long, conflicts_with_all = ["beta_eff", "phi_deg"])]
    pub report: Option<PathBuf>,
    #[arg(long, required_unless_present = "report", requires = "phi_deg")]
    pub beta_eff: Option<f64>,
    #[arg(
        long,
        allow_hyphen_values = true,
        required_unless_present = "report",
        requires = "beta_eff"
    )]
    pub phi_deg: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub tolerance_deg: f64,
    #[arg(long)]
    pub contour_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command. Help and
/// version requests come back as an error with exit code 0.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError {
        code: if e.use_stderr() { EXIT_USAGE } else { 0 },
        message: e.render().to_string(),
    })?;
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(&a),
        Command::Fit(a) => commands::fit::run(&a),
        Command::Invert(a) => commands::invert::run(&a),
        Command::Locate(a) => commands::locate::run(&a),
        Command::Plotdata(a) => commands::plotdata::run(&a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Degenerate), EXIT_INVERSION);
        assert_eq!(exit_code(&Error::FitRejected("x".into())), EXIT_FIT);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
        assert_eq!(
            exit_code(&Error::MapFormat {
                line: 1,
                message: "x".into()
            }),
            EXIT_USAGE
        );
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        let e = run(["extinction", "invert", "--v0", "0.1"]).unwrap_err();
        assert_eq!(e.code, EXIT_USAGE);
        let e = run(["extinction", "--help"]).unwrap_err();
        assert_eq!(e.code, 0);
    }
}
