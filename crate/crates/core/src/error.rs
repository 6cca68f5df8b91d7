use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("normal matrix is rank deficient ({0})")]
    RankDeficient(String),

    #[error("least squares did not converge after {iterations} iterations (cost {cost:e})")]
    NotConverged { iterations: usize, cost: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent measurement: discriminant 1 - q~^2 - V~ = {discriminant:.6} < 0")]
    InconsistentMeasurement { discriminant: f64 },

    #[error("degenerate inversion: V0 = q0 = 0, phase is undefined")]
    Degenerate,

    #[error("no physical branch: beta_eff(-) = {beta_eff_minus}, beta_eff(+) = {beta_eff_plus}")]
    NoPhysicalBranch {
        beta_eff_minus: f64,
        beta_eff_plus: f64,
    },

    #[error("unstable inversion: {failed_fraction:.1}% of Monte-Carlo draws failed", failed_fraction = .failed_fraction * 100.0)]
    UnstableInversion { failed_fraction: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("map format error at line {line}: {message}")]
    MapFormat { line: usize, message: String },

    #[error("spectrum format error at line {line}: {message}")]
    SpectrumFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
