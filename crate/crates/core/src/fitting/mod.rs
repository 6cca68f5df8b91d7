//! Least-squares fitting: the solver, Lorentzian and Fano lineshape fits,
//! and zero-power extrapolation of a pump-power series.
//!
//! The default pipeline is two-step: the fluorescence Lorentzian fixes the
//! power-broadened width `2 Gamma2 sqrt(1 + S)`, then the normalized
//! transmission is fitted with the Fano form at that fixed width.
//! [`fit_joint`] fits both traces with a shared width and center instead.

mod extrapolate;
mod lineshapes;
mod lsq;

pub use extrapolate::{
    extrapolate_zero_power, ChannelFit, ExtrapolationMode, IndependentChannels, PowerEntry,
    PowerSeries, ZeroPowerResult, JOINT_P_VALUE_THRESHOLD,
};
pub use lineshapes::{fit_fano, fit_joint, fit_lorentzian, lorentzian, FanoFit, LorentzianFit};
pub use lsq::{least_squares, minimize, Bounds, CovarianceScaling, LsqOptions, LsqResult};
