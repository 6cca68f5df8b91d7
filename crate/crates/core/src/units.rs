//! Physical constants and the MHz <-> rad/s boundary conversions.
//!
//! Everything inside the crate works in angular frequency (rad/s). Files and
//! human-facing reports use linear frequency in MHz, `f = omega / 2 pi`.

use std::f64::consts::PI;

/// Reduced Planck constant, CODATA 2018 (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Linear frequency in MHz to angular frequency in rad/s.
pub fn mhz_to_rad_s(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6
}

/// Angular frequency in rad/s to linear frequency in MHz.
pub fn rad_s_to_mhz(rad_s: f64) -> f64 {
    rad_s / (2.0 * PI * 1e6)
}

/// Vacuum wavelength in nm to angular frequency in rad/s.
pub fn wavelength_nm_to_omega(nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (nm * 1e-9)
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mhz_round_trip() {
        let w = mhz_to_rad_s(144.0);
        assert!((rad_s_to_mhz(w) - 144.0).abs() < 1e-12);
        assert!((w - 2.0 * PI * 144e6).abs() < 1e-3);
    }

    #[test]
    fn wrap_into_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }
}
