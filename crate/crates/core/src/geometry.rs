//! Closed-form delay and loss formulas for wall and corner returns.
//!
//! These are approximations used for cross-checks and classification; the
//! exact ray geometry lives in [`crate::trace`].

use std::f64::consts::PI;

use crate::{Error, Result, SPEED_OF_LIGHT};

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

/// Specular wall-return delay parameterized by the rotation angle, with the
/// wall normal at `phi = 90°`: `2 [a - r (1 - cos φ)] / c`.
pub fn wall_specular_delay(a: f64, r: f64, phi_deg: f64) -> Result<f64> {
    finite("a", a)?;
    finite("r", r)?;
    finite("phi", phi_deg)?;
    if !(r >= 0.0 && a > r) {
        return Err(Error::invalid("wall_specular_delay needs a > r >= 0"));
    }
    let cos = phi_deg.to_radians().cos();
    Ok(2.0 * (a - r * (1.0 - cos)) / SPEED_OF_LIGHT)
}

/// Exact specular delay when the boresight is `offset_deg` away from the wall
/// normal: the mirror path always leaves the phase center along the normal,
/// so only the phase-center projection changes, `2 (a - r cos Δ) / c`.
pub fn wall_specular_delay_exact(a: f64, r: f64, offset_deg: f64) -> Result<f64> {
    finite("a", a)?;
    finite("r", r)?;
    finite("offset", offset_deg)?;
    if !(r >= 0.0 && a > r) {
        return Err(Error::invalid("wall_specular_delay_exact needs a > r >= 0"));
    }
    Ok(2.0 * (a - r * offset_deg.to_radians().cos()) / SPEED_OF_LIGHT)
}

/// Diffuse backscatter delay from the wall point seen at `theta_deg` off the
/// wall normal: `2 (a / cos θ - r) / c`.
pub fn wall_diffuse_delay(a: f64, r: f64, theta_deg: f64) -> Result<f64> {
    finite("a", a)?;
    finite("r", r)?;
    finite("theta", theta_deg)?;
    if !(r >= 0.0 && a > r) {
        return Err(Error::invalid("wall_diffuse_delay needs a > r >= 0"));
    }
    if theta_deg.abs() >= 90.0 {
        return Err(Error::invalid("wall_diffuse_delay: |theta| must be < 90 deg"));
    }
    Ok(2.0 * (a / theta_deg.to_radians().cos() - r) / SPEED_OF_LIGHT)
}

/// Double-bounce corner delay, neglecting the small in-corner detour:
/// `2 (a / sin φ_spec - r cos φ) / c`.
pub fn corner_specular_delay(a: f64, r: f64, phi_deg: f64, phi_spec_deg: f64) -> Result<f64> {
    finite("a", a)?;
    finite("r", r)?;
    finite("phi", phi_deg)?;
    finite("phi_spec", phi_spec_deg)?;
    if !(a > 0.0) {
        return Err(Error::invalid("corner_specular_delay needs a > 0"));
    }
    if !(phi_spec_deg > 0.0 && phi_spec_deg < 90.0) {
        return Err(Error::invalid("corner_specular_delay needs 0 < phi_spec < 90 deg"));
    }
    let s = phi_spec_deg.to_radians().sin();
    Ok(2.0 * (a / s - r * phi_deg.to_radians().cos()) / SPEED_OF_LIGHT)
}

/// Free-space path loss over a total path length `d`.
pub fn fspl_db(f_c_hz: f64, d_m: f64) -> Result<f64> {
    finite("f_c", f_c_hz)?;
    finite("d", d_m)?;
    if !(f_c_hz > 0.0) {
        return Err(Error::invalid("fspl_db needs f_c > 0"));
    }
    if !(d_m > 0.0) {
        return Err(Error::invalid("fspl_db needs d > 0"));
    }
    Ok(20.0 * (4.0 * PI * f_c_hz * d_m / SPEED_OF_LIGHT).log10())
}

/// Fraunhofer distance `2 D² / λ`.
pub fn far_field_distance(aperture_m: f64, wavelength_m: f64) -> Result<f64> {
    finite("aperture", aperture_m)?;
    finite("wavelength", wavelength_m)?;
    if !(aperture_m > 0.0 && wavelength_m > 0.0) {
        return Err(Error::invalid("far_field_distance needs D > 0 and wavelength > 0"));
    }
    Ok(2.0 * aperture_m * aperture_m / wavelength_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NS: f64 = 1e-9;

    // Independent evaluation of the closed forms, c = 299 792 458 m/s.
    fn oracle_round_trip_ns(d_m: f64) -> f64 {
        d_m / 0.299_792_458
    }

    #[test]
    fn specular_examples() {
        let d = wall_specular_delay(1.2, 0.2, 90.0).unwrap() / NS;
        assert!((d - 6.67).abs() < 0.005, "{d}");
        let d = wall_specular_delay(1.2, 0.2, 0.0).unwrap() / NS;
        assert!((d - 2.4 / 0.299_792_458).abs() < 1e-9);
        assert!((d - 8.00).abs() < 0.01);
        // 2 (1.2 - 0.2 * 0.5) = 2.2 m
        let d = wall_specular_delay(1.2, 0.2, 60.0).unwrap() / NS;
        assert!((d - oracle_round_trip_ns(2.2)).abs() < 1e-9);
        assert!((d - 7.338).abs() < 5e-4);
    }

    #[test]
    fn diffuse_examples() {
        let d0 = wall_diffuse_delay(1.2, 0.2, 0.0).unwrap() / NS;
        assert!((d0 - oracle_round_trip_ns(2.0)).abs() < 1e-9);
        // 1.2 / cos 50° = 1.866849...; 2 (1.866849 - 0.2) = 3.333698 m
        let d50 = wall_diffuse_delay(1.2, 0.2, 50.0).unwrap() / NS;
        assert!((d50 - 11.1201).abs() < 1e-3, "{d50}");
        // 1.2 / cos 60° = 2.4; 2 (2.4 - 0.2) = 4.4 m
        let d60 = wall_diffuse_delay(1.2, 0.2, 60.0).unwrap() / NS;
        assert!((d60 - oracle_round_trip_ns(4.4)).abs() < 1e-9);
        assert!((d60 - 14.677).abs() < 1e-3);
        assert!(wall_diffuse_delay(1.2, 0.2, 90.0).is_err());
        assert!(wall_diffuse_delay(1.2, 0.2, -90.0).is_err());
    }

    #[test]
    fn corner_examples() {
        let s45 = std::f64::consts::FRAC_1_SQRT_2;
        let d = corner_specular_delay(1.2, 0.2, 0.0, 45.0).unwrap() / NS;
        assert!((d - oracle_round_trip_ns(2.0 * (1.2 / s45 - 0.2))).abs() < 1e-9);
        assert!((d - 9.987).abs() < 1e-3);
        let d = corner_specular_delay(1.2, 0.2, 38.0, 45.0).unwrap() / NS;
        assert!((d - 10.270).abs() < 1e-3, "{d}");
        let d = corner_specular_delay(1.7, 0.2, 38.0, 45.0).unwrap() / NS;
        assert!((d - 14.987).abs() < 1e-3, "{d}");
        assert!(corner_specular_delay(1.2, 0.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn fspl_examples() {
        let l1 = fspl_db(300e9, 1.0).unwrap();
        // 4π·300e9 / c = 12575.0...; 20 log10 = 81.990
        assert!((l1 - 81.990).abs() < 1e-3, "{l1}");
        let l2 = fspl_db(300e9, 2.0).unwrap();
        assert!((l2 - l1 - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!((l2 - 88.0).abs() < 0.02);
        let d0 = SPEED_OF_LIGHT / (4.0 * PI * 300e9);
        assert!(fspl_db(300e9, d0).unwrap().abs() < 1e-12);
        assert!(fspl_db(300e9, 0.0).is_err());
        assert!(fspl_db(300e9, -1.0).is_err());
    }

    #[test]
    fn far_field_examples() {
        let d = far_field_distance(12.2e-3, 1e-3).unwrap();
        assert!((d - 0.29768).abs() < 1e-12);
        assert!((0.29..=0.30).contains(&d));
        assert!((far_field_distance(1e-3, 1e-3).unwrap() - 2e-3).abs() < 1e-18);
        assert!((far_field_distance(24.4e-3, 1e-3).unwrap() - 1.19072).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(wall_specular_delay(f64::NAN, 0.2, 0.0).is_err());
        assert!(wall_specular_delay(1.2, 0.2, f64::INFINITY).is_err());
        assert!(fspl_db(f64::NAN, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn specular_minimum_at_normal(a in 0.3f64..20.0, rf in 0.0f64..0.99, phi in 0.0f64..90.0, off in -180.0f64..180.0) {
            // The literal form is monotone on [0°, 90°] only; over the full
            // circle the exact geometry has its minimum at the normal.
            let r = rf * a;
            let min = wall_specular_delay(a, r, 90.0).unwrap();
            prop_assert!((min - 2.0 * (a - r) / SPEED_OF_LIGHT).abs() < 1e-20);
            prop_assert!(wall_specular_delay(a, r, phi).unwrap() >= min - 1e-20);
            let exact_min = wall_specular_delay_exact(a, r, 0.0).unwrap();
            prop_assert!((exact_min - min).abs() < 1e-20);
            prop_assert!(wall_specular_delay_exact(a, r, off).unwrap() >= exact_min - 1e-20);
        }

        #[test]
        fn diffuse_strictly_increasing(a in 0.3f64..20.0, rf in 0.0f64..0.99, t1 in 0.0f64..89.0, dt in 0.01f64..0.9) {
            let r = rf * a;
            let t2 = t1 + dt;
            let d0 = wall_diffuse_delay(a, r, 0.0).unwrap();
            let d1 = wall_diffuse_delay(a, r, t1).unwrap();
            let d2 = wall_diffuse_delay(a, r, -t2).unwrap();
            prop_assert!(d1 >= d0);
            prop_assert!(d2 > d1);
        }

        #[test]
        fn fspl_distance_identity(f in 1e9f64..1e12, d1 in 0.01f64..100.0, d2 in 0.01f64..100.0) {
            let lhs = fspl_db(f, d1).unwrap() + 20.0 * (d2 / d1).log10();
            prop_assert!((lhs - fspl_db(f, d2).unwrap()).abs() < 1e-9);
        }
    }
}
