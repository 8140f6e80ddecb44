//! Free-space propagation primitives.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene::Vec3;

/// `1 / √(4π)`.
pub(crate) const INV_SQRT_4PI: f64 = 0.282_094_791_773_878_14;

/// Free-space response `e^{-j2πd/λ} / (√(4π) d)` without argument checks.
#[inline]
pub(crate) fn fs_unchecked(d: f64, wavelength: f64) -> Complex64 {
    // Reduce the cycle count before scaling so the phase keeps full precision
    // at distances of many thousands of wavelengths.
    let cycles = d / wavelength;
    let frac = cycles - cycles.floor();
    let (s, c) = (-2.0 * PI * frac).sin_cos();
    Complex64::new(c, s) * (INV_SQRT_4PI / d)
}

/// Complex free-space gain over distance `d` at wavelength `λ`.
pub fn fs_response(d: f64, wavelength: f64) -> Result<Complex64> {
    if !(wavelength > 0.0) {
        return Err(Error::Wavelength(wavelength));
    }
    if !(d > 0.0) {
        return Err(Error::CoincidentPoints { index: 0, distance: d });
    }
    Ok(fs_unchecked(d, wavelength))
}

/// Element-wise [`fs_response`] from `origin` to every target.
pub fn link_vector(origin: Vec3, targets: &[Vec3], wavelength: f64) -> Result<Vec<Complex64>> {
    if !(wavelength > 0.0) {
        return Err(Error::Wavelength(wavelength));
    }
    targets
        .iter()
        .enumerate()
        .map(|(index, &t)| {
            let d = origin.distance(t);
            if d > 0.0 {
                Ok(fs_unchecked(d, wavelength))
            } else {
                Err(Error::CoincidentPoints { index, distance: d })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LAMBDA: f64 = 299_792_458.0 / 4.9e9;

    fn wrapped_phase(z: Complex64) -> f64 {
        z.arg().rem_euclid(2.0 * PI)
    }

    #[test]
    fn one_wavelength_has_zero_phase() {
        let h = fs_response(LAMBDA, LAMBDA).unwrap();
        assert_relative_eq!(h.norm(), INV_SQRT_4PI / LAMBDA, max_relative = 1e-14);
        assert!(h.im.abs() < 1e-12 * h.norm());
        assert!(h.re > 0.0);
    }

    #[test]
    fn magnitude_at_100m() {
        let h = fs_response(100.0, LAMBDA).unwrap();
        assert_relative_eq!(h.norm(), 2.82095e-3, max_relative = 1e-5);
    }

    #[test]
    fn phase_at_95m_matches_extended_precision() {
        // 95 / λ evaluated with exact rational arithmetic on the integer
        // operands: 95 * 4.9e9 / 299792458 = 465.5e9 / 299792458.
        let num: u128 = 465_500_000_000;
        let den: u128 = 299_792_458;
        let whole = num / den;
        let rem = num - whole * den;
        let frac = rem as f64 / den as f64;
        let expected = (-2.0 * PI * frac).rem_euclid(2.0 * PI);
        let h = fs_response(95.0, LAMBDA).unwrap();
        let got = wrapped_phase(h);
        let diff = (got - expected).abs().min(2.0 * PI - (got - expected).abs());
        assert!(diff < 1e-9, "phase {got} vs {expected}");
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(fs_response(0.0, LAMBDA), Err(Error::CoincidentPoints { .. })));
        assert!(matches!(fs_response(-1.0, LAMBDA), Err(Error::CoincidentPoints { .. })));
        assert!(matches!(fs_response(1.0, 0.0), Err(Error::Wavelength(_))));
        let o = Vec3::new(1.0, 1.0, 1.0);
        match link_vector(o, &[Vec3::ZERO, o], LAMBDA) {
            Err(Error::CoincidentPoints { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tx_to_default_panels() {
        let tx = Vec3::new(0.0, -60.0, 30.0);
        let panels = [
            Vec3::new(-30.0, -30.0, 25.0),
            Vec3::new(30.0, -30.0, 25.0),
            Vec3::new(-30.0, 30.0, 25.0),
            Vec3::new(30.0, 30.0, 25.0),
        ];
        let v = link_vector(tx, &panels, LAMBDA).unwrap();
        let d = [1825f64.sqrt(), 1825f64.sqrt(), 95.0, 95.0];
        for (h, d) in v.iter().zip(d) {
            assert_relative_eq!(h.norm(), 1.0 / ((4.0 * PI).sqrt() * d), max_relative = 1e-12);
        }
        assert_relative_eq!(d[0], 42.720, max_relative = 1e-4);
        assert_eq!(v[0], v[1]);
        assert_eq!(v[2], v[3]);
        assert_eq!(link_vector(tx, &panels[..1], LAMBDA).unwrap()[0], fs_response(d[0], LAMBDA).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn magnitude_law(d in 1e-3f64..1e4) {
            let h = fs_response(d, LAMBDA).unwrap();
            proptest::prop_assert!((h.norm() * d * (4.0 * PI).sqrt() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn phase_additivity(d1 in 1.0f64..500.0, d2 in 1.0f64..500.0) {
            let p = fs_response(d1, LAMBDA).unwrap() * fs_response(d2, LAMBDA).unwrap();
            let expected = (-2.0 * PI * ((d1 + d2) / LAMBDA).fract()).rem_euclid(2.0 * PI);
            let got = wrapped_phase(p);
            let diff = (got - expected).abs();
            proptest::prop_assert!(diff.min(2.0 * PI - diff) < 1e-9);
        }
    }
}
