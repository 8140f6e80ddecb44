//! Per-symbol RIS reflection schedules.
//!
//! Phases are drawn i.i.d. uniform on `[0, 2π)` from a ChaCha20 stream seeded
//! with the 64-bit schedule seed, iterating panels, then symbols, then
//! elements. Every ARIS element runs at the same gain `a`.

use std::f64::consts::PI;
use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RisMode {
    Pris,
    Aris,
}

impl RisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RisMode::Pris => "pris",
            RisMode::Aris => "aris",
        }
    }
}

impl fmt::Display for RisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RisMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pris" => Ok(RisMode::Pris),
            "aris" => Ok(RisMode::Aris),
            _ => Err(Error::config("ris.mode", format!("expected pris or aris, got `{s}`"))),
        }
    }
}

/// Reflection coefficients `ω[k, t, m]`, stored per panel as a `K × M_t` array.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub mode: RisMode,
    pub amplification: f64,
    pub seed: u64,
    coefficients: Vec<Array2<Complex64>>,
}

impl PhaseSchedule {
    /// Wraps explicit coefficients; no magnitude checks (see [`validate_schedule`]).
    pub fn from_coefficients(mode: RisMode, amplification: f64, seed: u64, coefficients: Vec<Array2<Complex64>>) -> Result<Self> {
        let k = coefficients.first().map(|c| c.nrows()).unwrap_or(0);
        if coefficients.iter().any(|c| c.nrows() != k) {
            return Err(Error::Dimension("panels disagree on symbol count".into()));
        }
        Ok(PhaseSchedule {
            mode,
            amplification,
            seed,
            coefficients,
        })
    }

    pub fn symbols(&self) -> usize {
        self.coefficients.first().map(|c| c.nrows()).unwrap_or(0)
    }

    pub fn panel_count(&self) -> usize {
        self.coefficients.len()
    }

    /// `K × M_t` coefficients of panel `t`.
    pub fn panel(&self, t: usize) -> &Array2<Complex64> {
        &self.coefficients[t]
    }

    pub fn coefficient(&self, k: usize, t: usize, m: usize) -> Complex64 {
        self.coefficients[t][[k, m]]
    }

    /// Same phases with every magnitude rescaled to `√a`.
    pub fn with_amplification(&self, mode: RisMode, amplification: f64) -> Result<Self> {
        check_mode_gain(mode, amplification)?;
        let scale = (amplification / self.amplification).sqrt();
        Ok(PhaseSchedule {
            mode,
            amplification,
            seed: self.seed,
            coefficients: self.coefficients.iter().map(|c| c.mapv(|w| w * scale)).collect(),
        })
    }

    /// Hex SHA-256 over mode, gain, seed and coefficient bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.mode.as_str().as_bytes());
        h.update(self.amplification.to_le_bytes());
        h.update(self.seed.to_le_bytes());
        for panel in &self.coefficients {
            h.update((panel.nrows() as u64).to_le_bytes());
            h.update((panel.ncols() as u64).to_le_bytes());
            for w in panel.iter() {
                h.update(w.re.to_le_bytes());
                h.update(w.im.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn check_mode_gain(mode: RisMode, amplification: f64) -> Result<()> {
    match mode {
        RisMode::Pris if amplification != 1.0 => Err(Error::ModeGainMismatch(amplification)),
        RisMode::Aris if !(amplification >= 1.0) || !amplification.is_finite() => Err(Error::AmplificationRange {
            gain: amplification,
            max: f64::INFINITY,
        }),
        _ => Ok(()),
    }
}

/// Draws `K` symbols of i.i.d. uniform phases at gain `a` for every panel.
pub fn draw_schedule(symbols: usize, scene: &Scene, mode: RisMode, amplification: f64, seed: u64) -> Result<PhaseSchedule> {
    if symbols == 0 {
        return Err(Error::config("ris.symbols", "must be at least 1"));
    }
    check_mode_gain(mode, amplification)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let amp = amplification.sqrt();
    let coefficients = scene
        .ris
        .iter()
        .map(|panel| {
            Array2::from_shape_simple_fn((symbols, panel.element_count()), || {
                let theta: f64 = rng.random::<f64>() * 2.0 * PI;
                Complex64::from_polar(amp, theta)
            })
        })
        .collect();
    Ok(PhaseSchedule {
        mode,
        amplification,
        seed,
        coefficients,
    })
}

/// Checks `|ω|² = 1` (PRIS) or `1 ≤ |ω|² ≤ α_max` (ARIS) to 1e-9 relative,
/// reporting the first offending `(k, t, m)`.
pub fn validate_schedule(schedule: &PhaseSchedule, max_amplification: f64) -> Result<()> {
    const TOL: f64 = 1e-9;
    for (t, panel) in schedule.coefficients.iter().enumerate() {
        for ((k, m), w) in panel.indexed_iter() {
            let p = w.norm_sqr();
            let ok = match schedule.mode {
                RisMode::Pris => (p - 1.0).abs() <= TOL,
                RisMode::Aris => p >= 1.0 - TOL && p <= max_amplification * (1.0 + TOL),
            };
            if !ok {
                return Err(Error::ScheduleViolation { k, t, m, power: p });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn small_scene() -> Scene {
        let mut cfg = ScenarioConfig::default();
        for p in &mut cfg.ris.panels {
            p.rows = 4;
            p.cols = 4;
        }
        cfg.roi.counts = [3, 3, 1];
        cfg.build_scene().unwrap()
    }

    #[test]
    fn pris_has_unit_magnitudes() {
        let s = draw_schedule(5, &small_scene(), RisMode::Pris, 1.0, 3).unwrap();
        for t in 0..s.panel_count() {
            assert!(s.panel(t).iter().all(|w| (w.norm_sqr() - 1.0).abs() < 1e-12));
        }
        validate_schedule(&s, 1e4).unwrap();
    }

    #[test]
    fn aris_magnitudes_match_gain() {
        let a = 10f64.powf(40.0 / 10.0);
        assert_eq!(a, 1e4);
        let s = draw_schedule(5, &small_scene(), RisMode::Aris, a, 3).unwrap();
        for t in 0..s.panel_count() {
            assert!(s.panel(t).iter().all(|w| (w.norm_sqr() / 1e4 - 1.0).abs() < 1e-12));
        }
        validate_schedule(&s, 1e4).unwrap();
    }

    #[test]
    fn seed_determinism() {
        let scene = small_scene();
        let a = draw_schedule(7, &scene, RisMode::Aris, 100.0, 99).unwrap();
        let b = draw_schedule(7, &scene, RisMode::Aris, 100.0, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = draw_schedule(7, &scene, RisMode::Aris, 100.0, 100).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn pris_gain_mismatch() {
        assert!(matches!(
            draw_schedule(1, &small_scene(), RisMode::Pris, 2.0, 0),
            Err(Error::ModeGainMismatch(_))
        ));
    }

    #[test]
    fn validation_reports_first_violation() {
        let ones = Array2::from_elem((3, 4), Complex64::new(1.0, 0.0));
        let s = PhaseSchedule::from_coefficients(RisMode::Aris, 1.0, 0, vec![ones.clone(), ones.clone()]).unwrap();
        validate_schedule(&s, 1e4).unwrap();

        let mut bad = ones.clone();
        bad[[2, 1]] = Complex64::new(2e4f64.sqrt(), 0.0);
        let s = PhaseSchedule::from_coefficients(RisMode::Aris, 1e4, 0, vec![ones, bad]).unwrap();
        match validate_schedule(&s, 1e4) {
            Err(Error::ScheduleViolation { k, t, m, .. }) => assert_eq!((k, t, m), (2, 1, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phases_are_zero_mean_and_uncorrelated() {
        let mut cfg = ScenarioConfig::default();
        cfg.ris.panels.truncate(1);
        cfg.ris.panels[0].rows = 2;
        cfg.ris.panels[0].cols = 2;
        cfg.roi.counts = [1, 1, 1];
        let scene = cfg.build_scene().unwrap();
        let a = 1e4;
        let n = 100_000;
        let s = draw_schedule(n, &scene, RisMode::Aris, a, 5).unwrap();
        let p = s.panel(0);
        let mean: Complex64 = p.column(0).iter().sum::<Complex64>() / n as f64;
        assert!(mean.norm() <= 3.0 * (a / n as f64).sqrt(), "{mean}");
        let cross: Complex64 = p
            .column(0)
            .iter()
            .zip(p.column(1).iter())
            .map(|(w1, w2)| w1.conj() * w2)
            .sum::<Complex64>()
            / n as f64;
        assert!(cross.norm() <= 3.0 * a / (n as f64).sqrt(), "{cross}");
    }
}
