//! System power accounting for passive and active RIS configurations.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::fs_unchecked;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv, Provenance};
use crate::risconfig::{PhaseSchedule, RisMode};
use crate::scene::Scene;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-element circuit powers and the amplifier thermal noise, in Watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConstants {
    pub pc_w: f64,
    pub pdc_w: f64,
    pub sigma2_ris_w: f64,
}

impl Default for PowerConstants {
    fn default() -> Self {
        PowerConstants {
            pc_w: dbm_to_watts(-10.0),
            pdc_w: dbm_to_watts(-5.0),
            sigma2_ris_w: dbm_to_watts(-110.0),
        }
    }
}

/// Unit-norm transmit precoder `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitVector(Vec<Complex64>);

impl TransmitVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        let norm = entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::TransmitNorm(norm));
        }
        Ok(TransmitVector(entries))
    }

    /// Equal power on every antenna: `s = 1/√N · [1, …, 1]`.
    pub fn equal(antennas: usize) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::TransmitNorm(0.0));
        }
        let v = 1.0 / (antennas as f64).sqrt();
        Ok(TransmitVector(vec![Complex64::new(v, 0.0); antennas]))
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }
}

/// Per-panel active output power `P_M_t`, averaged over the schedule's
/// symbols: amplified incident signal plus amplified thermal noise.
pub fn aris_active_power(
    scene: &Scene,
    schedule: &PhaseSchedule,
    s: &TransmitVector,
    tx_power: f64,
    sigma2_ris: f64,
) -> Result<Vec<f64>> {
    if s.entries().len() != scene.tx.len() {
        return Err(Error::Dimension(format!(
            "transmit vector has {} entries for {} antennas",
            s.entries().len(),
            scene.tx.len()
        )));
    }
    if schedule.panel_count() != scene.panel_count() {
        return Err(Error::Dimension("schedule and scene panel counts differ".into()));
    }
    let lambda = scene.wavelength();
    let g2 = scene.g().powi(2);
    let tx = scene.tx.positions();
    Ok((0..scene.panel_count())
        .map(|t| {
            let incident: Vec<f64> = scene
                .ris_elements(t)
                .iter()
                .map(|&e| {
                    tx.iter()
                        .zip(s.entries())
                        .map(|(&p, &si)| si * fs_unchecked(p.distance(e), lambda))
                        .sum::<Complex64>()
                        .norm_sqr()
                        * g2
                        * tx_power
                })
                .collect();
            let panel = schedule.panel(t);
            let total: f64 = panel
                .rows()
                .into_iter()
                .map(|row| {
                    row.iter()
                        .zip(&incident)
                        .map(|(w, &p)| w.norm_sqr() * (p + sigma2_ris))
                        .sum::<f64>()
                })
                .sum();
            total / panel.nrows() as f64
        })
        .collect())
}

/// Breakdown of the total consumed power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub mode: RisMode,
    pub tx_power: f64,
    /// Empty for PRIS.
    pub panel_active: Vec<f64>,
    pub circuit_pc: f64,
    pub circuit_pdc: f64,
    pub total: f64,
}

impl PowerReport {
    pub fn active_total(&self) -> f64 {
        self.panel_active.iter().sum()
    }

    pub fn circuit_total(&self) -> f64 {
        self.circuit_pc + self.circuit_pdc
    }

    pub const CSV_COLUMNS: [&'static str; 5] = ["mode", "P_TX_W", "P_M_total_W", "circuit_W", "total_W"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.mode.to_string(),
            fmt_f64(self.tx_power),
            fmt_f64(self.active_total()),
            fmt_f64(self.circuit_total()),
            fmt_f64(self.total),
        ]
    }

    pub fn write_csv(reports: &[PowerReport], path: &Path, provenance: &Provenance) -> Result<PathBuf> {
        write_csv(path, provenance, &Self::CSV_COLUMNS, reports.iter().map(|r| r.csv_row()))
    }
}

/// `P_PRIS = P_TX + Σ M_t P_c` or `P_ARIS = P_TX + Σ [P_M_t + M_t (P_c + P_DC)]`.
///
/// The mode is taken from the schedule; ARIS uses the equal-power precoder.
pub fn total_power(scene: &Scene, schedule: &PhaseSchedule, tx_power: f64, constants: &PowerConstants) -> Result<PowerReport> {
    if !(tx_power >= 0.0) || !(constants.pc_w >= 0.0) || !(constants.pdc_w >= 0.0) || !(constants.sigma2_ris_w >= 0.0) {
        return Err(Error::config("power", "powers must be non-negative"));
    }
    let m = scene.total_ris_elements() as f64;
    let circuit_pc = m * constants.pc_w;
    let report = match schedule.mode {
        RisMode::Pris => PowerReport {
            mode: RisMode::Pris,
            tx_power,
            panel_active: Vec::new(),
            circuit_pc,
            circuit_pdc: 0.0,
            total: tx_power + circuit_pc,
        },
        RisMode::Aris => {
            let s = TransmitVector::equal(scene.tx.len())?;
            let panel_active = aris_active_power(scene, schedule, &s, tx_power, constants.sigma2_ris_w)?;
            let circuit_pdc = m * constants.pdc_w;
            let total = tx_power + panel_active.iter().sum::<f64>() + circuit_pc + circuit_pdc;
            PowerReport {
                mode: RisMode::Aris,
                tx_power,
                panel_active,
                circuit_pc,
                circuit_pdc,
                total,
            }
        }
    };
    Ok(report)
}

/// The passive transmit power giving the same total as an active system
/// at `aris_tx_power`: `P_TX,PRIS = P_ARIS − Σ M_t P_c`.
pub fn match_pris_tx_power(scene: &Scene, schedule: &PhaseSchedule, aris_tx_power: f64, constants: &PowerConstants) -> Result<f64> {
    if schedule.mode != RisMode::Aris {
        return Err(Error::Mode { expected: "ARIS" });
    }
    let aris = total_power(scene, schedule, aris_tx_power, constants)?;
    let p = aris.total - aris.circuit_pc;
    if !(p > 0.0) {
        return Err(Error::InfeasibleMatching(p));
    }
    Ok(p)
}
