//! Reconstruction-quality and energy-efficiency metrics.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SparseImage;
use crate::io::{fmt_f64, write_csv, Provenance};
use crate::recovery::ComplexEstimate;
use crate::risconfig::RisMode;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("lengths {a} and {b} differ")));
    }
    if a == 0 {
        return Err(Error::Empty("image"));
    }
    Ok(())
}

/// `‖x − x̂‖² / N`.
pub fn mse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    same_len(truth.len(), estimate.len())?;
    Ok(truth.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64)
}

/// `‖x − x̂‖² / N` against complex estimates (imaginary parts count as error).
pub fn mse_complex(truth: &[f64], estimate: &[Complex64]) -> Result<f64> {
    same_len(truth.len(), estimate.len())?;
    Ok(truth
        .iter()
        .zip(estimate)
        .map(|(&a, b)| (Complex64::new(a, 0.0) - b).norm_sqr())
        .sum::<f64>()
        / truth.len() as f64)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `|u ∩ û| / |u|`.
pub fn detection_rate(truth: &[usize], estimate: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("true support"));
    }
    let t: HashSet<usize> = truth.iter().copied().collect();
    let hits = estimate.iter().copied().collect::<HashSet<_>>().intersection(&t).count();
    Ok(hits as f64 / t.len() as f64)
}

/// `10 log10(MAX² / MSE)`; `+∞` when the MSE is zero.
pub fn psnr(mse: f64, max: f64) -> Result<f64> {
    if !(max > 0.0) {
        return Err(Error::config("MAX", "must be positive"));
    }
    if !(mse >= 0.0) {
        return Err(Error::config("MSE", "must be non-negative"));
    }
    Ok(if mse == 0.0 { f64::INFINITY } else { to_db(max * max / mse) })
}

/// PSNR in dB over total power in Watts; `+∞` flags a perfect estimate.
pub fn psnr_per_watt(mse: f64, max: f64, p_sum: f64) -> Result<f64> {
    if !(p_sum > 0.0) {
        return Err(Error::config("P_sum", "must be positive"));
    }
    Ok(psnr(mse, max)? / p_sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mse_db: f64,
    pub dr: f64,
    pub psnr_db: f64,
    pub psnr_per_w: f64,
    pub p_sum: f64,
    pub max: f64,
}

impl MetricSet {
    /// Metrics for one reconstruction; the image is the real part of the
    /// estimate and MAX comes from this ground truth.
    pub fn evaluate(truth: &SparseImage, estimate: &ComplexEstimate, p_sum: f64) -> Result<Self> {
        let mse = mse(&truth.dense(), &estimate.dense_real())?;
        let max = truth.max_abs();
        Ok(MetricSet {
            mse,
            mse_db: to_db(mse),
            dr: detection_rate(truth.support(), &estimate.support)?,
            psnr_db: psnr(mse, max)?,
            psnr_per_w: psnr_per_watt(mse, max, p_sum)?,
            p_sum,
            max,
        })
    }

    pub fn has_finite_psnr(&self) -> bool {
        self.psnr_db.is_finite()
    }
}

/// One CSV row of per-trial metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub trial: usize,
    pub height_m: f64,
    pub mode: RisMode,
    pub metrics: MetricSet,
}

pub const METRIC_COLUMNS: [&str; 9] = [
    "trial", "height_m", "mode", "P_sum_W", "mse", "mse_db", "dr", "psnr_db", "psnr_per_w",
];

impl MetricRow {
    pub fn csv_row(&self) -> Vec<String> {
        let m = &self.metrics;
        vec![
            self.trial.to_string(),
            fmt_f64(self.height_m),
            self.mode.to_string(),
            fmt_f64(m.p_sum),
            fmt_f64(m.mse),
            fmt_f64(m.mse_db),
            fmt_f64(m.dr),
            fmt_f64(m.psnr_db),
            fmt_f64(m.psnr_per_w),
        ]
    }
}

pub fn write_metrics_csv(rows: &[MetricRow], path: &Path, provenance: &Provenance) -> Result<PathBuf> {
    write_csv(path, provenance, &METRIC_COLUMNS, rows.iter().map(MetricRow::csv_row))
}
