//! Monte-Carlo batching with per-trial random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricSet;

/// Independent random streams for one trial, derived from the master seed
/// and the trial index only. The phase schedule is fixed per geometry by
/// the scenario's own seed, so it has no per-trial stream.
pub struct TrialRngs {
    pub truth: ChaCha20Rng,
    pub noise: ChaCha20Rng,
    pub amplifier: ChaCha20Rng,
}

const TRUTH: u64 = 1;
const NOISE: u64 = 3;
const AMPLIFIER: u64 = 4;

/// Stream `trial` of a generator keyed by `(seed, purpose)`.
pub fn trial_rng(seed: u64, purpose: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(trial);
    rng
}

impl TrialRngs {
    pub fn new(seed: u64, trial: u64) -> Self {
        TrialRngs {
            truth: trial_rng(seed, TRUTH, trial),
            noise: trial_rng(seed, NOISE, trial),
            amplifier: trial_rng(seed, AMPLIFIER, trial),
        }
    }
}

/// Runs `trial` for indices `0..trials` in parallel; results come back in
/// index order and do not depend on scheduling.
pub fn monte_carlo<T, F>(trials: usize, seed: u64, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut TrialRngs) -> Result<T> + Sync,
{
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| trial(t, &mut TrialRngs::new(seed, t as u64)))
        .collect()
}

/// Mean with its standard error `s / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("aggregate values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Aggregate {
            mean,
            std_error: (var / n).sqrt(),
            count: values.len(),
        })
    }
}

/// Per-metric aggregates. PSNR terms average finite trials only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mse: Aggregate,
    pub dr: Aggregate,
    pub psnr_db: Option<Aggregate>,
    pub psnr_per_w: Option<Aggregate>,
    pub p_sum: f64,
}

impl MetricAggregate {
    pub fn of(sets: &[MetricSet]) -> Result<Self> {
        let pick = |f: fn(&MetricSet) -> f64| sets.iter().map(f).collect::<Vec<_>>();
        let finite = |f: fn(&MetricSet) -> f64| {
            let v: Vec<f64> = sets.iter().map(f).filter(|x| x.is_finite()).collect();
            Aggregate::of(&v).ok()
        };
        Ok(MetricAggregate {
            mse: Aggregate::of(&pick(|m| m.mse))?,
            dr: Aggregate::of(&pick(|m| m.dr))?,
            psnr_db: finite(|m| m.psnr_db),
            psnr_per_w: finite(|m| m.psnr_per_w),
            p_sum: sets.iter().map(|m| m.p_sum).sum::<f64>() / sets.len() as f64,
        })
    }

    /// `10 log10` of the mean MSE.
    pub fn mse_db(&self) -> f64 {
        crate::metrics::to_db(self.mse.mean)
    }
}
