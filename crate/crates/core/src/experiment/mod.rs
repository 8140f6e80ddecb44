//! Named reproduction studies, Monte-Carlo batching and CSV/plot emission.
//!
//! Every study writes into `<out_dir>/<name>/`: one or more CSVs (the
//! interface of record), SVG plots when enabled, and `summary.json` with the
//! headline numbers. Files carry the experiment name, seed, trial count and
//! resolved configuration, and nothing machine-specific, so reruns with the
//! same spec are byte-identical.

mod engine;
mod montecarlo;
pub mod plot;
mod studies;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use engine::{error_to_bound_ratio, HeightEngine, Setting, Solver, TrialBank, TrialOutcome};
pub use montecarlo::{monte_carlo, trial_rng, Aggregate, MetricAggregate, TrialRngs};
pub use studies::{
    aggregate_rows, d_sweep_values, mse_sweep_positions, AggregateRow, TrialRow, AGGREGATE_COLUMNS, TRIAL_COLUMNS,
};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::io::Provenance;
use crate::risconfig::RisMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    ApproxVsExactCrlb,
    CrlbMap,
    RxSweep,
    TxSweep,
    DSweep,
    NoiseCompare,
    ArisVsPris,
    PsnrPerWatt,
    HeightLimit,
    RxMseSweep,
    TxMseSweep,
    DMseSweep,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 12] = [
        ExperimentName::ApproxVsExactCrlb,
        ExperimentName::CrlbMap,
        ExperimentName::RxSweep,
        ExperimentName::TxSweep,
        ExperimentName::DSweep,
        ExperimentName::NoiseCompare,
        ExperimentName::ArisVsPris,
        ExperimentName::PsnrPerWatt,
        ExperimentName::HeightLimit,
        ExperimentName::RxMseSweep,
        ExperimentName::TxMseSweep,
        ExperimentName::DMseSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::ApproxVsExactCrlb => "approx-vs-exact-crlb",
            ExperimentName::CrlbMap => "crlb-map",
            ExperimentName::RxSweep => "rx-sweep",
            ExperimentName::TxSweep => "tx-sweep",
            ExperimentName::DSweep => "d-sweep",
            ExperimentName::NoiseCompare => "noise-compare",
            ExperimentName::ArisVsPris => "aris-vs-pris",
            ExperimentName::PsnrPerWatt => "psnr-per-watt",
            ExperimentName::HeightLimit => "height-limit",
            ExperimentName::RxMseSweep => "rx-mse-sweep",
            ExperimentName::TxMseSweep => "tx-mse-sweep",
            ExperimentName::DMseSweep => "d-mse-sweep",
        }
    }

    /// Whether the study averages over Monte-Carlo trials.
    pub fn is_monte_carlo(self) -> bool {
        !matches!(
            self,
            ExperimentName::ApproxVsExactCrlb
                | ExperimentName::CrlbMap
                | ExperimentName::RxSweep
                | ExperimentName::TxSweep
                | ExperimentName::DSweep
        )
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Everything a study run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub config: ScenarioConfig,
    pub modes: Vec<RisMode>,
    /// ROI heights `ħ` in metres.
    pub heights: Vec<f64>,
    /// ARIS transmit powers in dBm; PRIS is matched to each.
    pub power_levels_dbm: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Sweep coordinate values (RX/TX y offsets, or `d`) for 1-D sweeps.
    pub sweep_values: Vec<f64>,
    /// Half-width and step of the 2-D placement grid.
    pub grid_half: f64,
    pub grid_step: f64,
    pub out_dir: PathBuf,
    pub plots: bool,
}

fn stepped(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|k| from + k as f64 * step).collect()
}

impl ExperimentSpec {
    /// Study defaults on the given scenario.
    pub fn new(name: ExperimentName, config: ScenarioConfig) -> Self {
        use ExperimentName::*;
        let base_height = config.roi.center.z;
        let heights = match name {
            DSweep => vec![100.0, 200.0, 300.0],
            NoiseCompare | ArisVsPris | PsnrPerWatt | HeightLimit => stepped(50.0, 400.0, 50.0),
            _ => vec![base_height],
        };
        let power_levels_dbm = match name {
            ArisVsPris | PsnrPerWatt => vec![24.0, 26.0, 28.0, 30.0],
            _ => vec![config.noise.tx_power_dbm],
        };
        let modes = match name {
            CrlbMap => vec![RisMode::Pris, RisMode::Aris],
            ArisVsPris | PsnrPerWatt => vec![RisMode::Aris, RisMode::Pris],
            _ => vec![config.ris.mode],
        };
        let sweep_values = match name {
            DSweep => stepped(5.0, 60.0, 5.0),
            RxMseSweep | TxMseSweep => stepped(-60.0, 60.0, 10.0),
            DMseSweep => stepped(10.0, 60.0, 5.0),
            _ => Vec::new(),
        };
        let trials = match name {
            NoiseCompare => 500,
            n if n.is_monte_carlo() => 200,
            _ => 1,
        };
        ExperimentSpec {
            name,
            config,
            modes,
            heights,
            power_levels_dbm,
            trials,
            seed: 1,
            sweep_values,
            grid_half: 60.0,
            grid_step: 5.0,
            out_dir: PathBuf::from("out"),
            plots: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_heights(mut self, heights: Vec<f64>) -> Self {
        self.heights = heights;
        self
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = dir.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.heights.is_empty() {
            return Err(Error::config("heights", "at least one height required"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("modes", "at least one mode required"));
        }
        if self.power_levels_dbm.is_empty() {
            return Err(Error::config("power_levels_dbm", "at least one level required"));
        }
        if self.heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::config("heights", "must be finite"));
        }
        if !(self.grid_step > 0.0) || !(self.grid_half >= 0.0) {
            return Err(Error::config("grid", "step must be positive and half-width non-negative"));
        }
        let needs_sweep = matches!(
            self.name,
            ExperimentName::DSweep | ExperimentName::RxMseSweep | ExperimentName::TxMseSweep | ExperimentName::DMseSweep
        );
        if needs_sweep && self.sweep_values.is_empty() {
            return Err(Error::config("sweep_values", "sweep needs at least one value"));
        }
        Ok(())
    }

    /// Header lines shared by every file of this run.
    pub fn provenance(&self) -> Provenance {
        let extra = serde_json::json!({
            "modes": self.modes,
            "heights": self.heights,
            "power_levels_dbm": self.power_levels_dbm,
            "sweep_values": self.sweep_values,
            "grid_half": self.grid_half,
            "grid_step": self.grid_step,
        });
        Provenance::new()
            .with("experiment", self.name)
            .with("seed", self.seed)
            .with("trials", self.trials)
            .with("spec", extra)
            .with("config", self.config.to_json_line())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out_dir.join(self.name.as_str())
    }
}

/// Files written by one run and its headline numbers.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl ExperimentOutput {
    pub fn file(&self, name: &str) -> Option<&Path> {
        self.files.iter().map(PathBuf::as_path).find(|p| p.file_name().is_some_and(|f| f == name))
    }
}

/// Runs the named study and writes its outputs.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let dir = spec.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = ExperimentOutput {
        dir: dir.clone(),
        files: Vec::new(),
        summary: serde_json::Value::Null,
    };
    out.summary = studies::run(spec, &dir, &mut out.files)?;
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "experiment": spec.name,
        "seed": spec.seed,
        "trials": spec.trials,
        "summary": out.summary,
    }))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    out.files.push(path);
    Ok(out)
}
