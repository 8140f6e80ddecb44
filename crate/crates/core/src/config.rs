//! TOML scenario configuration. [`ScenarioConfig::default`] is the reference
//! scenario: 4.9 GHz carrier, four 50×50 panels at `[±30, ±30, 25]` m, a
//! 120 m × 120 m × 3 m ROI at 100 m split into 40×40×1 voxels, 4-element TX
//! and RX arrays at `[0, ∓60, 30]` m.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::{dbm_to_watts, PowerConstants};
use crate::forward::NoiseModel;
use crate::risconfig::{draw_schedule, PhaseSchedule, RisMode};
use crate::scene::{AntennaArray, ArrayRole, RisPanel, RoiGrid, Scene, Vec3, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frequency_hz: f64,
    pub roi: RoiConfig,
    pub tx: ArrayConfig,
    pub rx: ArrayConfig,
    pub ris: RisConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub targets: TargetConfig,
    #[serde(default)]
    pub recovery: RecoveryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    pub center: Vec3,
    pub extent: [f64; 3],
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub center: Vec3,
    pub elements: usize,
    /// Element spacing in metres; half a wavelength when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub center: Vec3,
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in metres; half a wavelength when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisConfig {
    pub mode: RisMode,
    /// ARIS amplification `a` in dB; ignored for PRIS.
    pub amplification_db: f64,
    /// Maximum amplification `α_max` in dB; defaults to `amplification_db`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_amplification_db: Option<f64>,
    pub seed: u64,
    /// Number of symbol intervals `K`.
    pub symbols: usize,
    pub panels: Vec<PanelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub tx_power_dbm: f64,
    pub sigma2_rx_dbm: f64,
    pub sigma2_ris_dbm: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            tx_power_dbm: 30.0,
            sigma2_rx_dbm: -110.0,
            sigma2_ris_dbm: -110.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub pc_dbm: f64,
    pub pdc_dbm: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            pc_dbm: -10.0,
            pdc_dbm: -5.0,
        }
    }
}

/// Ground-truth image statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub sparsity: usize,
    pub mean: f64,
    pub variance: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            sparsity: 10,
            mean: 0.1,
            variance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    /// Sparsity handed to the solver; defaults to `targets.sparsity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    /// Residual-energy threshold; derived from the noise level when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub max_iter: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            sparsity: None,
            epsilon: None,
            max_iter: 50,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let panel = |x: f64, y: f64| PanelConfig {
            center: Vec3::new(x, y, 25.0),
            rows: 50,
            cols: 50,
            spacing: None,
        };
        ScenarioConfig {
            frequency_hz: 4.9e9,
            roi: RoiConfig {
                center: Vec3::new(0.0, 0.0, 100.0),
                extent: [120.0, 120.0, 3.0],
                counts: [40, 40, 1],
            },
            tx: ArrayConfig {
                center: Vec3::new(0.0, -60.0, 30.0),
                elements: 4,
                spacing: None,
            },
            rx: ArrayConfig {
                center: Vec3::new(0.0, 60.0, 30.0),
                elements: 4,
                spacing: None,
            },
            ris: RisConfig {
                mode: RisMode::Aris,
                amplification_db: 40.0,
                max_amplification_db: None,
                seed: 1,
                symbols: 50,
                panels: vec![
                    panel(-30.0, -30.0),
                    panel(30.0, -30.0),
                    panel(-30.0, 30.0),
                    panel(30.0, 30.0),
                ],
            },
            noise: NoiseConfig::default(),
            power: PowerConfig::default(),
            targets: TargetConfig::default(),
            recovery: RecoveryConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Single-line JSON form embedded in output file headers.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) || !self.frequency_hz.is_finite() {
            return Err(Error::config("frequency_hz", "must be positive"));
        }
        if self.ris.symbols == 0 {
            return Err(Error::config("ris.symbols", "must be at least 1"));
        }
        if self.targets.sparsity == 0 {
            return Err(Error::config("targets.sparsity", "must be at least 1"));
        }
        if !(self.targets.variance >= 0.0) {
            return Err(Error::config("targets.variance", "must be non-negative"));
        }
        if self.recovery.max_iter == 0 {
            return Err(Error::config("recovery.max_iter", "must be at least 1"));
        }
        if self.ris.mode == RisMode::Aris && self.ris.amplification_db < 0.0 {
            return Err(Error::config("ris.amplification_db", "ARIS gain must be at least 0 dB"));
        }
        if self.amplification() > self.max_amplification() * (1.0 + 1e-12) {
            return Err(Error::config("ris.amplification_db", "exceeds ris.max_amplification_db"));
        }
        Ok(())
    }

    pub fn build_scene(&self) -> Result<Scene> {
        self.validate()?;
        let half = self.wavelength() / 2.0;
        let tx = AntennaArray::linear_x(
            self.tx.center,
            self.tx.elements,
            self.tx.spacing.unwrap_or(half),
            ArrayRole::Tx,
        )?;
        let rx = AntennaArray::linear_x(
            self.rx.center,
            self.rx.elements,
            self.rx.spacing.unwrap_or(half),
            ArrayRole::Rx,
        )?;
        let panels = self
            .ris
            .panels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                RisPanel::new(p.center, p.rows, p.cols, p.spacing.unwrap_or(half)).map_err(|e| match e {
                    Error::Config { key, reason } => Error::Config {
                        key: key.replace("ris.panels", &format!("ris.panels[{i}]")),
                        reason,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let roi = RoiGrid::new(self.roi.center, self.roi.extent, self.roi.counts)?;
        Scene::new(tx, rx, panels, roi, self.frequency_hz)
    }

    /// Linear amplification `a` (1 for PRIS).
    pub fn amplification(&self) -> f64 {
        match self.ris.mode {
            RisMode::Pris => 1.0,
            RisMode::Aris => 10f64.powf(self.ris.amplification_db / 10.0),
        }
    }

    /// Linear `α_max`.
    pub fn max_amplification(&self) -> f64 {
        let db = self.ris.max_amplification_db.unwrap_or(self.ris.amplification_db);
        10f64.powf(db.max(0.0) / 10.0)
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.noise.tx_power_dbm)
    }

    pub fn power_constants(&self) -> PowerConstants {
        PowerConstants {
            pc_w: dbm_to_watts(self.power.pc_dbm),
            pdc_w: dbm_to_watts(self.power.pdc_dbm),
            sigma2_ris_w: dbm_to_watts(self.noise.sigma2_ris_dbm),
        }
    }

    /// The phase schedule this config describes, drawn for `scene`.
    pub fn draw_schedule(&self, scene: &Scene) -> Result<PhaseSchedule> {
        draw_schedule(self.ris.symbols, scene, self.ris.mode, self.amplification(), self.ris.seed)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(
            dbm_to_watts(self.noise.sigma2_rx_dbm),
            dbm_to_watts(self.noise.sigma2_ris_dbm),
            self.tx_power_w(),
            self.tx.elements,
        )
    }

    pub fn recovery_sparsity(&self) -> usize {
        self.recovery.sparsity.unwrap_or(self.targets.sparsity)
    }

    pub fn with_mode(&self, mode: RisMode) -> Self {
        let mut c = self.clone();
        c.ris.mode = mode;
        c
    }

    /// The reference geometry with smaller panels, ROI grid and symbol count,
    /// for fast tests and property suites.
    pub fn reduced(panel_side: usize, counts: [usize; 3], symbols: usize) -> Self {
        let mut c = ScenarioConfig::default();
        for p in &mut c.ris.panels {
            p.rows = panel_side;
            p.cols = panel_side;
        }
        c.roi.counts = counts;
        c.ris.symbols = symbols;
        c
    }

    pub fn with_roi_height(&self, height: f64) -> Self {
        let mut c = self.clone();
        c.roi.center.z = height;
        c
    }
}
