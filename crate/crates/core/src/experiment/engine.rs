//! Batched Monte-Carlo recovery against one fixed geometry.
//!
//! A [`HeightEngine`] holds the unit-gain sensing matrix `A₁` of a scene and
//! its Gram matrix. A system with gain `a` has `A = √a A₁`, so one engine
//! serves every mode and power level of that geometry. A [`TrialBank`] draws
//! ground truths and unit noise once per trial (common random numbers across
//! settings) and stores their correlations with `A₁`, computed as batched
//! matrix products; each recovery then runs in the Gram domain.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::montecarlo::monte_carlo;
use crate::config::ScenarioConfig;
use crate::crlb::crlb_on_support_gram;
use crate::error::{Error, Result};
use crate::forward::{amplifier_rows, build_sensing_matrix, draw_ground_truth, AmplifierPath, NoiseModel, SensingMatrix, SparseImage};
use crate::metrics::{mse_complex, MetricSet};
use crate::power::{total_power, PowerReport};
use crate::recovery::{default_epsilon, omp_recover, sp_recover, ComplexEstimate, GramProblem, LeastSquares, RecoveryOptions};
use crate::risconfig::{PhaseSchedule, RisMode};
use crate::scene::Scene;

/// Which greedy solver a bank runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    SubspacePursuit,
    Omp,
}

pub struct HeightEngine {
    pub config: ScenarioConfig,
    pub scene: Scene,
    /// Unit-gain phases (PRIS mode); other gains rescale these.
    pub schedule: PhaseSchedule,
    pub matrix: SensingMatrix,
    pub gram: Array2<Complex64>,
}

impl HeightEngine {
    /// Builds `A₁` for `config` with its own schedule seed.
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        Self::with_scene(config, config.build_scene()?)
    }

    /// Engine for a scene derived from `config` (moved arrays or panels).
    pub fn with_scene(config: &ScenarioConfig, scene: Scene) -> Result<Self> {
        let schedule = crate::risconfig::draw_schedule(config.ris.symbols, &scene, RisMode::Pris, 1.0, config.ris.seed)?;
        let matrix = build_sensing_matrix(&scene, &schedule)?;
        let gram = matrix.gram();
        Ok(HeightEngine {
            config: config.clone(),
            scene,
            schedule,
            matrix,
            gram,
        })
    }

    pub fn schedule_for(&self, mode: RisMode, amplification: f64) -> Result<PhaseSchedule> {
        self.schedule.with_amplification(mode, amplification)
    }
}

/// Mode, gain and transmit power of one simulated system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub mode: RisMode,
    pub amplification: f64,
    pub tx_power: f64,
}

impl Setting {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Setting {
            mode: config.ris.mode,
            amplification: config.amplification(),
            tx_power: config.tx_power_w(),
        }
    }
}

/// Per-trial recovery outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub metrics: MetricSet,
    /// `‖x − x̂‖²` with the complex estimate.
    pub complex_error: f64,
    /// `Tr{(γ A_u^H A_u)⁻¹}` on the true support.
    pub crlb_trace: f64,
    pub iterations: usize,
    pub estimate: ComplexEstimate,
}

impl TrialOutcome {
    /// Average CRLB over the support, `(1/S) Tr{...}`.
    pub fn crlb_average(&self) -> f64 {
        self.crlb_trace / self.estimate.support.len().max(1) as f64
    }
}

pub struct TrialBank<'e> {
    engine: &'e HeightEngine,
    truths: Vec<SparseImage>,
    signal: Vec<Array1<Complex64>>,
    noise: Array2<Complex64>,
    amplifier: Option<Array2<Complex64>>,
    corr_signal: Array2<Complex64>,
    corr_noise: Array2<Complex64>,
    corr_amplifier: Option<Array2<Complex64>>,
}

fn adjoint_batch(a: &Array2<Complex64>, columns: &Array2<Complex64>) -> Array2<Complex64> {
    // (W^H A)^H = A^H W without materializing A^H
    let wh = columns.t().mapv(|z| z.conj());
    wh.dot(a).t().mapv(|z| z.conj())
}

impl<'e> TrialBank<'e> {
    /// Draws `trials` ground truths, unit receiver noise and (when
    /// `amplifier_noise`) unit-gain amplifier noise realizations.
    pub fn new(engine: &'e HeightEngine, trials: usize, seed: u64, amplifier_noise: bool) -> Result<Self> {
        let a = engine.matrix.entries();
        let (l, n) = a.dim();
        let targets = &engine.config.targets;
        let sigma2_ris = crate::power::dbm_to_watts(engine.config.noise.sigma2_ris_dbm);
        let aris_unit = engine.schedule.with_amplification(RisMode::Aris, 1.0)?;
        let layout = engine.matrix.layout();
        struct Draw(SparseImage, Array1<Complex64>, Array1<Complex64>, Option<Array1<Complex64>>);
        let draws = monte_carlo(trials, seed, |_, rngs| {
            let x = draw_ground_truth(n, targets, &mut rngs.truth)?;
            let sd = std::f64::consts::FRAC_1_SQRT_2;
            let w = Array1::from_shape_simple_fn(l, || {
                Complex64::new(rngs.noise.sample::<f64, _>(StandardNormal) * sd, rngs.noise.sample::<f64, _>(StandardNormal) * sd)
            });
            let z = if amplifier_noise {
                let path = AmplifierPath::new(&engine.scene, &aris_unit, &x, sigma2_ris)?;
                Some(amplifier_rows(&path, layout, &mut rngs.amplifier)?)
            } else {
                None
            };
            let y = engine.matrix.apply(&x)?;
            Ok(Draw(x, y, w, z))
        })?;
        let mut noise = Array2::<Complex64>::zeros((l, trials));
        let mut amplifier = amplifier_noise.then(|| Array2::<Complex64>::zeros((l, trials)));
        let mut truths = Vec::with_capacity(trials);
        let mut signal = Vec::with_capacity(trials);
        for (t, Draw(x, y, w, z)) in draws.into_iter().enumerate() {
            noise.column_mut(t).assign(&w);
            if let (Some(m), Some(z)) = (amplifier.as_mut(), z) {
                m.column_mut(t).assign(&z);
            }
            truths.push(x);
            signal.push(y);
        }
        let mut corr_signal = Array2::<Complex64>::zeros((n, trials));
        for (t, x) in truths.iter().enumerate() {
            let mut col = corr_signal.column_mut(t);
            for (&m, &v) in x.support().iter().zip(x.values()) {
                col.scaled_add(Complex64::new(v, 0.0), &engine.gram.column(m));
            }
        }
        let corr_noise = adjoint_batch(a, &noise);
        let corr_amplifier = amplifier.as_ref().map(|z| adjoint_batch(a, z));
        Ok(TrialBank {
            engine,
            truths,
            signal,
            noise,
            amplifier,
            corr_signal,
            corr_noise,
            corr_amplifier,
        })
    }

    pub fn trials(&self) -> usize {
        self.truths.len()
    }

    pub fn truth(&self, trial: usize) -> &SparseImage {
        &self.truths[trial]
    }

    fn noise_model(&self, setting: &Setting) -> Result<NoiseModel> {
        let c = &self.engine.config;
        NoiseModel::new(
            crate::power::dbm_to_watts(c.noise.sigma2_rx_dbm),
            crate::power::dbm_to_watts(c.noise.sigma2_ris_dbm),
            setting.tx_power,
            self.engine.scene.tx.len(),
        )
    }

    /// Total power of `setting` on this geometry.
    pub fn power(&self, setting: &Setting) -> Result<PowerReport> {
        let schedule = self.engine.schedule_for(setting.mode, setting.amplification)?;
        total_power(&self.engine.scene, &schedule, setting.tx_power, &self.engine.config.power_constants())
    }

    /// Energy, correlation with `A₁` and the CSI vector of one trial.
    fn measurement(&self, setting: &Setting, noise: &NoiseModel, t: usize) -> (f64, Array1<Complex64>, Array1<Complex64>) {
        let c = setting.amplification.sqrt();
        let sigma = noise.receiver_variance().sqrt();
        let amp_scale = match (setting.mode, &self.amplifier) {
            (RisMode::Aris, Some(_)) => c * noise.csi_scale(),
            _ => 0.0,
        };
        let mut y = self.signal[t].mapv(|v| v * c);
        y.scaled_add(Complex64::new(sigma, 0.0), &self.noise.column(t));
        let mut b = self.corr_signal.column(t).mapv(|v| v * c);
        b.scaled_add(Complex64::new(sigma, 0.0), &self.corr_noise.column(t));
        if amp_scale > 0.0 {
            let z = self.amplifier.as_ref().expect("checked");
            let cz = self.corr_amplifier.as_ref().expect("paired with amplifier");
            y.scaled_add(Complex64::new(amp_scale, 0.0), &z.column(t));
            b.scaled_add(Complex64::new(amp_scale, 0.0), &cz.column(t));
        }
        (y.iter().map(|z| z.norm_sqr()).sum(), b, y)
    }

    /// The CSI vector of trial `t` under `setting`, in the units of the
    /// unit-gain matrix (`y = √a A₁ x + noise`).
    pub fn csi(&self, setting: &Setting, t: usize) -> Result<Array1<Complex64>> {
        self.check_trial(t)?;
        Ok(self.measurement(setting, &self.noise_model(setting)?, t).2)
    }

    /// `A₁ᴴ y` for trial `t` under `setting`, taken from the batched products.
    pub fn correlation(&self, setting: &Setting, t: usize) -> Result<Array1<Complex64>> {
        self.check_trial(t)?;
        Ok(self.measurement(setting, &self.noise_model(setting)?, t).1)
    }

    fn check_trial(&self, t: usize) -> Result<()> {
        if t >= self.trials() {
            return Err(Error::IndexOutOfRange {
                what: "trial",
                index: t,
                len: self.trials(),
            });
        }
        Ok(())
    }

    /// Recovery options with the config's sparsity, iteration cap and
    /// `ε` (explicit, or the residual-noise default).
    pub fn options(&self, setting: &Setting) -> Result<RecoveryOptions> {
        let cfg = &self.engine.config;
        let noise = self.noise_model(setting)?;
        let eps = cfg
            .recovery
            .epsilon
            .unwrap_or_else(|| default_epsilon(self.engine.matrix.rows(), cfg.recovery_sparsity(), noise.receiver_variance()));
        Ok(RecoveryOptions::new(cfg.recovery_sparsity(), eps).with_max_iter(cfg.recovery.max_iter))
    }

    /// Runs the solver on every trial under `setting`.
    pub fn recover(&self, setting: &Setting, solver: Solver, options: &RecoveryOptions) -> Result<Vec<TrialOutcome>> {
        let noise = self.noise_model(setting)?;
        let p_sum = self.power(setting)?.total;
        let gamma = noise.gamma();
        let c = setting.amplification.sqrt();
        monte_carlo(self.trials(), 0, |t, _| {
            let (energy, b, _) = self.measurement(setting, &noise, t);
            let problem = GramProblem::new(self.engine.gram.view(), b, energy)?;
            let result = match solver {
                Solver::SubspacePursuit => sp_recover(&problem, options)?,
                Solver::Omp => omp_recover(&problem, options)?,
            };
            let mut estimate = result.estimate;
            estimate.values.iter_mut().for_each(|v| *v /= c);
            self.outcome(t, estimate, result.iterations, gamma, c, p_sum)
        })
    }

    /// Least squares on the true support of every trial.
    pub fn oracle(&self, setting: &Setting) -> Result<Vec<TrialOutcome>> {
        let noise = self.noise_model(setting)?;
        let p_sum = self.power(setting)?.total;
        let gamma = noise.gamma();
        let c = setting.amplification.sqrt();
        monte_carlo(self.trials(), 0, |t, _| {
            let (energy, b, _) = self.measurement(setting, &noise, t);
            let problem = GramProblem::new(self.engine.gram.view(), b, energy)?;
            let support = self.truths[t].support().to_vec();
            let values = problem.coefficients(&support)?.into_iter().map(|v| v / c).collect();
            let estimate = ComplexEstimate {
                len: self.engine.scene.voxel_count(),
                support,
                values,
            };
            self.outcome(t, estimate, 0, gamma, c, p_sum)
        })
    }

    fn outcome(&self, t: usize, estimate: ComplexEstimate, iterations: usize, gamma: f64, c: f64, p_sum: f64) -> Result<TrialOutcome> {
        let truth = &self.truths[t];
        let metrics = MetricSet::evaluate(truth, &estimate, p_sum)?;
        let complex_error = mse_complex(&truth.dense(), &estimate.dense())? * truth.len() as f64;
        // (γ c² G_uu)⁻¹ for the gain-c system
        let crlb = crlb_on_support_gram(self.engine.gram.view(), truth.support(), gamma * c * c)?;
        Ok(TrialOutcome {
            trial: t,
            metrics,
            complex_error,
            crlb_trace: crlb.trace(),
            iterations,
            estimate,
        })
    }
}

/// `Σ ‖x − x̂‖² / Σ Tr{CRLB}` over trials.
pub fn error_to_bound_ratio(outcomes: &[TrialOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Empty("trial outcomes"));
    }
    let e: f64 = outcomes.iter().map(|o| o.complex_error).sum();
    let b: f64 = outcomes.iter().map(|o| o.crlb_trace).sum();
    Ok(e / b)
}
