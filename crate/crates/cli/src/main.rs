use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ris_imaging::crlb::{
    grid_local_minima, horizontal_grid, placement_sweep, sweep_argmin, write_sweep_csv, BoundForm, CrlbMap, CrlbVariant,
    SweepParameter,
};
use ris_imaging::experiment::{run_experiment, ExperimentName, ExperimentSpec};
use ris_imaging::forward::{draw_ground_truth, synthesize_measurements, AmplifierPath};
use ris_imaging::io::Provenance;
use ris_imaging::power::{match_pris_tx_power, total_power, PowerReport};
use ris_imaging::recovery::{default_epsilon, omp_recover, sp_recover, DenseProblem, RecoveryOptions};
use ris_imaging::{build_sensing_matrix, Error, Result, RisMode, ScenarioConfig};

#[derive(Parser)]
#[command(name = "risim", version, about = "RIS-aided low-altitude imaging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML; the built-in reference scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pris,
    Aris,
}

impl From<ModeArg> for RisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pris => RisMode::Pris,
            ModeArg::Aris => RisMode::Aris,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Sp,
    Omp,
}

#[derive(Subcommand)]
enum Command {
    Scene {
        #[command(subcommand)]
        action: SceneCmd,
        #[command(flatten)]
        common: Common,
    },
    Matrix {
        #[command(subcommand)]
        action: MatrixCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a ground truth and synthesize noisy CSI.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Add explicit amplifier-noise realizations (ARIS only).
        #[arg(long)]
        amplifier_noise: bool,
    },
    /// Simulate, then reconstruct with a greedy solver.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "sp")]
        solver: SolverArg,
    },
    Crlb {
        #[command(subcommand)]
        action: CrlbCmd,
        #[command(flatten)]
        common: Common,
    },
    Power {
        #[command(subcommand)]
        action: PowerCmd,
        #[command(flatten)]
        common: Common,
    },
    Experiment {
        #[command(subcommand)]
        action: ExperimentCmd,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum SceneCmd {
    Validate,
}

#[derive(Subcommand)]
enum MatrixCmd {
    Build,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Rx,
    Tx,
    D,
}

#[derive(Subcommand)]
enum CrlbCmd {
    Map {
        #[arg(long)]
        approximate: bool,
    },
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
    },
}

#[derive(Subcommand)]
enum PowerCmd {
    Report,
    Match,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Run {
        name: String,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated ROI heights in metres.
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
        #[arg(long)]
        no_plots: bool,
    },
    List,
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.ris.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg = cfg.with_mode(mode.into());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn provenance(cfg: &ScenarioConfig, seed: u64, command: &str) -> Provenance {
    Provenance::new()
        .with("command", command)
        .with("seed", seed)
        .with("config", cfg.to_json_line())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn print(value: serde_json::Value) {
    println!("{value}");
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scene { common, .. } => {
            let cfg = load(&common)?;
            let scene = cfg.build_scene()?;
            print(json!({
                "ok": true,
                "voxels": scene.voxel_count(),
                "measurements": scene.measurement_count(cfg.ris.symbols),
                "ris_elements": scene.total_ris_elements(),
                "wavelength_m": scene.wavelength(),
            }));
        }
        Command::Matrix { common, .. } => {
            let cfg = load(&common)?;
            let scene = cfg.build_scene()?;
            let a = build_sensing_matrix(&scene, &cfg.draw_schedule(&scene)?)?;
            ensure_dir(&common.out)?;
            let (bin, meta) = a.export(&common.out.join("matrix.bin"))?;
            print(json!({ "rows": a.rows(), "cols": a.cols(), "matrix": bin, "metadata": meta }));
        }
        Command::Simulate { common, amplifier_noise } => {
            let cfg = load(&common)?;
            let seed = common.seed.unwrap_or(cfg.ris.seed);
            let (_, _, x, y) = simulate(&cfg, seed, amplifier_noise)?;
            ensure_dir(&common.out)?;
            let prov = provenance(&cfg, seed, "simulate");
            let path = y.export_csv(&common.out.join("measurements.csv"), &prov)?;
            print(json!({ "measurements": path, "support": x.support(), "image": x.fingerprint() }));
        }
        Command::Recover { common, solver } => {
            let cfg = load(&common)?;
            let seed = common.seed.unwrap_or(cfg.ris.seed);
            let (a, noise, x, y) = simulate(&cfg, seed, cfg.ris.mode == RisMode::Aris)?;
            let problem = DenseProblem::new(a.entries(), y.y.view())?;
            let eps = cfg
                .recovery
                .epsilon
                .unwrap_or_else(|| default_epsilon(a.rows(), cfg.recovery_sparsity(), noise.receiver_variance()));
            let opts = RecoveryOptions::new(cfg.recovery_sparsity(), eps).with_max_iter(cfg.recovery.max_iter);
            let result = match solver {
                SolverArg::Sp => sp_recover(&problem, &opts)?,
                SolverArg::Omp => omp_recover(&problem, &opts)?,
            };
            ensure_dir(&common.out)?;
            let path = result.export_csv(&x.dense(), &common.out.join("recovery.csv"), &provenance(&cfg, seed, "recover"))?;
            print(json!({
                "recovery": path,
                "true_support": x.support(),
                "estimated_support": result.support(),
                "iterations": result.iterations,
                "termination": format!("{:?}", result.termination),
            }));
        }
        Command::Crlb { action, common } => {
            let cfg = load(&common)?;
            let scene = cfg.build_scene()?;
            let gamma = cfg.noise_model()?.gamma();
            let prov = provenance(&cfg, cfg.ris.seed, "crlb");
            ensure_dir(&common.out)?;
            match action {
                CrlbCmd::Map { approximate } => {
                    let variant = if approximate { CrlbVariant::Approximate } else { CrlbVariant::Expected };
                    let map = CrlbMap::expected(&scene, variant, cfg.amplification(), gamma, cfg.ris.symbols)?;
                    let path = map.export_csv(&common.out.join("crlb_map.csv"), &prov)?;
                    print(json!({ "crlb_map": path, "mean": map.mean()? }));
                }
                CrlbCmd::Sweep { kind } => {
                    let (param, side) = match kind {
                        SweepKind::Rx | SweepKind::Tx => {
                            let grid = horizontal_grid(60.0, 5.0, if matches!(kind, SweepKind::Rx) { cfg.rx.center.z } else { cfg.tx.center.z });
                            let side = (grid.len() as f64).sqrt().round() as usize;
                            let p = if matches!(kind, SweepKind::Rx) { SweepParameter::RxPosition(grid) } else { SweepParameter::TxPosition(grid) };
                            (p, Some(side))
                        }
                        SweepKind::D => (
                            SweepParameter::RisHalfSpacing {
                                d: (1..=12).map(|k| 5.0 * k as f64).collect(),
                                heights: vec![cfg.roi.center.z],
                            },
                            None,
                        ),
                    };
                    let points = placement_sweep(&scene, &param, cfg.amplification(), gamma, cfg.ris.symbols, BoundForm::default())?;
                    let path = write_sweep_csv(&points, &common.out.join("crlb_sweep.csv"), &prov)?;
                    let height = matches!(kind, SweepKind::D).then_some(cfg.roi.center.z);
                    let best = sweep_argmin(&points, height).ok_or(Error::Empty("sweep grid"))?;
                    let minima = side.map(|s| grid_local_minima(&points, s).iter().map(|p| [p.param_x, p.param_y]).collect::<Vec<_>>());
                    print(json!({ "sweep": path, "argmin": [best.param_x, best.param_y], "local_minima": minima }));
                }
            }
        }
        Command::Power { action, common } => {
            let cfg = load(&common)?;
            let scene = cfg.build_scene()?;
            let constants = cfg.power_constants();
            ensure_dir(&common.out)?;
            let prov = provenance(&cfg, cfg.ris.seed, "power");
            match action {
                PowerCmd::Report => {
                    let report = total_power(&scene, &cfg.draw_schedule(&scene)?, cfg.tx_power_w(), &constants)?;
                    let path = PowerReport::write_csv(std::slice::from_ref(&report), &common.out.join("power.csv"), &prov)?;
                    print(json!({ "power": path, "total_w": report.total, "mode": report.mode }));
                }
                PowerCmd::Match => {
                    let aris_cfg = cfg.with_mode(RisMode::Aris);
                    let aris = aris_cfg.draw_schedule(&scene)?;
                    let p = match_pris_tx_power(&scene, &aris, cfg.tx_power_w(), &constants)?;
                    let a = total_power(&scene, &aris, cfg.tx_power_w(), &constants)?;
                    let pris = cfg.with_mode(RisMode::Pris).draw_schedule(&scene)?;
                    let b = total_power(&scene, &pris, p, &constants)?;
                    let path = PowerReport::write_csv(&[a.clone(), b.clone()], &common.out.join("power_match.csv"), &prov)?;
                    print(json!({ "power": path, "pris_tx_power_w": p, "aris_total_w": a.total, "pris_total_w": b.total }));
                }
            }
        }
        Command::Experiment { action, common } => match action {
            ExperimentCmd::List => {
                for n in ExperimentName::ALL {
                    println!("{n}");
                }
            }
            ExperimentCmd::Run { name, trials, heights, no_plots } => {
                let name: ExperimentName = name.parse()?;
                let mut cfg = match &common.config {
                    Some(p) => ScenarioConfig::load(p)?,
                    None => ScenarioConfig::default(),
                };
                if let Some(m) = common.mode {
                    cfg = cfg.with_mode(m.into());
                }
                let mut spec = ExperimentSpec::new(name, cfg).with_out_dir(&common.out);
                if common.mode.is_some() && !matches!(name, ExperimentName::CrlbMap | ExperimentName::ArisVsPris | ExperimentName::PsnrPerWatt) {
                    spec.modes = vec![spec.config.ris.mode];
                }
                if let Some(seed) = common.seed {
                    spec.seed = seed;
                }
                if let Some(t) = trials {
                    spec.trials = t;
                }
                if let Some(h) = heights {
                    spec.heights = h;
                }
                spec.plots = !no_plots;
                let out = run_experiment(&spec)?;
                print(json!({ "dir": out.dir, "files": out.files, "summary": out.summary }));
            }
        },
    }
    Ok(())
}

type Simulated = (
    ris_imaging::SensingMatrix,
    ris_imaging::forward::NoiseModel,
    ris_imaging::SparseImage,
    ris_imaging::forward::MeasurementSet,
);

fn simulate(cfg: &ScenarioConfig, seed: u64, amplifier_noise: bool) -> Result<Simulated> {
    use rand::SeedableRng;
    let scene = cfg.build_scene()?;
    let schedule = cfg.draw_schedule(&scene)?;
    let a = build_sensing_matrix(&scene, &schedule)?;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let x = draw_ground_truth(scene.voxel_count(), &cfg.targets, &mut rng)?;
    let noise = cfg.noise_model()?;
    let path = if amplifier_noise {
        if schedule.mode != RisMode::Aris {
            return Err(Error::Mode { expected: "ARIS" });
        }
        Some(AmplifierPath::new(&scene, &schedule, &x, cfg.power_constants().sigma2_ris_w)?)
    } else {
        None
    };
    let y = synthesize_measurements(&a, &x, &noise, path.as_ref(), seed)?;
    Ok((a, noise, x, y))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}
