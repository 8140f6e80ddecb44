//! The twelve named studies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::engine::{HeightEngine, Setting, Solver, TrialBank, TrialOutcome};
use super::montecarlo::{Aggregate, TrialRngs};
use super::plot::{heatmap, line_chart, Series};
use super::{ExperimentName, ExperimentSpec};
use crate::config::ScenarioConfig;
use crate::crlb::{
    grid_local_minima, horizontal_grid, placement_sweep, sweep_argmin, write_sweep_csv, BoundForm, CrlbMap, CrlbVariant,
    SweepParameter, SweepPoint,
};
use crate::error::{Error, Result};
use crate::forward::{draw_ground_truth, noise_power_report};
use crate::io::{fmt_f64, write_csv, Provenance};
use crate::metrics::{to_db, MetricSet};
use crate::power::{dbm_to_watts, match_pris_tx_power};
use crate::risconfig::RisMode;
use crate::scene::{Scene, Vec3};

pub(super) fn run(spec: &ExperimentSpec, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Value> {
    let prov = spec.provenance();
    let mut cx = Ctx { spec, dir, prov: &prov, files };
    match spec.name {
        ExperimentName::ApproxVsExactCrlb => approx_vs_exact(&mut cx),
        ExperimentName::CrlbMap => crlb_map(&mut cx),
        ExperimentName::RxSweep => grid_sweep(&mut cx, true),
        ExperimentName::TxSweep => grid_sweep(&mut cx, false),
        ExperimentName::DSweep => d_sweep(&mut cx),
        ExperimentName::NoiseCompare => noise_compare(&mut cx),
        ExperimentName::ArisVsPris | ExperimentName::PsnrPerWatt => aris_vs_pris(&mut cx),
        ExperimentName::HeightLimit => height_limit(&mut cx),
        ExperimentName::RxMseSweep | ExperimentName::TxMseSweep | ExperimentName::DMseSweep => mse_sweep(&mut cx),
    }
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    dir: &'a Path,
    prov: &'a Provenance,
    files: &'a mut Vec<PathBuf>,
}

impl Ctx<'_> {
    fn csv<I, R>(&mut self, name: &str, columns: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let p = write_csv(&self.dir.join(name), self.prov, columns, rows)?;
        self.files.push(p);
        Ok(())
    }

    fn lines(&mut self, name: &str, title: &str, x: &str, y: &str, series: &[Series]) -> Result<()> {
        if self.spec.plots {
            let p = line_chart(&self.dir.join(name), title, x, y, series)?;
            self.files.push(p);
        }
        Ok(())
    }

    fn heat(&mut self, name: &str, title: &str, nx: usize, ny: usize, extent: [f64; 4], values: &[f64]) -> Result<()> {
        if self.spec.plots {
            let p = heatmap(&self.dir.join(name), title, nx, ny, extent, values)?;
            self.files.push(p);
        }
        Ok(())
    }
}

fn aris_gain(config: &ScenarioConfig) -> f64 {
    10f64.powf(config.ris.amplification_db / 10.0)
}

fn gain_for(config: &ScenarioConfig, mode: RisMode) -> f64 {
    match mode {
        RisMode::Pris => 1.0,
        RisMode::Aris => aris_gain(config),
    }
}

fn gamma_at(config: &ScenarioConfig, tx_dbm: f64) -> Result<f64> {
    Ok(config.noise_model()?.with_tx_power(dbm_to_watts(tx_dbm)).gamma())
}

fn label(h: f64) -> String {
    format!("{h}")
}

// ---------------------------------------------------------------- bounds

fn approx_vs_exact(cx: &mut Ctx<'_>) -> Result<Value> {
    let cfg = &cx.spec.config;
    let mode = cx.spec.modes[0];
    let a = gain_for(cfg, mode);
    let gamma = gamma_at(cfg, cx.spec.power_levels_dbm[0])?;
    let base = cfg.build_scene()?;
    let mut rows = Vec::new();
    let mut per_height = Vec::new();
    for &h in &cx.spec.heights {
        let scene = base.with_roi_height(h)?;
        let exact = CrlbMap::expected(&scene, CrlbVariant::Expected, a, gamma, cfg.ris.symbols)?;
        let approx = CrlbMap::expected(&scene, CrlbVariant::Approximate, a, gamma, cfg.ris.symbols)?;
        let rel: Vec<f64> = exact.values.iter().zip(&approx.values).map(|(e, p)| (p - e).abs() / e).collect();
        let max_rel = rel.iter().copied().fold(0.0, f64::max);
        for (n, v) in scene.voxels().iter().enumerate() {
            rows.push(vec![
                fmt_f64(h),
                n.to_string(),
                fmt_f64(v.x),
                fmt_f64(v.y),
                fmt_f64(v.z),
                fmt_f64(exact.values[n]),
                fmt_f64(approx.values[n]),
                fmt_f64(rel[n]),
            ]);
        }
        let idx = |m: &CrlbMap| m.values.iter().enumerate().map(|(n, &v)| (n as f64, to_db(v))).collect::<Vec<_>>();
        cx.lines(
            &format!("approx_vs_exact_h{}.svg", label(h)),
            &format!("Expected CRLB, h = {h} m"),
            "voxel index",
            "bound [dB]",
            &[Series::new("exact", idx(&exact)), Series::new("approximate", idx(&approx))],
        )?;
        per_height.push(json!({
            "height": h,
            "max_relative_difference": max_rel,
            "mean_exact": exact.mean()?,
            "mean_approximate": approx.mean()?,
        }));
    }
    cx.csv(
        "approx_vs_exact.csv",
        &["height_m", "voxel_index", "x", "y", "z", "expected", "approximate", "relative_difference"],
        rows,
    )?;
    Ok(json!({ "mode": mode, "amplification": a, "gamma": gamma, "heights": per_height }))
}

fn roi_extent(scene: &Scene) -> [f64; 4] {
    let r = &scene.roi;
    [
        r.center.x - r.extent[0] / 2.0,
        r.center.x + r.extent[0] / 2.0,
        r.center.y - r.extent[1] / 2.0,
        r.center.y + r.extent[1] / 2.0,
    ]
}

fn crlb_map(cx: &mut Ctx<'_>) -> Result<Value> {
    let cfg = &cx.spec.config;
    let gamma = gamma_at(cfg, cx.spec.power_levels_dbm[0])?;
    let base = cfg.build_scene()?;
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &h in &cx.spec.heights {
        let scene = base.with_roi_height(h)?;
        let [nx, ny, _] = scene.roi.counts;
        let mut by_mode = BTreeMap::new();
        for &mode in &cx.spec.modes {
            let map = CrlbMap::expected(&scene, CrlbVariant::Expected, gain_for(cfg, mode), gamma, cfg.ris.symbols)?;
            for (n, v) in scene.voxels().iter().enumerate() {
                rows.push(vec![
                    mode.to_string(),
                    fmt_f64(h),
                    n.to_string(),
                    fmt_f64(v.x),
                    fmt_f64(v.y),
                    fmt_f64(v.z),
                    fmt_f64(map.values[n]),
                ]);
            }
            cx.heat(
                &format!("crlb_map_{mode}_h{}.svg", label(h)),
                &format!("{} expected CRLB, h = {h} m", mode.as_str().to_uppercase()),
                nx,
                ny,
                roi_extent(&scene),
                &map.values[..nx * ny],
            )?;
            by_mode.insert(mode.as_str(), map);
        }
        let ratio = match (by_mode.get("aris"), by_mode.get("pris")) {
            (Some(a), Some(p)) => Some(a.values.iter().zip(&p.values).map(|(a, p)| a / p).fold(f64::NEG_INFINITY, f64::max)),
            _ => None,
        };
        let mut entry = json!({ "height": h, "max_aris_to_pris_ratio": ratio });
        for (m, map) in &by_mode {
            entry[format!("mean_{m}")] = json!(map.mean()?);
        }
        means.push(entry);
    }
    cx.csv("crlb_map.csv", &["mode", "height_m", "voxel_index", "x", "y", "z", "expected_crlb"], rows)?;
    Ok(json!({ "gamma": gamma, "heights": means }))
}

fn point_json(p: &SweepPoint) -> Value {
    json!({ "x": p.param_x, "y": p.param_y, "height": p.height, "mean_crlb": p.mean_crlb })
}

fn grid_sweep(cx: &mut Ctx<'_>, rx: bool) -> Result<Value> {
    let cfg = &cx.spec.config;
    let mode = cx.spec.modes[0];
    let gamma = gamma_at(cfg, cx.spec.power_levels_dbm[0])?;
    let scene = cfg.build_scene()?.with_roi_height(cx.spec.heights[0])?;
    let z = if rx { cfg.rx.center.z } else { cfg.tx.center.z };
    let grid = horizontal_grid(cx.spec.grid_half, cx.spec.grid_step, z);
    let side = (grid.len() as f64).sqrt().round() as usize;
    let param = if rx { SweepParameter::RxPosition(grid) } else { SweepParameter::TxPosition(grid) };
    let points = placement_sweep(&scene, &param, gain_for(cfg, mode), gamma, cfg.ris.symbols, BoundForm::default())?;
    let name = if rx { "rx_sweep" } else { "tx_sweep" };
    let p = write_sweep_csv(&points, &cx.dir.join(format!("{name}.csv")), cx.prov)?;
    cx.files.push(p);
    let half = cx.spec.grid_half;
    let step = cx.spec.grid_step;
    let values: Vec<f64> = points.iter().map(|p| p.mean_crlb).collect();
    cx.heat(
        &format!("{name}.svg"),
        &format!("Mean CRLB over {} position", if rx { "RX" } else { "TX" }),
        side,
        side,
        [-half - step / 2.0, half + step / 2.0, -half - step / 2.0, half + step / 2.0],
        &values,
    )?;
    let argmin = sweep_argmin(&points, None).ok_or(Error::Empty("sweep grid"))?;
    let minima: Vec<Value> = grid_local_minima(&points, side).iter().map(point_json).collect();
    Ok(json!({ "z": z, "argmin": point_json(&argmin), "local_minima": minima }))
}

/// Default `d` values of the half-spacing sweeps.
pub fn d_sweep_values() -> Vec<f64> {
    super::stepped(5.0, 60.0, 5.0)
}

fn d_sweep(cx: &mut Ctx<'_>) -> Result<Value> {
    let cfg = &cx.spec.config;
    let mode = cx.spec.modes[0];
    let gamma = gamma_at(cfg, cx.spec.power_levels_dbm[0])?;
    let scene = cfg.build_scene()?;
    let param = SweepParameter::RisHalfSpacing {
        d: cx.spec.sweep_values.clone(),
        heights: cx.spec.heights.clone(),
    };
    let points = placement_sweep(&scene, &param, gain_for(cfg, mode), gamma, cfg.ris.symbols, BoundForm::default())?;
    let p = write_sweep_csv(&points, &cx.dir.join("d_sweep.csv"), cx.prov)?;
    cx.files.push(p);
    let mut series = Vec::new();
    let mut argmins = Vec::new();
    for &h in &cx.spec.heights {
        let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.height == Some(h)).map(|p| (p.param_x, to_db(p.mean_crlb))).collect();
        series.push(Series::new(format!("h = {h} m"), pts));
        let best = sweep_argmin(&points, Some(h)).ok_or(Error::Empty("sweep grid"))?;
        argmins.push(json!({ "height": h, "d": best.param_x, "mean_crlb": best.mean_crlb }));
    }
    cx.lines("d_sweep.svg", "Mean CRLB over RIS half-spacing", "d [m]", "mean CRLB [dB]", &series)?;
    Ok(json!({ "argmin": argmins }))
}

// ---------------------------------------------------------------- noise

fn noise_compare(cx: &mut Ctx<'_>) -> Result<Value> {
    let cfg = &cx.spec.config;
    let scene = cfg.build_scene()?;
    let schedule = crate::risconfig::draw_schedule(cfg.ris.symbols, &scene, RisMode::Aris, aris_gain(cfg), cfg.ris.seed)?;
    let images = (0..cx.spec.trials)
        .map(|t| draw_ground_truth(scene.voxel_count(), &cfg.targets, &mut TrialRngs::new(cx.spec.seed, t as u64).truth))
        .collect::<Result<Vec<_>>>()?;
    let rows = noise_power_report(
        &scene,
        &schedule,
        &images,
        &cx.spec.heights,
        dbm_to_watts(cfg.noise.sigma2_rx_dbm),
        dbm_to_watts(cfg.noise.sigma2_ris_dbm),
        cx.spec.seed,
    )?;
    cx.csv(
        "noise_compare.csv",
        &["height_m", "amplifier_noise_dbm", "receiver_noise_dbm", "gap_db"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.height),
                fmt_f64(r.amplifier_dbm),
                fmt_f64(r.receiver_dbm),
                fmt_f64(r.receiver_dbm - r.amplifier_dbm),
            ]
        }),
    )?;
    cx.lines(
        "noise_compare.svg",
        "Noise power at the receiver",
        "h [m]",
        "power [dBm]",
        &[
            Series::new("amplifier noise", rows.iter().map(|r| (r.height, r.amplifier_dbm)).collect()),
            Series::new("receiver noise", rows.iter().map(|r| (r.height, r.receiver_dbm)).collect()),
        ],
    )?;
    let monotone = rows.windows(2).all(|w| w[1].amplifier_dbm < w[0].amplifier_dbm);
    let min_gap = rows.iter().map(|r| r.receiver_dbm - r.amplifier_dbm).fold(f64::INFINITY, f64::min);
    Ok(json!({
        "rows": rows.iter().map(|r| json!({"height": r.height, "amplifier_dbm": r.amplifier_dbm, "receiver_dbm": r.receiver_dbm})).collect::<Vec<_>>(),
        "amplifier_monotone_decreasing": monotone,
        "min_gap_db": min_gap,
    }))
}

// ---------------------------------------------------------------- Monte Carlo

/// Per-trial CSV row of the recovery studies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub height_m: f64,
    /// Sweep coordinate (0 when the study has none).
    pub param: f64,
    /// ARIS power level this row belongs to; matched PRIS rows share it.
    pub level_dbm: f64,
    pub mode: RisMode,
    pub tx_power_w: f64,
    pub trial: usize,
    pub metrics: MetricSet,
    pub truth_power: f64,
    pub sq_error: f64,
    pub crlb_trace: f64,
}

pub const TRIAL_COLUMNS: [&str; 16] = [
    "trial",
    "height_m",
    "param",
    "level_dbm",
    "mode",
    "P_TX_W",
    "P_sum_W",
    "mse",
    "mse_db",
    "dr",
    "psnr_db",
    "psnr_per_w",
    "truth_power",
    "sq_error",
    "crlb_trace",
    "max",
];

impl TrialRow {
    fn new(height_m: f64, param: f64, level_dbm: f64, setting: &Setting, bank: &TrialBank<'_>, o: &TrialOutcome) -> Self {
        let x = bank.truth(o.trial);
        TrialRow {
            height_m,
            param,
            level_dbm,
            mode: setting.mode,
            tx_power_w: setting.tx_power,
            trial: o.trial,
            metrics: o.metrics,
            truth_power: x.values().iter().map(|v| v * v).sum::<f64>() / x.len() as f64,
            sq_error: o.complex_error,
            crlb_trace: o.crlb_trace,
        }
    }

    pub fn csv_row(&self) -> Vec<String> {
        let m = &self.metrics;
        vec![
            self.trial.to_string(),
            fmt_f64(self.height_m),
            fmt_f64(self.param),
            fmt_f64(self.level_dbm),
            self.mode.to_string(),
            fmt_f64(self.tx_power_w),
            fmt_f64(m.p_sum),
            fmt_f64(m.mse),
            fmt_f64(m.mse_db),
            fmt_f64(m.dr),
            fmt_f64(m.psnr_db),
            fmt_f64(m.psnr_per_w),
            fmt_f64(self.truth_power),
            fmt_f64(self.sq_error),
            fmt_f64(self.crlb_trace),
            fmt_f64(m.max),
        ]
    }
}

/// Trial means for one `(height, param, level, mode)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub height_m: f64,
    pub param: f64,
    pub level_dbm: f64,
    pub mode: RisMode,
    pub p_sum: f64,
    pub mse: Aggregate,
    pub dr: Aggregate,
    /// Over trials with finite PSNR only; `None` when every trial was exact.
    pub psnr_db: Option<Aggregate>,
    pub psnr_per_w: Option<Aggregate>,
    pub nmse: f64,
    pub sq_error_mean: f64,
    pub crlb_trace_mean: f64,
    /// `Σ‖x − x̂‖² / Σ Tr{CRLB}`.
    pub error_to_bound: f64,
}

impl AggregateRow {
    pub fn mse_db(&self) -> f64 {
        to_db(self.mse.mean)
    }
}

pub const AGGREGATE_COLUMNS: [&str; 18] = [
    "height_m",
    "param",
    "level_dbm",
    "mode",
    "count",
    "P_sum_W",
    "mse_mean",
    "mse_se",
    "mse_db",
    "nmse_db",
    "dr_mean",
    "dr_se",
    "psnr_db_mean",
    "psnr_finite_count",
    "psnr_per_w_mean",
    "sq_error_mean",
    "crlb_trace_mean",
    "error_to_bound",
];

impl AggregateRow {
    pub fn csv_row(&self) -> Vec<String> {
        let opt = |a: &Option<Aggregate>| a.map_or(f64::NAN, |a| a.mean);
        vec![
            fmt_f64(self.height_m),
            fmt_f64(self.param),
            fmt_f64(self.level_dbm),
            self.mode.to_string(),
            self.mse.count.to_string(),
            fmt_f64(self.p_sum),
            fmt_f64(self.mse.mean),
            fmt_f64(self.mse.std_error),
            fmt_f64(self.mse_db()),
            fmt_f64(to_db(self.nmse)),
            fmt_f64(self.dr.mean),
            fmt_f64(self.dr.std_error),
            fmt_f64(opt(&self.psnr_db)),
            self.psnr_db.map_or(0, |a| a.count).to_string(),
            fmt_f64(opt(&self.psnr_per_w)),
            fmt_f64(self.sq_error_mean),
            fmt_f64(self.crlb_trace_mean),
            fmt_f64(self.error_to_bound),
        ]
    }
}

/// Groups trial rows by `(height, param, level, mode)` in order of first
/// appearance and averages each group in trial order.
pub fn aggregate_rows(rows: &[TrialRow]) -> Result<Vec<AggregateRow>> {
    let mut keys: Vec<(u64, u64, u64, RisMode)> = Vec::new();
    let mut groups: Vec<Vec<&TrialRow>> = Vec::new();
    for r in rows {
        let key = (r.height_m.to_bits(), r.param.to_bits(), r.level_dbm.to_bits(), r.mode);
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    groups
        .iter()
        .map(|g| {
            let pick = |f: fn(&TrialRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let finite = |f: fn(&TrialRow) -> f64| Aggregate::of(&pick(f).into_iter().filter(|v| v.is_finite()).collect::<Vec<_>>()).ok();
            let mean = |f: fn(&TrialRow) -> f64| pick(f).iter().sum::<f64>() / g.len() as f64;
            let mse = Aggregate::of(&pick(|r| r.metrics.mse))?;
            let sq = mean(|r| r.sq_error);
            let tr = mean(|r| r.crlb_trace);
            Ok(AggregateRow {
                height_m: g[0].height_m,
                param: g[0].param,
                level_dbm: g[0].level_dbm,
                mode: g[0].mode,
                p_sum: mean(|r| r.metrics.p_sum),
                mse,
                dr: Aggregate::of(&pick(|r| r.metrics.dr))?,
                psnr_db: finite(|r| r.metrics.psnr_db),
                psnr_per_w: finite(|r| r.metrics.psnr_per_w),
                nmse: mse.mean / mean(|r| r.truth_power),
                sq_error_mean: sq,
                crlb_trace_mean: tr,
                error_to_bound: sq / tr,
            })
        })
        .collect()
}

/// Runs SP on one geometry for each `(level, setting)` and returns the rows.
fn recover_point(
    cx: &Ctx<'_>,
    config: &ScenarioConfig,
    scene: Scene,
    height: f64,
    param: f64,
    settings: impl Fn(&HeightEngine) -> Result<Vec<(f64, Setting)>>,
) -> Result<Vec<TrialRow>> {
    let engine = HeightEngine::with_scene(config, scene)?;
    let settings = settings(&engine)?;
    let amplifier = settings.iter().any(|(_, s)| s.mode == RisMode::Aris);
    let bank = TrialBank::new(&engine, cx.spec.trials, cx.spec.seed, amplifier)?;
    let mut rows = Vec::new();
    for (level, setting) in &settings {
        let options = bank.options(setting)?;
        for o in bank.recover(setting, Solver::SubspacePursuit, &options)? {
            rows.push(TrialRow::new(height, param, *level, setting, &bank, &o));
        }
    }
    Ok(rows)
}

/// Direct settings: each mode at each power level, no matching.
fn plain_settings(spec: &ExperimentSpec) -> impl Fn(&HeightEngine) -> Result<Vec<(f64, Setting)>> + '_ {
    move |_| {
        let mut out = Vec::new();
        for &level in &spec.power_levels_dbm {
            for &mode in &spec.modes {
                out.push((
                    level,
                    Setting {
                        mode,
                        amplification: gain_for(&spec.config, mode),
                        tx_power: dbm_to_watts(level),
                    },
                ));
            }
        }
        Ok(out)
    }
}

fn write_mc(cx: &mut Ctx<'_>, stem: &str, rows: &[TrialRow]) -> Result<Vec<AggregateRow>> {
    cx.csv(&format!("{stem}_trials.csv"), &TRIAL_COLUMNS, rows.iter().map(TrialRow::csv_row))?;
    let agg = aggregate_rows(rows)?;
    cx.csv(&format!("{stem}_aggregate.csv"), &AGGREGATE_COLUMNS, agg.iter().map(AggregateRow::csv_row))?;
    Ok(agg)
}

fn curves(agg: &[AggregateRow], x: fn(&AggregateRow) -> f64, y: fn(&AggregateRow) -> f64) -> Vec<Series> {
    let mut names: Vec<(RisMode, u64)> = Vec::new();
    for r in agg {
        let k = (r.mode, r.level_dbm.to_bits());
        if !names.contains(&k) {
            names.push(k);
        }
    }
    names
        .into_iter()
        .map(|(mode, level)| {
            let level = f64::from_bits(level);
            let pts = agg.iter().filter(|r| r.mode == mode && r.level_dbm == level).map(|r| (x(r), y(r))).collect();
            Series::new(format!("{} {level} dBm", mode.as_str().to_uppercase()), pts)
        })
        .collect()
}

fn agg_json(r: &AggregateRow) -> Value {
    json!({
        "height": r.height_m,
        "param": r.param,
        "level_dbm": r.level_dbm,
        "mode": r.mode,
        "p_sum": r.p_sum,
        "mse": r.mse.mean,
        "mse_se": r.mse.std_error,
        "mse_db": r.mse_db(),
        "dr": r.dr.mean,
        "psnr_db": r.psnr_db.map(|a| a.mean),
        "psnr_per_w": r.psnr_per_w.map(|a| a.mean),
        "error_to_bound": r.error_to_bound,
    })
}

fn aris_vs_pris(cx: &mut Ctx<'_>) -> Result<Value> {
    let spec = cx.spec;
    let cfg = &spec.config;
    let base = cfg.build_scene()?;
    let a = aris_gain(cfg);
    let mut rows = Vec::new();
    for &h in &spec.heights {
        let scene = base.with_roi_height(h)?;
        rows.extend(recover_point(cx, cfg, scene, h, 0.0, |engine| {
            let aris = engine.schedule_for(RisMode::Aris, a)?;
            let mut out = Vec::new();
            for &level in &spec.power_levels_dbm {
                let p_aris = dbm_to_watts(level);
                for &mode in &spec.modes {
                    let tx_power = match mode {
                        RisMode::Aris => p_aris,
                        RisMode::Pris => match_pris_tx_power(&engine.scene, &aris, p_aris, &cfg.power_constants())?,
                    };
                    out.push((level, Setting { mode, amplification: gain_for(cfg, mode), tx_power }));
                }
            }
            Ok(out)
        })?);
    }
    let stem = spec.name.as_str().replace('-', "_");
    let agg = write_mc(cx, &stem, &rows)?;
    if spec.name == ExperimentName::PsnrPerWatt {
        cx.lines(
            "psnr_per_watt.svg",
            "PSNR per Watt at matched total power",
            "h [m]",
            "PSNR / P_sum [dB/W]",
            &curves(&agg, |r| r.height_m, |r| r.psnr_per_w.map_or(f64::NAN, |a| a.mean)),
        )?;
    } else {
        cx.lines("mse.svg", "MSE at matched total power", "h [m]", "MSE [dB]", &curves(&agg, |r| r.height_m, AggregateRow::mse_db))?;
        cx.lines("dr.svg", "Detection rate at matched total power", "h [m]", "DR", &curves(&agg, |r| r.height_m, |r| r.dr.mean))?;
    }
    Ok(json!({ "aggregate": agg.iter().map(agg_json).collect::<Vec<_>>() }))
}

fn height_limit(cx: &mut Ctx<'_>) -> Result<Value> {
    let spec = cx.spec;
    let cfg = &spec.config;
    let base = cfg.build_scene()?;
    let mut rows = Vec::new();
    for &h in &spec.heights {
        rows.extend(recover_point(cx, cfg, base.with_roi_height(h)?, h, 0.0, plain_settings(spec))?);
    }
    let agg = write_mc(cx, "height_limit", &rows)?;
    let crlb_avg = |r: &AggregateRow| to_db(r.crlb_trace_mean / cfg.recovery_sparsity() as f64);
    let mut series = curves(&agg, |r| r.height_m, AggregateRow::mse_db);
    series.push(Series::new("mean support CRLB", agg.iter().filter(|r| r.mode == spec.modes[0]).map(|r| (r.height_m, crlb_avg(r))).collect()));
    series.push(Series::new(
        "mean squared error on support",
        agg.iter().filter(|r| r.mode == spec.modes[0]).map(|r| (r.height_m, to_db(r.sq_error_mean / cfg.recovery_sparsity() as f64))).collect(),
    ));
    cx.lines("height_limit.svg", "MSE and CRLB over ROI height", "h [m]", "[dB]", &series)?;
    let first: Vec<&AggregateRow> = agg.iter().filter(|r| r.mode == spec.modes[0] && r.level_dbm == spec.power_levels_dbm[0]).collect();
    Ok(json!({
        "mse_db_crossing_m20": crossing(&first, -20.0),
        "aggregate": agg.iter().map(agg_json).collect::<Vec<_>>(),
    }))
}

/// Linear interpolation of the first height where MSE(dB) reaches `level`
/// from below.
fn crossing(rows: &[&AggregateRow], level: f64) -> Option<f64> {
    if rows.first().is_some_and(|r| r.mse_db() >= level) {
        return Some(rows[0].height_m);
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (w[0].mse_db(), w[1].mse_db());
        (a < level && b >= level).then(|| w[0].height_m + (level - a) / (b - a) * (w[1].height_m - w[0].height_m))
    })
}

/// Moved-array positions for the RX and TX MSE sweeps.
pub fn mse_sweep_positions(name: ExperimentName, config: &ScenarioConfig, values: &[f64]) -> Result<Vec<Vec3>> {
    match name {
        ExperimentName::RxMseSweep => Ok(values.iter().map(|&y| Vec3::new(0.0, y, config.rx.center.z)).collect()),
        ExperimentName::TxMseSweep => Ok(values.iter().map(|&y| Vec3::new(30.0, y, config.tx.center.z)).collect()),
        _ => Err(Error::config("experiment", "not an array-position sweep")),
    }
}

fn mse_sweep(cx: &mut Ctx<'_>) -> Result<Value> {
    let spec = cx.spec;
    let cfg = &spec.config;
    let h = spec.heights[0];
    let base = cfg.build_scene()?.with_roi_height(h)?;
    let mut rows = Vec::new();
    let scenes: Vec<(f64, Scene)> = match spec.name {
        ExperimentName::DMseSweep => spec
            .sweep_values
            .iter()
            .map(|&d| Ok((d, base.with_ris_half_spacing(d)?)))
            .collect::<Result<_>>()?,
        name => mse_sweep_positions(name, cfg, &spec.sweep_values)?
            .into_iter()
            .map(|p| {
                let s = if name == ExperimentName::RxMseSweep { base.with_rx_center(p)? } else { base.with_tx_center(p)? };
                Ok((p.y, s))
            })
            .collect::<Result<_>>()?,
    };
    for (param, scene) in scenes {
        rows.extend(recover_point(cx, cfg, scene, h, param, plain_settings(spec))?);
    }
    let stem = spec.name.as_str().replace('-', "_");
    let agg = write_mc(cx, &stem, &rows)?;
    let x_label = if spec.name == ExperimentName::DMseSweep { "d [m]" } else { "y [m]" };
    cx.lines(&format!("{stem}.svg"), "MSE over placement", x_label, "MSE [dB]", &curves(&agg, |r| r.param, AggregateRow::mse_db))?;
    Ok(json!({ "aggregate": agg.iter().map(agg_json).collect::<Vec<_>>() }))
}
