//! Cramér–Rao bounds on voxel coefficients: exact bounds from a sensing
//! matrix, the expectation over random phase schedules, its center-distance
//! approximation, and placement sweeps built on them.
//!
//! The expected bound factors as `E{C_n} = η κ μ` with
//!
//! ```text
//! η = 64π³ / (a γ g² K)
//! κ = (Σ_j 1 / d²[v_n, RX_j])⁻¹
//! μ = (Σ_i Σ_t Σ_m 1 / (d²[TX_i, s_tm] d²[s_tm, v_n]))⁻¹
//! ```
//!
//! and the approximation replaces element distances with center distances:
//! `κ̃ = d²[v_n, RX] / N_RX`, `μ̃ = (Σ_t M_t N_TX / (d²[TX, s_t] d²[s_t, v_n]))⁻¹`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::fs_unchecked;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv, Provenance};
use crate::recovery::{gram_cholesky, support_r_factor};
use crate::risconfig::PhaseSchedule;
use crate::scene::{RoiGrid, Scene, Vec3};

/// Per-element bounds on a support and their mean (the average CRLB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCrlb {
    pub bounds: Vec<f64>,
    pub average: f64,
}

impl SupportCrlb {
    /// `Tr{(γ A_u^H A_u)⁻¹}`.
    pub fn trace(&self) -> f64 {
        self.bounds.iter().sum()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::config("gamma", "must be positive and finite"));
    }
    Ok(())
}

/// Diagonal of `(R^H R)⁻¹ = R⁻¹ R⁻ᴴ` for upper-triangular `R`: squared row
/// norms of `R⁻¹`.
fn inverse_gram_diagonal_upper(r: &Array2<Complex64>) -> Vec<f64> {
    let s = r.nrows();
    let mut inv = Array2::<Complex64>::zeros((s, s));
    for c in 0..s {
        for i in (0..=c).rev() {
            let mut acc = if i == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            for k in i + 1..=c {
                acc -= r[[i, k]] * inv[[k, c]];
            }
            inv[[i, c]] = acc / r[[i, i]];
        }
    }
    (0..s).map(|i| inv.row(i).iter().map(|z| z.norm_sqr()).sum()).collect()
}

fn support_bounds(diag: Vec<f64>, gamma: f64) -> SupportCrlb {
    let bounds: Vec<f64> = diag.into_iter().map(|d| d / gamma).collect();
    let average = bounds.iter().sum::<f64>() / bounds.len() as f64;
    SupportCrlb { bounds, average }
}

/// `[(γ A_u^H A_u)⁻¹]_{r,r}` for every `r`, through a QR of `A_u`.
pub fn crlb_on_support(a: &Array2<Complex64>, support: &[usize], gamma: f64) -> Result<SupportCrlb> {
    check_gamma(gamma)?;
    if support.is_empty() {
        return Err(Error::Empty("support"));
    }
    let r = support_r_factor(a, support)?;
    Ok(support_bounds(inverse_gram_diagonal_upper(&r), gamma))
}

/// Same bounds from a precomputed Gram matrix `A^H A`, through Cholesky.
pub fn crlb_on_support_gram(gram: ArrayView2<'_, Complex64>, support: &[usize], gamma: f64) -> Result<SupportCrlb> {
    check_gamma(gamma)?;
    if support.is_empty() {
        return Err(Error::Empty("support"));
    }
    let l = gram_cholesky(gram, support)?;
    // (L L^H)⁻¹ = L⁻ᴴ L⁻¹; with R = L^H upper triangular the formula above applies.
    let r = l.t().mapv(|z| z.conj());
    Ok(support_bounds(inverse_gram_diagonal_upper(&r), gamma))
}

/// `C_n = 1 / (γ ‖p_n‖²)`; infinite for a column of zeros (a blind voxel).
pub fn crlb_voxel(a: &Array2<Complex64>, n: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if n >= a.ncols() {
        return Err(Error::IndexOutOfRange {
            what: "voxel",
            index: n,
            len: a.ncols(),
        });
    }
    let energy: f64 = a.column(n).iter().map(|z| z.norm_sqr()).sum();
    Ok(if energy > 0.0 { 1.0 / (gamma * energy) } else { f64::INFINITY })
}

/// `C_n` evaluated from distances and schedule coefficients, without a matrix:
/// `(Σ_{i,k,t,j} γ g² / (4π d²[v,RX_j]) · |Σ_m ω fs-pair|²)⁻¹`.
pub fn crlb_voxel_expanded(scene: &Scene, schedule: &PhaseSchedule, n: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let v = voxel(scene, n)?;
    if schedule.panel_count() != scene.panel_count() {
        return Err(Error::Dimension("schedule and scene panel counts differ".into()));
    }
    let lambda = scene.wavelength();
    let g2 = scene.g().powi(2);
    let rx_weight: f64 = scene
        .rx
        .positions()
        .iter()
        .map(|&r| positive_distance(v, r, n).map(|d| 1.0 / (4.0 * PI * d * d)))
        .sum::<Result<f64>>()?;
    let mut total = 0.0;
    for tx in scene.tx.positions() {
        for t in 0..scene.panel_count() {
            let elements = scene.ris_elements(t);
            let pair: Vec<Complex64> = elements
                .iter()
                .map(|&s| fs_unchecked(tx.distance(s), lambda) * fs_unchecked(s.distance(v), lambda))
                .collect();
            for row in schedule.panel(t).rows() {
                let sum: Complex64 = row.iter().zip(&pair).map(|(w, p)| w * p).sum();
                total += sum.norm_sqr();
            }
        }
    }
    let fisher = gamma * g2 * rx_weight * total;
    Ok(if fisher > 0.0 { 1.0 / fisher } else { f64::INFINITY })
}

/// An expected-bound value with its three factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbFactors {
    pub eta: f64,
    pub kappa: f64,
    pub mu: f64,
    pub value: f64,
}

impl CrlbFactors {
    fn new(eta: f64, kappa: f64, mu: f64) -> Self {
        CrlbFactors {
            eta,
            kappa,
            mu,
            value: eta * kappa * mu,
        }
    }
}

/// `η = 64π³ / (a γ g² K)`.
pub fn eta(amplification: f64, gamma: f64, g: f64, symbols: usize) -> f64 {
    64.0 * PI.powi(3) / (amplification * gamma * g * g * symbols as f64)
}

fn check_expectation_args(amplification: f64, gamma: f64, symbols: usize) -> Result<()> {
    check_gamma(gamma)?;
    if !(amplification > 0.0) {
        return Err(Error::config("ris.amplification_db", "gain must be positive"));
    }
    if symbols == 0 {
        return Err(Error::config("ris.symbols", "must be at least 1"));
    }
    Ok(())
}

fn voxel(scene: &Scene, n: usize) -> Result<Vec3> {
    scene.voxels().get(n).copied().ok_or(Error::IndexOutOfRange {
        what: "voxel",
        index: n,
        len: scene.voxel_count(),
    })
}

fn positive_distance(a: Vec3, b: Vec3, index: usize) -> Result<f64> {
    let d = a.distance(b);
    if !(d > 0.0) {
        return Err(Error::CoincidentPoints { index, distance: d });
    }
    Ok(d)
}

/// Expected `C_n` over i.i.d. uniform phases with `|ω|² = a`, using every
/// element distance.
pub fn expected_crlb(scene: &Scene, n: usize, amplification: f64, gamma: f64, symbols: usize) -> Result<CrlbFactors> {
    check_expectation_args(amplification, gamma, symbols)?;
    let v = voxel(scene, n)?;
    let mut inv_kappa = 0.0;
    for r in scene.rx.positions() {
        inv_kappa += 1.0 / positive_distance(v, r, n)?.powi(2);
    }
    let tx = scene.tx.positions();
    let mut inv_mu = 0.0;
    for t in 0..scene.panel_count() {
        for &s in scene.ris_elements(t) {
            let dsv2 = s.distance_sq(v);
            let dtx: f64 = tx.iter().map(|&p| 1.0 / p.distance_sq(s)).sum();
            inv_mu += dtx / dsv2;
        }
    }
    if !(inv_mu > 0.0) || !inv_mu.is_finite() || !inv_kappa.is_finite() {
        return Err(Error::CoincidentPoints { index: n, distance: 0.0 });
    }
    Ok(CrlbFactors::new(eta(amplification, gamma, scene.g(), symbols), 1.0 / inv_kappa, 1.0 / inv_mu))
}

/// Center-distance approximation of [`expected_crlb`].
pub fn approx_expected_crlb(scene: &Scene, n: usize, amplification: f64, gamma: f64, symbols: usize) -> Result<CrlbFactors> {
    check_expectation_args(amplification, gamma, symbols)?;
    let v = voxel(scene, n)?;
    let kappa = positive_distance(v, scene.rx.center, n)?.powi(2) / scene.rx.len() as f64;
    let n_tx = scene.tx.len() as f64;
    let mut terms = Vec::with_capacity(scene.panel_count());
    for p in &scene.ris {
        let d_tx = positive_distance(scene.tx.center, p.center, n)?;
        let d_v = positive_distance(p.center, v, n)?;
        terms.push(p.element_count() as f64 * n_tx / (d_tx * d_tx * d_v * d_v));
    }
    // order-independent sum: mirrored geometries give bit-identical values
    terms.sort_by(f64::total_cmp);
    let inv_mu: f64 = terms.iter().sum();
    if !(inv_mu > 0.0) {
        return Err(Error::Empty("RIS elements"));
    }
    Ok(CrlbFactors::new(eta(amplification, gamma, scene.g(), symbols), kappa, 1.0 / inv_mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrlbVariant {
    ExactSupport,
    PerVoxelExact,
    Expected,
    Approximate,
}

impl CrlbVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            CrlbVariant::ExactSupport => "exact-support",
            CrlbVariant::PerVoxelExact => "per-voxel-exact",
            CrlbVariant::Expected => "expected",
            CrlbVariant::Approximate => "approximate",
        }
    }
}

/// One bound value per voxel of an ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbMap {
    pub roi: RoiGrid,
    pub values: Vec<f64>,
    pub variant: CrlbVariant,
    pub gamma: f64,
    pub amplification: f64,
    pub symbols: usize,
}

impl CrlbMap {
    /// Expected or approximate bound over every voxel of `scene`.
    pub fn expected(scene: &Scene, variant: CrlbVariant, amplification: f64, gamma: f64, symbols: usize) -> Result<Self> {
        let f = match variant {
            CrlbVariant::Expected => expected_crlb,
            CrlbVariant::Approximate => approx_expected_crlb,
            _ => return Err(Error::config("variant", "use CrlbMap::from_matrix for exact bounds")),
        };
        let values = (0..scene.voxel_count())
            .into_par_iter()
            .map(|n| f(scene, n, amplification, gamma, symbols).map(|c| c.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(CrlbMap {
            roi: scene.roi.clone(),
            values,
            variant,
            gamma,
            amplification,
            symbols,
        })
    }

    /// `C_n` from the columns of a sensing matrix.
    pub fn from_matrix(scene: &Scene, a: &Array2<Complex64>, schedule: &PhaseSchedule, gamma: f64) -> Result<Self> {
        if a.ncols() != scene.voxel_count() {
            return Err(Error::Dimension("matrix columns differ from voxel count".into()));
        }
        let values = (0..a.ncols()).map(|n| crlb_voxel(a, n, gamma)).collect::<Result<Vec<_>>>()?;
        Ok(CrlbMap {
            roi: scene.roi.clone(),
            values,
            variant: CrlbVariant::PerVoxelExact,
            gamma,
            amplification: schedule.amplification,
            symbols: schedule.symbols(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> Result<f64> {
        mean_over_voxels(self)
    }

    pub const CSV_COLUMNS: [&'static str; 5] = ["voxel_index", "x", "y", "z", "value"];

    pub fn export_csv(&self, path: &Path, provenance: &Provenance) -> Result<PathBuf> {
        let mut prov = provenance.clone();
        prov.push("variant", self.variant.as_str());
        prov.push("gamma", fmt_f64(self.gamma));
        prov.push("amplification", fmt_f64(self.amplification));
        prov.push("symbols", self.symbols);
        let rows = self.values.iter().enumerate().map(|(n, &v)| {
            let c = self.roi.voxel_center(n).expect("map matches roi");
            vec![n.to_string(), fmt_f64(c.x), fmt_f64(c.y), fmt_f64(c.z), fmt_f64(v)]
        });
        write_csv(path, &prov, &Self::CSV_COLUMNS, rows)
    }
}

/// Arithmetic mean of a map.
pub fn mean_over_voxels(map: &CrlbMap) -> Result<f64> {
    if map.values.is_empty() {
        return Err(Error::Empty("CRLB map"));
    }
    Ok(map.values.iter().sum::<f64>() / map.values.len() as f64)
}

/// Which expected-bound form a sweep averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundForm {
    #[default]
    Approximate,
    Expected,
}

impl BoundForm {
    fn variant(self) -> CrlbVariant {
        match self {
            BoundForm::Approximate => CrlbVariant::Approximate,
            BoundForm::Expected => CrlbVariant::Expected,
        }
    }
}

/// What a placement sweep moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepParameter {
    RxPosition(Vec<Vec3>),
    TxPosition(Vec<Vec3>),
    /// Four-panel symmetric layout `[±d, ±d, z]`, evaluated at each ROI height.
    RisHalfSpacing { d: Vec<f64>, heights: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param_x: f64,
    pub param_y: f64,
    pub height: Option<f64>,
    pub mean_crlb: f64,
}

/// Square horizontal grid of `step`-spaced points spanning `[-half, half]`
/// in x and y at fixed `z`, row-major with x fastest.
pub fn horizontal_grid(half: f64, step: f64, z: f64) -> Vec<Vec3> {
    let n = (2.0 * half / step).round() as usize;
    let coord = |k: usize| -half + k as f64 * step;
    (0..=n).flat_map(|iy| (0..=n).map(move |ix| Vec3::new(coord(ix), coord(iy), z))).collect()
}

/// Mean expected bound `Ē` per grid point.
pub fn placement_sweep(
    scene: &Scene,
    parameter: &SweepParameter,
    amplification: f64,
    gamma: f64,
    symbols: usize,
    form: BoundForm,
) -> Result<Vec<SweepPoint>> {
    let mean_for = |s: &Scene| CrlbMap::expected(s, form.variant(), amplification, gamma, symbols)?.mean();
    match parameter {
        SweepParameter::RxPosition(points) | SweepParameter::TxPosition(points) => {
            if points.is_empty() {
                return Err(Error::Empty("sweep grid"));
            }
            let rx = matches!(parameter, SweepParameter::RxPosition(_));
            points
                .iter()
                .map(|&p| {
                    let moved = if rx { scene.with_rx_center(p)? } else { scene.with_tx_center(p)? };
                    Ok(SweepPoint {
                        param_x: p.x,
                        param_y: p.y,
                        height: None,
                        mean_crlb: mean_for(&moved)?,
                    })
                })
                .collect()
        }
        SweepParameter::RisHalfSpacing { d, heights } => {
            if d.is_empty() || heights.is_empty() {
                return Err(Error::Empty("sweep grid"));
            }
            let mut out = Vec::with_capacity(d.len() * heights.len());
            for &h in heights {
                let at_h = scene.with_roi_height(h)?;
                for &dd in d {
                    out.push(SweepPoint {
                        param_x: dd,
                        param_y: dd,
                        height: Some(h),
                        mean_crlb: mean_for(&at_h.with_ris_half_spacing(dd)?)?,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// The sweep point with the smallest `Ē` among those at `height`.
pub fn sweep_argmin(points: &[SweepPoint], height: Option<f64>) -> Option<SweepPoint> {
    points
        .iter()
        .filter(|p| p.height == height)
        .min_by(|a, b| a.mean_crlb.total_cmp(&b.mean_crlb))
        .copied()
}

/// Grid points whose `Ē` is strictly below all of their 8 neighbours.
/// `points` must come from [`horizontal_grid`] order with `side` points per row.
pub fn grid_local_minima(points: &[SweepPoint], side: usize) -> Vec<SweepPoint> {
    let at = |ix: isize, iy: isize| -> Option<f64> {
        if ix < 0 || iy < 0 || ix >= side as isize || iy >= side as isize {
            None
        } else {
            Some(points[iy as usize * side + ix as usize].mean_crlb)
        }
    };
    let mut out = Vec::new();
    for iy in 0..side as isize {
        for ix in 0..side as isize {
            let c = at(ix, iy).expect("in grid");
            let is_min = (-1..=1)
                .flat_map(|dy| (-1..=1).map(move |dx| (dx, dy)))
                .filter(|&(dx, dy)| (dx, dy) != (0, 0))
                .all(|(dx, dy)| at(ix + dx, iy + dy).is_none_or(|v| c < v));
            if is_min {
                out.push(points[iy as usize * side + ix as usize]);
            }
        }
    }
    out
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path, provenance: &Provenance) -> Result<PathBuf> {
    let with_height = points.iter().any(|p| p.height.is_some());
    let columns: &[&str] = if with_height {
        &["param_x", "param_y", "height", "mean_crlb"]
    } else {
        &["param_x", "param_y", "mean_crlb"]
    };
    let rows = points.iter().map(|p| {
        let mut r = vec![fmt_f64(p.param_x), fmt_f64(p.param_y)];
        if with_height {
            r.push(fmt_f64(p.height.unwrap_or(f64::NAN)));
        }
        r.push(fmt_f64(p.mean_crlb));
        r
    });
    write_csv(path, provenance, columns, rows)
}
