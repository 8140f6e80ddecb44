//! Sensing matrix, ground-truth images and CSI measurement synthesis.
//!
//! Rows of `A` are ordered lexicographically by `(i, k, t, j)`:
//! `row = ((i * K + k) * T + t) * N_RX + j`. Entry `(row, n)` is
//!
//! ```text
//! g · fs(d[v_n, RX_j]) · Σ_m ω[k,t,m] · fs(d[TX_i, s_tm]) · fs(d[s_tm, v_n])
//! ```
//!
//! with `fs(d) = e^{-j2πd/λ} / (√(4π) d)`.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::fs_unchecked;
use crate::config::TargetConfig;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv, Provenance};
use crate::power::watts_to_dbm;
use crate::risconfig::{PhaseSchedule, RisMode};
use crate::scene::Scene;

/// Default cap on `L · N` complex entries (16 GiB would be 2^30).
pub const DEFAULT_MATRIX_BUDGET: usize = 1 << 27;

/// Measurement index `(i, k, t, j)`: TX antenna, symbol, panel, RX antenna.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowIndex {
    pub i: usize,
    pub k: usize,
    pub t: usize,
    pub j: usize,
}

/// Sizes of the four measurement axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLayout {
    pub tx: usize,
    pub symbols: usize,
    pub panels: usize,
    pub rx: usize,
}

impl RowLayout {
    pub fn new(scene: &Scene, schedule: &PhaseSchedule) -> Self {
        RowLayout {
            tx: scene.tx.len(),
            symbols: schedule.symbols(),
            panels: scene.panel_count(),
            rx: scene.rx.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.tx * self.symbols * self.panels * self.rx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, idx: RowIndex) -> Result<usize> {
        let RowIndex { i, k, t, j } = idx;
        if i >= self.tx || k >= self.symbols || t >= self.panels || j >= self.rx {
            return Err(Error::IndexOutOfRange {
                what: "measurement index (i,k,t,j)",
                index: self.flat(idx),
                len: self.len(),
            });
        }
        Ok(self.flat(idx))
    }

    fn flat(&self, RowIndex { i, k, t, j }: RowIndex) -> usize {
        ((i * self.symbols + k) * self.panels + t) * self.rx + j
    }

    pub fn index(&self, row: usize) -> Result<RowIndex> {
        if row >= self.len() {
            return Err(Error::IndexOutOfRange {
                what: "measurement row",
                index: row,
                len: self.len(),
            });
        }
        let j = row % self.rx;
        let rest = row / self.rx;
        let t = rest % self.panels;
        let rest = rest / self.panels;
        Ok(RowIndex {
            i: rest / self.symbols,
            k: rest % self.symbols,
            t,
            j,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = RowIndex> + '_ {
        (0..self.len()).map(move |r| self.index(r).expect("in range"))
    }
}

/// Hex SHA-256 over every position and the carrier frequency.
pub fn scene_fingerprint(scene: &Scene) -> String {
    let mut h = Sha256::new();
    h.update(scene.carrier_frequency.to_le_bytes());
    let mut put = |v: crate::scene::Vec3| {
        h.update(v.x.to_le_bytes());
        h.update(v.y.to_le_bytes());
        h.update(v.z.to_le_bytes());
    };
    scene.tx.positions().into_iter().for_each(&mut put);
    scene.rx.positions().into_iter().for_each(&mut put);
    for t in 0..scene.panel_count() {
        scene.ris_elements(t).iter().copied().for_each(&mut put);
    }
    scene.voxels().iter().copied().for_each(&mut put);
    hex::encode(h.finalize())
}

/// The `L × N` matrix mapping voxel coefficients to stacked CSI.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    entries: Array2<Complex64>,
    layout: RowLayout,
    pub scene_fingerprint: String,
    pub schedule_fingerprint: String,
    pub schedule_seed: u64,
}

impl SensingMatrix {
    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn layout(&self) -> RowLayout {
        self.layout
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row(&self, idx: RowIndex) -> Result<ArrayView1<'_, Complex64>> {
        Ok(self.entries.row(self.layout.row(idx)?))
    }

    pub fn column(&self, n: usize) -> ArrayView1<'_, Complex64> {
        self.entries.column(n)
    }

    /// `A · x` for a sparse image.
    pub fn apply(&self, x: &SparseImage) -> Result<Array1<Complex64>> {
        if x.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "image has {} voxels, matrix has {} columns",
                x.len(),
                self.cols()
            )));
        }
        let mut y = Array1::zeros(self.rows());
        for (&n, &v) in x.support().iter().zip(x.values()) {
            y.scaled_add(Complex64::new(v, 0.0), &self.entries.column(n));
        }
        Ok(y)
    }

    /// `A^H A`.
    pub fn gram(&self) -> Array2<Complex64> {
        let ah = self.entries.t().mapv(|z| z.conj());
        ah.dot(&self.entries)
    }

    /// `A^H v`.
    pub fn adjoint_apply(&self, v: ArrayView1<'_, Complex64>) -> Array1<Complex64> {
        adjoint_apply(&self.entries, v)
    }

    /// Writes the raw little-endian `(re, im)` row-major matrix to `path`
    /// and a JSON sidecar to `path` with a `.json` extension appended.
    pub fn export(&self, path: &Path) -> Result<(PathBuf, PathBuf)> {
        use std::io::Write;
        let mut f = crate::io::create_file(path)?;
        let mut buf = Vec::with_capacity(self.cols() * 16);
        for row in self.entries.rows() {
            buf.clear();
            for z in row {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))?;
        let meta = MatrixMetadata {
            rows: self.rows(),
            cols: self.cols(),
            layout: "row-major, complex128 little-endian (re, im)".into(),
            row_order: "((i * K + k) * T + t) * N_RX + j".into(),
            tx: self.layout.tx,
            symbols: self.layout.symbols,
            panels: self.layout.panels,
            rx: self.layout.rx,
            schedule_seed: self.schedule_seed,
            scene_fingerprint: self.scene_fingerprint.clone(),
            schedule_fingerprint: self.schedule_fingerprint.clone(),
        };
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        let side = PathBuf::from(side);
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))?;
        Ok((path.to_path_buf(), side))
    }
}

/// JSON sidecar accompanying an exported matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMetadata {
    pub rows: usize,
    pub cols: usize,
    pub layout: String,
    pub row_order: String,
    pub tx: usize,
    pub symbols: usize,
    pub panels: usize,
    pub rx: usize,
    pub schedule_seed: u64,
    pub scene_fingerprint: String,
    pub schedule_fingerprint: String,
}

/// Reads a matrix written by [`SensingMatrix::export`].
pub fn import_matrix(path: &Path) -> Result<(MatrixMetadata, Array2<Complex64>)> {
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    let side = PathBuf::from(side);
    let meta: MatrixMetadata =
        serde_json::from_str(&std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.rows * meta.cols * 16 {
        return Err(Error::Dimension(format!(
            "{} bytes for a {}x{} complex matrix",
            bytes.len(),
            meta.rows,
            meta.cols
        )));
    }
    let vals: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let m = Array2::from_shape_vec((meta.rows, meta.cols), vals).map_err(|e| Error::Dimension(e.to_string()))?;
    Ok((meta, m))
}

pub(crate) fn adjoint_apply(a: &Array2<Complex64>, v: ArrayView1<'_, Complex64>) -> Array1<Complex64> {
    let mut out = Array1::<Complex64>::zeros(a.ncols());
    let out_s = out.as_slice_mut().expect("contiguous");
    for (row, &vr) in a.rows().into_iter().zip(v.iter()) {
        let row = row.as_slice().expect("row-major matrix");
        for (o, &z) in out_s.iter_mut().zip(row) {
            *o += z.conj() * vr;
        }
    }
    out
}

fn check_consistency(scene: &Scene, schedule: &PhaseSchedule) -> Result<()> {
    if schedule.panel_count() != scene.panel_count() {
        return Err(Error::Dimension(format!(
            "schedule has {} panels, scene has {}",
            schedule.panel_count(),
            scene.panel_count()
        )));
    }
    for (t, p) in scene.ris.iter().enumerate() {
        if schedule.panel(t).ncols() != p.element_count() {
            return Err(Error::Dimension(format!("panel {t} element count differs from schedule")));
        }
    }
    Ok(())
}

/// One row of `A`, evaluated entry by entry from the distance form.
pub fn row_vector(scene: &Scene, schedule: &PhaseSchedule, idx: RowIndex) -> Result<Array1<Complex64>> {
    check_consistency(scene, schedule)?;
    RowLayout::new(scene, schedule).row(idx)?;
    let lambda = scene.wavelength();
    let g = scene.g();
    let tx = scene.tx.element(idx.i);
    let rx = scene.rx.element(idx.j);
    let elements = scene.ris_elements(idx.t);
    let omega = schedule.panel(idx.t).row(idx.k);
    let incident: Vec<Complex64> = elements
        .iter()
        .zip(omega.iter())
        .map(|(&s, &w)| w * fs_unchecked(tx.distance(s), lambda))
        .collect();
    Ok(scene
        .voxels()
        .iter()
        .map(|&v| {
            let sum: Complex64 = elements
                .iter()
                .zip(&incident)
                .map(|(&s, &inc)| inc * fs_unchecked(s.distance(v), lambda))
                .sum();
            sum * fs_unchecked(v.distance(rx), lambda) * g
        })
        .collect())
}

/// Builds `A` with the default memory budget.
pub fn build_sensing_matrix(scene: &Scene, schedule: &PhaseSchedule) -> Result<SensingMatrix> {
    build_sensing_matrix_with_budget(scene, schedule, DEFAULT_MATRIX_BUDGET)
}

/// Panel-by-panel factored assembly: for each panel `t` the phase-weighted
/// TX→element responses `W_t` (`N_TX·K × M_t`) multiply the element→voxel
/// responses `G_t` (`M_t × N`); rows are then scaled by the voxel→RX
/// responses.
pub fn build_sensing_matrix_with_budget(scene: &Scene, schedule: &PhaseSchedule, budget: usize) -> Result<SensingMatrix> {
    check_consistency(scene, schedule)?;
    let layout = RowLayout::new(scene, schedule);
    let (rows, cols) = (layout.len(), scene.voxel_count());
    let entries_count = rows.saturating_mul(cols);
    if entries_count > budget {
        return Err(Error::MemoryBudget {
            rows,
            cols,
            entries: entries_count,
            budget,
        });
    }
    let blocks = panel_blocks(scene, schedule);
    let rx_resp = rx_responses(scene);
    let g = scene.g();
    let mut entries = Array2::<Complex64>::zeros((rows, cols));
    entries
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut out)| {
            let idx = layout.index(r).expect("in range");
            let block_row = blocks[idx.t].row(idx.i * layout.symbols + idx.k);
            let rx_col = rx_resp.column(idx.j);
            for ((o, &b), &h) in out.iter_mut().zip(block_row.iter()).zip(rx_col.iter()) {
                *o = b * h * g;
            }
        });
    Ok(SensingMatrix {
        entries,
        layout,
        scene_fingerprint: scene_fingerprint(scene),
        schedule_fingerprint: schedule.fingerprint(),
        schedule_seed: schedule.seed,
    })
}

/// `W_t · G_t` for every panel (`N_TX·K × N` each, row `i * K + k`).
fn panel_blocks(scene: &Scene, schedule: &PhaseSchedule) -> Vec<Array2<Complex64>> {
    let lambda = scene.wavelength();
    let tx = scene.tx.positions();
    let voxels = scene.voxels();
    let k_count = schedule.symbols();
    (0..scene.panel_count())
        .into_par_iter()
        .map(|t| {
            let elements = scene.ris_elements(t);
            let omega = schedule.panel(t);
            let reflect = Array2::from_shape_fn((elements.len(), voxels.len()), |(m, n)| {
                fs_unchecked(elements[m].distance(voxels[n]), lambda)
            });
            let incident = Array2::from_shape_fn((tx.len() * k_count, elements.len()), |(r, m)| {
                let (i, k) = (r / k_count, r % k_count);
                omega[[k, m]] * fs_unchecked(tx[i].distance(elements[m]), lambda)
            });
            incident.dot(&reflect)
        })
        .collect()
}

/// `N × N_RX` voxel→RX responses.
fn rx_responses(scene: &Scene) -> Array2<Complex64> {
    let lambda = scene.wavelength();
    let rx = scene.rx.positions();
    let voxels = scene.voxels();
    Array2::from_shape_fn((voxels.len(), rx.len()), |(n, j)| fs_unchecked(voxels[n].distance(rx[j]), lambda))
}

/// Sparse real image: sorted support and matching coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseImage {
    len: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

impl SparseImage {
    pub fn new(len: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Dimension("support and values differ in length".into()));
        }
        let mut pairs: Vec<(usize, f64)> = support.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Dimension("duplicate support index".into()));
        }
        if let Some(&(n, _)) = pairs.iter().find(|p| p.0 >= len) {
            return Err(Error::IndexOutOfRange {
                what: "support index",
                index: n,
                len,
            });
        }
        if pairs.iter().any(|p| p.1 == 0.0 || !p.1.is_finite()) {
            return Err(Error::Dimension("support values must be finite and nonzero".into()));
        }
        let (support, values) = pairs.into_iter().unzip();
        Ok(SparseImage { len, support, values })
    }

    pub fn zeros(len: usize) -> Self {
        SparseImage {
            len,
            support: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (support, values) = dense.iter().enumerate().filter(|p| *p.1 != 0.0).map(|(n, &v)| (n, v)).unzip();
        SparseImage {
            len: dense.len(),
            support,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.len];
        for (&n, &v) in self.support.iter().zip(&self.values) {
            d[n] = v;
        }
        d
    }

    /// Largest `|x_n|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len as u64).to_le_bytes());
        for (&n, &v) in self.support.iter().zip(&self.values) {
            h.update((n as u64).to_le_bytes());
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// `S` voxels drawn uniformly without replacement, coefficients Gaussian
/// with the configured mean and variance (negative draws kept).
pub fn draw_ground_truth<R: Rng + ?Sized>(voxels: usize, targets: &TargetConfig, rng: &mut R) -> Result<SparseImage> {
    if targets.sparsity > voxels {
        return Err(Error::Sparsity {
            sparsity: targets.sparsity,
            columns: voxels,
        });
    }
    let normal = Normal::new(targets.mean, targets.variance.sqrt()).map_err(|e| Error::config("targets.variance", e.to_string()))?;
    let support = sample(rng, voxels, targets.sparsity).into_vec();
    let values = support
        .iter()
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v != 0.0 {
                break v;
            }
        })
        .collect();
    SparseImage::new(voxels, support, values)
}

/// Noise powers and the CSI-domain measurement-noise level they induce.
///
/// The receiver noise `σ²_RX` maps to CSI noise of variance
/// `σ²_RX · N_TX / P_TX` (transmit power split evenly across antennas), so
/// `γ = P_TX / (N_TX (σ²_RX + P_amp))` where `P_amp` is an optional
/// amplifier-noise power at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2_rx: f64,
    pub sigma2_ris: f64,
    pub tx_power: f64,
    pub tx_antennas: usize,
    pub amplifier_power: f64,
}

impl NoiseModel {
    pub fn new(sigma2_rx: f64, sigma2_ris: f64, tx_power: f64, tx_antennas: usize) -> Result<Self> {
        if !(sigma2_rx >= 0.0) || !(sigma2_ris >= 0.0) {
            return Err(Error::config("noise", "noise powers must be non-negative"));
        }
        if !(tx_power > 0.0) {
            return Err(Error::config("noise.tx_power_dbm", "transmit power must be positive"));
        }
        if tx_antennas == 0 {
            return Err(Error::config("tx.elements", "must be at least 1"));
        }
        Ok(NoiseModel {
            sigma2_rx,
            sigma2_ris,
            tx_power,
            tx_antennas,
            amplifier_power: 0.0,
        })
    }

    pub fn with_amplifier_power(mut self, p: f64) -> Self {
        self.amplifier_power = p;
        self
    }

    pub fn with_tx_power(mut self, p: f64) -> Self {
        self.tx_power = p;
        self
    }

    /// Amplitude factor from received-signal units to CSI units.
    pub fn csi_scale(&self) -> f64 {
        (self.tx_antennas as f64 / self.tx_power).sqrt()
    }

    /// CSI variance of the receiver-noise part alone.
    pub fn receiver_variance(&self) -> f64 {
        self.sigma2_rx * self.tx_antennas as f64 / self.tx_power
    }

    /// `σ²_eff`.
    pub fn effective_variance(&self) -> f64 {
        (self.sigma2_rx + self.amplifier_power) * self.tx_antennas as f64 / self.tx_power
    }

    /// `γ = 1 / σ²_eff`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.effective_variance()
    }
}

/// Precomputed RIS→ROI→RX weights for the amplifier-noise term:
/// `q[t][j][m] = Σ_n fs(d[s_tm, v_n]) · x_n · fs(d[v_n, RX_j])`.
#[derive(Debug, Clone)]
pub struct AmplifierPath {
    weights: Vec<Array2<Complex64>>,
    schedule: PhaseSchedule,
    sigma2_ris: f64,
}

impl AmplifierPath {
    pub fn new(scene: &Scene, schedule: &PhaseSchedule, x: &SparseImage, sigma2_ris: f64) -> Result<Self> {
        if schedule.mode != RisMode::Aris {
            return Err(Error::Mode { expected: "ARIS" });
        }
        check_consistency(scene, schedule)?;
        if x.len() != scene.voxel_count() {
            return Err(Error::Dimension("image size differs from voxel count".into()));
        }
        let lambda = scene.wavelength();
        let voxels = scene.voxels();
        let rx = scene.rx.positions();
        let scatter: Vec<(usize, Vec<Complex64>)> = x
            .support()
            .iter()
            .zip(x.values())
            .map(|(&n, &v)| {
                let row = rx.iter().map(|&r| fs_unchecked(voxels[n].distance(r), lambda) * v).collect();
                (n, row)
            })
            .collect();
        let weights = (0..scene.panel_count())
            .map(|t| {
                let elements = scene.ris_elements(t);
                let mut w = Array2::<Complex64>::zeros((rx.len(), elements.len()));
                for (n, row) in &scatter {
                    for (m, &s) in elements.iter().enumerate() {
                        let h = fs_unchecked(s.distance(voxels[*n]), lambda);
                        for (j, &r) in row.iter().enumerate() {
                            w[[j, m]] += h * r;
                        }
                    }
                }
                w
            })
            .collect();
        Ok(AmplifierPath {
            weights,
            schedule: schedule.clone(),
            sigma2_ris,
        })
    }

    /// Draws `z[k,t] ~ CN(0, σ²_RIS I)` and returns `z^ari` for every `j`.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, t: usize, rng: &mut R) -> Vec<Complex64> {
        let omega = self.schedule.panel(t).row(k);
        let w = &self.weights[t];
        let sd = (self.sigma2_ris / 2.0).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); w.nrows()];
        for (m, &om) in omega.iter().enumerate() {
            let z = Complex64::new(rng.sample::<f64, _>(StandardNormal) * sd, rng.sample::<f64, _>(StandardNormal) * sd) * om;
            for (o, q) in out.iter_mut().zip(w.column(m)) {
                *o += z * q;
            }
        }
        out
    }

    /// Mean `E|z^ari|²` over `(k, t, j)` in closed form.
    pub fn expected_power(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (t, w) in self.weights.iter().enumerate() {
            let panel = self.schedule.panel(t);
            for k in 0..panel.nrows() {
                for j in 0..w.nrows() {
                    total += panel
                        .row(k)
                        .iter()
                        .zip(w.row(j))
                        .map(|(om, q)| om.norm_sqr() * q.norm_sqr())
                        .sum::<f64>()
                        * self.sigma2_ris;
                    count += 1;
                }
            }
        }
        total / count as f64
    }
}

/// One realization of the amplifier-noise term reaching RX antenna `j`
/// from panel `t` during symbol `k`.
pub fn aris_noise_sample(
    scene: &Scene,
    schedule: &PhaseSchedule,
    x: &SparseImage,
    sigma2_ris: f64,
    k: usize,
    t: usize,
    j: usize,
    seed: u64,
) -> Result<Complex64> {
    let path = AmplifierPath::new(scene, schedule, x, sigma2_ris)?;
    RowLayout::new(scene, schedule).row(RowIndex { i: 0, k, t, j })?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(path.sample(k, t, &mut rng)[j])
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    Complex64::new(rng.sample::<f64, _>(StandardNormal) * sd, rng.sample::<f64, _>(StandardNormal) * sd)
}

/// One amplifier-noise realization for every measurement row, in received
/// signal units. Each `(k, t)` draw is shared by all TX antennas `i`.
pub fn amplifier_rows<R: Rng + ?Sized>(path: &AmplifierPath, layout: RowLayout, rng: &mut R) -> Result<Array1<Complex64>> {
    let mut out = Array1::zeros(layout.len());
    for k in 0..layout.symbols {
        for t in 0..layout.panels {
            let z = path.sample(k, t, rng);
            if z.len() != layout.rx {
                return Err(Error::Dimension("amplifier path and layout differ in RX count".into()));
            }
            for i in 0..layout.tx {
                for (j, &zj) in z.iter().enumerate() {
                    out[layout.flat(RowIndex { i, k, t, j })] = zj;
                }
            }
        }
    }
    Ok(out)
}

/// Stacked CSI `y = A x + n` plus provenance.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub y: Array1<Complex64>,
    pub layout: RowLayout,
    pub seed: u64,
    pub noise: NoiseModel,
    pub image_fingerprint: String,
}

impl MeasurementSet {
    pub fn export_csv(&self, path: &Path, provenance: &Provenance) -> Result<PathBuf> {
        let mut prov = provenance.clone();
        prov.push("noise_seed", self.seed);
        prov.push("image_fingerprint", &self.image_fingerprint);
        let rows = self.y.iter().enumerate().map(|(r, z)| {
            let idx = self.layout.index(r).expect("in range");
            vec![
                r.to_string(),
                idx.i.to_string(),
                idx.k.to_string(),
                idx.t.to_string(),
                idx.j.to_string(),
                fmt_f64(z.re),
                fmt_f64(z.im),
            ]
        });
        write_csv(path, &prov, &["row_index", "i", "k", "t", "j", "re", "im"], rows)
    }
}

/// Adds circularly-symmetric receiver noise (and, when `amplifier` is given,
/// explicit ARIS amplifier-noise realizations mapped into CSI units) to `A x`.
///
/// Receiver noise uses ChaCha20 stream 0 of `seed`; amplifier noise uses
/// stream 1. The amplifier term depends on `(k, t, j)` only and is shared
/// by every TX antenna `i`.
pub fn synthesize_measurements(
    matrix: &SensingMatrix,
    x: &SparseImage,
    noise: &NoiseModel,
    amplifier: Option<&AmplifierPath>,
    seed: u64,
) -> Result<MeasurementSet> {
    let mut y = matrix.apply(x)?;
    let layout = matrix.layout();
    let var = noise.receiver_variance();
    if var > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(0);
        for v in y.iter_mut() {
            *v += complex_normal(&mut rng, var);
        }
    }
    if let Some(path) = amplifier {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(1);
        y.scaled_add(Complex64::new(noise.csi_scale(), 0.0), &amplifier_rows(path, layout, &mut rng)?);
    }
    Ok(MeasurementSet {
        y,
        layout,
        seed,
        noise: *noise,
        image_fingerprint: x.fingerprint(),
    })
}

/// Brute-force `g · h_TXi,st^T · Φ_kt · H_st,v · diag(x) · h_v,RXj`, summed
/// element by element with freshly computed channels.
pub fn naive_path_gain(scene: &Scene, schedule: &PhaseSchedule, x: &SparseImage, idx: RowIndex) -> Result<Complex64> {
    check_consistency(scene, schedule)?;
    RowLayout::new(scene, schedule).row(idx)?;
    let lambda = scene.wavelength();
    let elements = scene.ris_elements(idx.t);
    let h_tx = crate::channel::link_vector(scene.tx.element(idx.i), elements, lambda)?;
    let h_rx = crate::channel::link_vector(scene.rx.element(idx.j), scene.voxels(), lambda)?;
    let dense = x.dense();
    let mut total = Complex64::new(0.0, 0.0);
    for (m, &s) in elements.iter().enumerate() {
        let h_sv = crate::channel::link_vector(s, scene.voxels(), lambda)?;
        let inner: Complex64 = h_sv
            .iter()
            .zip(&dense)
            .zip(&h_rx)
            .map(|((&h, &xn), &r)| h * xn * r)
            .sum();
        total += h_tx[m] * schedule.coefficient(idx.k, idx.t, m) * inner;
    }
    Ok(total * scene.g())
}

/// One row of the amplifier-vs-receiver noise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePowerRow {
    pub height: f64,
    pub amplifier_dbm: f64,
    pub receiver_dbm: f64,
}

/// Monte-Carlo average powers of `z^ari` and `v` at the receiver for each
/// ROI height, averaging over the supplied images and fresh noise draws.
pub fn noise_power_report(
    scene: &Scene,
    schedule: &PhaseSchedule,
    images: &[SparseImage],
    heights: &[f64],
    sigma2_rx: f64,
    sigma2_ris: f64,
    seed: u64,
) -> Result<Vec<NoisePowerRow>> {
    if schedule.mode != RisMode::Aris {
        return Err(Error::Mode { expected: "ARIS" });
    }
    if images.is_empty() {
        return Err(Error::Empty("noise report images"));
    }
    heights
        .iter()
        .enumerate()
        .map(|(h_idx, &height)| {
            let scene_h = scene.with_roi_height(height)?;
            let layout = RowLayout::new(&scene_h, schedule);
            let (mut amp, mut rec, mut count) = (0.0, 0.0, 0usize);
            for (trial, x) in images.iter().enumerate() {
                let path = AmplifierPath::new(&scene_h, schedule, x, sigma2_ris)?;
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(((h_idx as u64) << 32) | trial as u64);
                for k in 0..layout.symbols {
                    for t in 0..layout.panels {
                        for z in path.sample(k, t, &mut rng) {
                            amp += z.norm_sqr();
                            rec += complex_normal(&mut rng, sigma2_rx).norm_sqr();
                            count += 1;
                        }
                    }
                }
            }
            Ok(NoisePowerRow {
                height,
                amplifier_dbm: watts_to_dbm(amp / count as f64),
                receiver_dbm: watts_to_dbm(rec / count as f64),
            })
        })
        .collect()
}
