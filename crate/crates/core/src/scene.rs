//! Geometry of the imaging scenario: antenna arrays, horizontal RIS panels and
//! the voxelized region of interest.
//!
//! Voxels are indexed row-major over `(z, y, x)`:
//! `n = (iz * ny + iy) * nx + ix`, so `x` varies fastest.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A point or displacement in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn distance_sq(self, other: Vec3) -> f64 {
        (self - other).norm_sq()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Reflection across the `x = 0` plane.
    pub fn mirror_x(self) -> Self {
        Vec3::new(-self.x, self.y, self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayRole {
    Tx,
    Rx,
}

/// A linear antenna array described by its center and per-element offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaArray {
    pub center: Vec3,
    pub element_offsets: Vec<Vec3>,
    pub role: ArrayRole,
}

impl AntennaArray {
    /// `count` elements spaced `spacing` apart along the x-axis, centered at `center`.
    pub fn linear_x(center: Vec3, count: usize, spacing: f64, role: ArrayRole) -> Result<Self> {
        let key = match role {
            ArrayRole::Tx => "tx",
            ArrayRole::Rx => "rx",
        };
        if count == 0 {
            return Err(Error::config(format!("{key}.elements"), "must be at least 1"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::config(format!("{key}.spacing"), "must be positive"));
        }
        if !center.is_finite() {
            return Err(Error::config(format!("{key}.center"), "must be finite"));
        }
        let mid = (count as f64 - 1.0) / 2.0;
        let element_offsets = (0..count)
            .map(|i| Vec3::new((i as f64 - mid) * spacing, 0.0, 0.0))
            .collect();
        Ok(AntennaArray {
            center,
            element_offsets,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.element_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_offsets.is_empty()
    }

    pub fn element(&self, i: usize) -> Vec3 {
        self.center + self.element_offsets[i]
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.element_offsets.iter().map(|&o| self.center + o).collect()
    }

    pub fn recentered(&self, center: Vec3) -> Self {
        AntennaArray {
            center,
            ..self.clone()
        }
    }
}

/// A horizontal RIS panel: `rows x cols` elements on a square lattice in the
/// x–y plane. Element `m = r * cols + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPanel {
    pub center: Vec3,
    pub rows: usize,
    pub cols: usize,
    pub element_spacing: f64,
}

impl RisPanel {
    pub fn new(center: Vec3, rows: usize, cols: usize, element_spacing: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config("ris.panels.rows/cols", "must be at least 1"));
        }
        if !(element_spacing > 0.0) || !element_spacing.is_finite() {
            return Err(Error::config("ris.panels.spacing", "must be positive"));
        }
        if !center.is_finite() {
            return Err(Error::config("ris.panels.center", "must be finite"));
        }
        Ok(RisPanel {
            center,
            rows,
            cols,
            element_spacing,
        })
    }

    /// Number of elements `M_t`.
    pub fn element_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn element_position(&self, m: usize) -> Result<Vec3> {
        let len = self.element_count();
        if m >= len {
            return Err(Error::IndexOutOfRange {
                what: "RIS element",
                index: m,
                len,
            });
        }
        Ok(self.element_unchecked(m))
    }

    fn element_unchecked(&self, m: usize) -> Vec3 {
        let (r, c) = (m / self.cols, m % self.cols);
        let dx = (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.element_spacing;
        let dy = (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.element_spacing;
        self.center + Vec3::new(dx, dy, 0.0)
    }

    pub fn element_positions(&self) -> Vec<Vec3> {
        (0..self.element_count())
            .map(|m| self.element_unchecked(m))
            .collect()
    }

    pub fn recentered(&self, center: Vec3) -> Self {
        RisPanel {
            center,
            ..self.clone()
        }
    }
}

/// Element position on a panel lattice.
pub fn ris_element_position(panel: &RisPanel, m: usize) -> Result<Vec3> {
    panel.element_position(m)
}

/// Axis-aligned voxel grid centered at `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiGrid {
    pub center: Vec3,
    pub extent: [f64; 3],
    pub counts: [usize; 3],
}

impl RoiGrid {
    pub fn new(center: Vec3, extent: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::config("roi.counts", "every count must be at least 1"));
        }
        if extent.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::config("roi.extent", "every extent must be positive"));
        }
        if !center.is_finite() {
            return Err(Error::config("roi.center", "must be finite"));
        }
        Ok(RoiGrid {
            center,
            extent,
            counts,
        })
    }

    /// Total voxel count `N = nx * ny * nz`.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Height of the ROI center.
    pub fn height(&self) -> f64 {
        self.center.z
    }

    pub fn cell_size(&self) -> [f64; 3] {
        [
            self.extent[0] / self.counts[0] as f64,
            self.extent[1] / self.counts[1] as f64,
            self.extent[2] / self.counts[2] as f64,
        ]
    }

    /// `(ix, iy, iz)` of voxel `n`.
    pub fn voxel_coords(&self, n: usize) -> Result<[usize; 3]> {
        let len = self.len();
        if n >= len {
            return Err(Error::IndexOutOfRange {
                what: "voxel",
                index: n,
                len,
            });
        }
        let [nx, ny, _] = self.counts;
        Ok([n % nx, (n / nx) % ny, n / (nx * ny)])
    }

    pub fn voxel_index(&self, ix: usize, iy: usize, iz: usize) -> Result<usize> {
        let [nx, ny, nz] = self.counts;
        if ix >= nx || iy >= ny || iz >= nz {
            return Err(Error::IndexOutOfRange {
                what: "voxel coordinate",
                index: ix.max(iy).max(iz),
                len: nx.min(ny).min(nz),
            });
        }
        Ok((iz * ny + iy) * nx + ix)
    }

    pub fn voxel_center(&self, n: usize) -> Result<Vec3> {
        let c = self.voxel_coords(n)?;
        let cell = self.cell_size();
        let coord = |axis: usize, origin: f64| {
            origin - self.extent[axis] / 2.0 + (c[axis] as f64 + 0.5) * cell[axis]
        };
        Ok(Vec3::new(
            coord(0, self.center.x),
            coord(1, self.center.y),
            coord(2, self.center.z),
        ))
    }

    pub fn voxel_centers(&self) -> Vec<Vec3> {
        (0..self.len())
            .map(|n| self.voxel_center(n).expect("index in range"))
            .collect()
    }

    /// Index of the voxel whose center is the x-mirror of voxel `n`'s center.
    pub fn mirror_x_index(&self, n: usize) -> Result<usize> {
        let [ix, iy, iz] = self.voxel_coords(n)?;
        self.voxel_index(self.counts[0] - 1 - ix, iy, iz)
    }

    pub fn at_height(&self, height: f64) -> Self {
        RoiGrid {
            center: Vec3::new(self.center.x, self.center.y, height),
            ..self.clone()
        }
    }
}

/// Center of voxel `n` under the documented row-major `(z, y, x)` mapping.
pub fn voxel_center(roi: &RoiGrid, n: usize) -> Result<Vec3> {
    roi.voxel_center(n)
}

/// Full scenario geometry and RF constants. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tx: AntennaArray,
    pub rx: AntennaArray,
    pub ris: Vec<RisPanel>,
    pub roi: RoiGrid,
    pub carrier_frequency: f64,
    wavelength: f64,
    voxels: Vec<Vec3>,
    ris_elements: Vec<Vec<Vec3>>,
}

impl Scene {
    pub fn new(
        tx: AntennaArray,
        rx: AntennaArray,
        ris: Vec<RisPanel>,
        roi: RoiGrid,
        carrier_frequency: f64,
    ) -> Result<Self> {
        if !(carrier_frequency > 0.0) || !carrier_frequency.is_finite() {
            return Err(Error::config("frequency_hz", "must be positive"));
        }
        let roi_floor = roi.center.z - roi.extent[2] / 2.0;
        if let Some(i) = ris.iter().position(|p| p.center.z >= roi_floor) {
            return Err(Error::config(
                format!("ris.panels[{i}].center"),
                "panel must lie below the ROI",
            ));
        }
        let voxels = roi.voxel_centers();
        let ris_elements = ris.iter().map(RisPanel::element_positions).collect();
        Ok(Scene {
            tx,
            rx,
            ris,
            roi,
            carrier_frequency,
            wavelength: SPEED_OF_LIGHT / carrier_frequency,
            voxels,
            ris_elements,
        })
    }

    /// Wavelength `λ = c / f`.
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Aperture constant `g = λ / √(4π)`.
    pub fn g(&self) -> f64 {
        self.wavelength / (4.0 * std::f64::consts::PI).sqrt()
    }

    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    pub fn voxels(&self) -> &[Vec3] {
        &self.voxels
    }

    pub fn panel_count(&self) -> usize {
        self.ris.len()
    }

    pub fn ris_elements(&self, t: usize) -> &[Vec3] {
        &self.ris_elements[t]
    }

    pub fn total_ris_elements(&self) -> usize {
        self.ris.iter().map(RisPanel::element_count).sum()
    }

    /// Number of stacked CSI measurements `L = K * T * N_TX * N_RX` for `k` symbols.
    pub fn measurement_count(&self, symbols: usize) -> usize {
        symbols * self.ris.len() * self.tx.len() * self.rx.len()
    }

    fn rebuilt(&self, tx: AntennaArray, rx: AntennaArray, ris: Vec<RisPanel>, roi: RoiGrid) -> Result<Self> {
        Scene::new(tx, rx, ris, roi, self.carrier_frequency)
    }

    pub fn with_rx_center(&self, center: Vec3) -> Result<Self> {
        self.rebuilt(self.tx.clone(), self.rx.recentered(center), self.ris.clone(), self.roi.clone())
    }

    pub fn with_tx_center(&self, center: Vec3) -> Result<Self> {
        self.rebuilt(self.tx.recentered(center), self.rx.clone(), self.ris.clone(), self.roi.clone())
    }

    pub fn with_roi_height(&self, height: f64) -> Result<Self> {
        self.rebuilt(self.tx.clone(), self.rx.clone(), self.ris.clone(), self.roi.at_height(height))
    }

    /// Recenters panels onto the symmetric layout `[±d, ±d, z]`, keeping
    /// each panel's height and its quadrant. Panels sitting on an axis keep
    /// that coordinate at zero.
    pub fn with_ris_half_spacing(&self, d: f64) -> Result<Self> {
        let ris = self
            .ris
            .iter()
            .map(|p| {
                let c = p.center;
                p.recentered(Vec3::new(signed(c.x, d), signed(c.y, d), c.z))
            })
            .collect();
        self.rebuilt(self.tx.clone(), self.rx.clone(), ris, self.roi.clone())
    }
}

fn signed(reference: f64, magnitude: f64) -> f64 {
    if reference > 0.0 {
        magnitude
    } else if reference < 0.0 {
        -magnitude
    } else {
        0.0
    }
}

/// Materializes the scene described by `config`.
pub fn build_scene(config: &ScenarioConfig) -> Result<Scene> {
    config.build_scene()
}
