//! Array layout, ROI discretization and the deterministic channel tables.
//!
//! Cells are numbered row-major starting at the top-left corner of the ROI:
//! row 0 has the largest `y`, column 0 the smallest `x`.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::linalg::cis;
use crate::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Direction along which an array's elements are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayAxis {
    #[default]
    X,
    Y,
}

impl ArrayAxis {
    fn unit(self) -> (f64, f64) {
        match self {
            ArrayAxis::X => (1.0, 0.0),
            ArrayAxis::Y => (0.0, 1.0),
        }
    }
}

/// Scenario parameters from which a [`SceneGeometry`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub tx_center: [f64; 2],
    pub rx_center: [f64; 2],
    pub m_tx: usize,
    pub m_rx: usize,
    /// Element spacing in metres; half a carrier wavelength when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub roi_center: [f64; 2],
    pub roi_side: f64,
    pub cells_per_side: usize,
    pub array_axis: ArrayAxis,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            tx_center: [0.0, 20.0],
            rx_center: [0.0, -20.0],
            m_tx: 100,
            m_rx: 100,
            spacing: None,
            carrier_hz: 50e9,
            subcarrier_spacing_hz: 1e6,
            n_subcarriers: 4,
            roi_center: [0.0, 0.0],
            roi_side: DEFAULT_ROI_SIDE,
            cells_per_side: 20,
            array_axis: ArrayAxis::X,
        }
    }
}

/// Default ROI side length (m).
pub const DEFAULT_ROI_SIDE: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub tx_center: Point2,
    pub rx_center: Point2,
    pub m_tx: usize,
    pub m_rx: usize,
    pub spacing: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub roi_center: Point2,
    pub roi_side: f64,
    pub cells_per_side: usize,
    pub array_axis: ArrayAxis,
    pub tx_elements: Vec<Point2>,
    pub rx_elements: Vec<Point2>,
    pub cell_centers: Vec<Point2>,
}

impl SceneGeometry {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    pub fn cell_pitch(&self) -> f64 {
        self.roi_side / self.cells_per_side as f64
    }

    /// (row, column) of a flat cell index.
    pub fn cell_row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.cells_per_side, cell % self.cells_per_side)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

/// Element positions of a ULA centred on `center`.
pub fn ula_elements(center: Point2, count: usize, spacing: f64, axis: ArrayAxis) -> Vec<Point2> {
    let (ux, uy) = axis.unit();
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|m| {
            let off = (m as f64 - mid) * spacing;
            Point2::new(center.x + off * ux, center.y + off * uy)
        })
        .collect()
}

/// Centres of a `side x side` grid over a square of length `len`, row-major from the top-left.
pub fn grid_centers(center: Point2, len: f64, side: usize) -> Vec<Point2> {
    let pitch = len / side as f64;
    let x0 = center.x - len / 2.0;
    let y0 = center.y + len / 2.0;
    let mut out = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            out.push(Point2::new(
                x0 + (c as f64 + 0.5) * pitch,
                y0 - (r as f64 + 0.5) * pitch,
            ));
        }
    }
    out
}

pub fn build_geometry(cfg: &GeometryConfig) -> Result<SceneGeometry> {
    at_least_one("m_tx", cfg.m_tx)?;
    at_least_one("m_rx", cfg.m_rx)?;
    at_least_one("cells_per_side", cfg.cells_per_side)?;
    at_least_one("n_subcarriers", cfg.n_subcarriers)?;
    positive("carrier_hz", cfg.carrier_hz)?;
    positive("subcarrier_spacing_hz", cfg.subcarrier_spacing_hz)?;
    positive("roi_side", cfg.roi_side)?;
    for (name, p) in [
        ("tx_center", cfg.tx_center),
        ("rx_center", cfg.rx_center),
        ("roi_center", cfg.roi_center),
    ] {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("{name} must be finite")));
        }
    }
    let wavelength = SPEED_OF_LIGHT / cfg.carrier_hz;
    let spacing = cfg.spacing.unwrap_or(wavelength / 2.0);
    positive("spacing", spacing)?;

    let tx_center = Point2::new(cfg.tx_center[0], cfg.tx_center[1]);
    let rx_center = Point2::new(cfg.rx_center[0], cfg.rx_center[1]);
    let roi_center = Point2::new(cfg.roi_center[0], cfg.roi_center[1]);
    Ok(SceneGeometry {
        tx_center,
        rx_center,
        m_tx: cfg.m_tx,
        m_rx: cfg.m_rx,
        spacing,
        carrier_hz: cfg.carrier_hz,
        subcarrier_spacing_hz: cfg.subcarrier_spacing_hz,
        n_subcarriers: cfg.n_subcarriers,
        roi_center,
        roi_side: cfg.roi_side,
        cells_per_side: cfg.cells_per_side,
        array_axis: cfg.array_axis,
        tx_elements: ula_elements(tx_center, cfg.m_tx, spacing, cfg.array_axis),
        rx_elements: ula_elements(rx_center, cfg.m_rx, spacing, cfg.array_axis),
        cell_centers: grid_centers(roi_center, cfg.roi_side, cfg.cells_per_side),
    })
}

fn nonzero_distance(a: Point2, b: Point2) -> Result<f64> {
    let d = a.distance(b);
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(Error::Geometry(format!(
            "cell ({}, {}) coincides with an array position",
            b.x, b.y
        )))
    }
}

/// Near-field steering vector with entries `exp(-j 2 pi d_m / lambda)`.
pub fn steering_vector(elements: &[Point2], cell: Point2, wavelength: f64) -> Result<Vec<c64>> {
    positive("wavelength", wavelength)?;
    let k = -2.0 * std::f64::consts::PI / wavelength;
    elements
        .iter()
        .map(|&e| Ok(cis(k * nonzero_distance(e, cell)?)))
        .collect()
}

/// Two-way pathloss amplitude using the array-centre distances.
pub fn pathloss(cell: Point2, tx_center: Point2, rx_center: Point2, wavelength: f64) -> Result<f64> {
    positive("wavelength", wavelength)?;
    let dt = nonzero_distance(tx_center, cell)?;
    let dr = nonzero_distance(rx_center, cell)?;
    let four_pi = 4.0 * std::f64::consts::PI;
    Ok(wavelength / (four_pi.powf(1.5) * dt * dr))
}

/// Round-trip delay (s) from the Tx centre via `cell` to the Rx centre.
pub fn round_trip_delay(cell: Point2, geometry: &SceneGeometry) -> f64 {
    (geometry.tx_center.distance(cell) + geometry.rx_center.distance(cell)) / SPEED_OF_LIGHT
}

/// Delay phase of subcarrier `n` (0-based; subcarrier 0 is the reference and has zero phase).
pub fn delay_phase(cell: Point2, n: usize, geometry: &SceneGeometry) -> Result<c64> {
    if n >= geometry.n_subcarriers {
        return Err(Error::Index {
            index: n,
            len: geometry.n_subcarriers,
        });
    }
    let tau = round_trip_delay(cell, geometry);
    Ok(cis(-2.0
        * std::f64::consts::PI
        * n as f64
        * tau
        * geometry.subcarrier_spacing_hz))
}

/// Deterministic channel ingredients for every ROI cell.
#[derive(Debug, Clone)]
pub struct ChannelTables {
    /// `M_r x Q`, column `q` is the Rx steering vector of cell `q`.
    pub a_matrix: Mat<c64>,
    /// `Q x M_t`, row `q` is the conjugate-transposed Tx steering vector of cell `q`.
    pub b_matrix: Mat<c64>,
    pub eta: Vec<f64>,
    /// `Q x N`, column `n` holds the delay phases of subcarrier `n`.
    pub delay_phases: Mat<c64>,
}

impl ChannelTables {
    pub fn n_cells(&self) -> usize {
        self.eta.len()
    }

    pub fn m_rx(&self) -> usize {
        self.a_matrix.nrows()
    }

    pub fn m_tx(&self) -> usize {
        self.b_matrix.ncols()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.delay_phases.ncols()
    }

    /// `A / sqrt(M_r)`, whose columns have unit norm.
    pub fn a_normalized(&self) -> Mat<c64> {
        let s = 1.0 / (self.m_rx() as f64).sqrt();
        Mat::from_fn(self.a_matrix.nrows(), self.a_matrix.ncols(), |i, j| {
            self.a_matrix[(i, j)] * s
        })
    }

    /// Tx steering vector `b(r_q)` (the conjugate of row `q` of `B`).
    pub fn b_vector(&self, q: usize) -> Vec<c64> {
        (0..self.m_tx()).map(|m| self.b_matrix[(q, m)].conj()).collect()
    }

    /// Delay-phase row of cell `q` across subcarriers.
    pub fn delay_row(&self, q: usize) -> Vec<c64> {
        (0..self.n_subcarriers()).map(|n| self.delay_phases[(q, n)]).collect()
    }

    /// Submatrix of the listed columns of `A diag(eta)`.
    pub fn weighted_a_columns(&self, cells: &[usize], normalized: bool) -> Mat<c64> {
        let s = if normalized {
            1.0 / (self.m_rx() as f64).sqrt()
        } else {
            1.0
        };
        Mat::from_fn(self.m_rx(), cells.len(), |i, j| {
            self.a_matrix[(i, cells[j])] * (self.eta[cells[j]] * s)
        })
    }
}

pub fn build_channel_tables(geometry: &SceneGeometry) -> Result<ChannelTables> {
    let lambda = geometry.wavelength();
    let q = geometry.n_cells();
    let mut a_matrix = Mat::<c64>::zeros(geometry.m_rx, q);
    let mut b_matrix = Mat::<c64>::zeros(q, geometry.m_tx);
    let mut eta = Vec::with_capacity(q);
    let mut delay_phases = Mat::<c64>::zeros(q, geometry.n_subcarriers);
    for (i, &cell) in geometry.cell_centers.iter().enumerate() {
        let a = steering_vector(&geometry.rx_elements, cell, lambda)?;
        for (m, v) in a.into_iter().enumerate() {
            a_matrix[(m, i)] = v;
        }
        let b = steering_vector(&geometry.tx_elements, cell, lambda)?;
        for (m, v) in b.into_iter().enumerate() {
            b_matrix[(i, m)] = v.conj();
        }
        eta.push(pathloss(cell, geometry.tx_center, geometry.rx_center, lambda)?);
        for n in 0..geometry.n_subcarriers {
            delay_phases[(i, n)] = delay_phase(cell, n, geometry)?;
        }
    }
    Ok(ChannelTables {
        a_matrix,
        b_matrix,
        eta,
        delay_phases,
    })
}
