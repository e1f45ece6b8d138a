//! Shared domain types: points, scans, clouds, the target state and the
//! covariance checks every estimator relies on.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Dim, Matrix, Storage, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used for covariance symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// One LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Reflectivity in `[0, 1]`.
    pub intensity: f64,
    /// Absolute acquisition time of this return, seconds.
    pub t: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64, t: f64) -> Self {
        Self { x, y, z, intensity, t }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.t.is_finite()
    }
}

/// A single base frame of the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub seq: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub points: Vec<Point>,
}

impl Scan {
    /// Checks the time bounds and per-point invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_start > self.t_end {
            return Err(Error::Domain(format!(
                "scan {} has invalid time bounds [{}, {}]",
                self.seq, self.t_start, self.t_end
            )));
        }
        for p in &self.points {
            if !p.is_finite() {
                return Err(Error::Domain(format!("scan {} holds a non-finite point", self.seq)));
            }
            if p.t < self.t_start || p.t > self.t_end {
                return Err(Error::Domain(format!(
                    "scan {} point time {} outside [{}, {}]",
                    self.seq, p.t, self.t_start, self.t_end
                )));
            }
        }
        Ok(())
    }
}

/// Checks that a stream of scans has strictly increasing `seq` and
/// non-decreasing `t_start`.
pub fn validate_stream(scans: &[Scan]) -> Result<()> {
    for pair in scans.windows(2) {
        if pair[1].seq <= pair[0].seq {
            return Err(Error::Sequencing { expected: pair[0].seq + 1, got: pair[1].seq });
        }
        if pair[1].t_start < pair[0].t_start {
            return Err(Error::Domain(format!(
                "scan {} starts before its predecessor",
                pair[1].seq
            )));
        }
    }
    Ok(())
}

/// Points accumulated over a window of consecutive scans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    /// `(first_seq, last_seq)` of the contributing scans, inclusive.
    pub window: (u64, u64),
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of scans in the window.
    pub fn span(&self) -> u64 {
        self.window.1 - self.window.0 + 1
    }
}

/// Kinematic state of the target: `[x y z v z_dot psi psi_dot]`.
///
/// `v` is planar speed along heading `psi`; vertical motion lives only in
/// `z_dot`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub z_dot: f64,
    pub psi: f64,
    pub psi_dot: f64,
}

impl UavState {
    pub const DIM: usize = 7;

    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self { x: position.x, y: position.y, z: position.z, ..Self::default() }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Cartesian velocity implied by speed, heading and vertical rate.
    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.v * self.psi.cos(), self.v * self.psi.sin(), self.z_dot)
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.v, self.z_dot, self.psi, self.psi_dot]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self { x: a[0], y: a[1], z: a[2], v: a[3], z_dot: a[4], psi: a[5], psi_dot: a[6] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Physical extent of the tracked object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// `(length, width, height)` in meters, aligned with the sensor axes.
    pub dims: [f64; 3],
}

impl TargetSpec {
    pub fn new(dims: [f64; 3]) -> Result<Self> {
        let spec = Self { dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cube(side: f64) -> Self {
        Self { dims: [side; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!("target dims must be positive, got {:?}", self.dims)))
        }
    }

    /// Association radius: half of the largest dimension.
    pub fn search_radius(&self) -> f64 {
        self.dims.iter().cloned().fold(0.0, f64::max) / 2.0
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::new(self.dims[0], self.dims[1], self.dims[2]) / 2.0
    }
}

/// Outcome of [`validate_covariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceCheck {
    pub symmetric: bool,
    pub positive_definite: bool,
    /// Largest `|m_ij - m_ji|` relative to the largest absolute entry.
    pub max_asymmetry: f64,
}

impl CovarianceCheck {
    pub fn is_valid(&self) -> bool {
        self.symmetric && self.positive_definite
    }
}

/// Checks symmetry (relative [`SYMMETRY_TOL`]) and positive definiteness
/// via Cholesky.
pub fn validate_covariance<R: Dim, C: Dim, S: Storage<f64, R, C>>(
    m: &Matrix<f64, R, C, S>,
) -> Result<CovarianceCheck> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::Dimension(format!("covariance must be square, got {rows}x{cols}")));
    }
    let dense = DMatrix::from_iterator(rows, cols, m.iter().cloned());
    if dense.iter().any(|v| !v.is_finite()) {
        return Ok(CovarianceCheck {
            symmetric: false,
            positive_definite: false,
            max_asymmetry: f64::INFINITY,
        });
    }
    let scale = dense.amax().max(f64::MIN_POSITIVE);
    let mut asym = 0.0f64;
    for i in 0..rows {
        for j in (i + 1)..cols {
            asym = asym.max((dense[(i, j)] - dense[(j, i)]).abs());
        }
    }
    let max_asymmetry = asym / scale;
    let symmetric = max_asymmetry <= SYMMETRY_TOL;
    let positive_definite = rows > 0 && symmetric && dense.cholesky().is_some();
    Ok(CovarianceCheck { symmetric, positive_definite, max_asymmetry })
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("cannot normalize non-finite angle {a}")));
    }
    Ok(wrap_angle(a))
}

/// Infallible variant of [`normalize_angle`] for values known to be finite.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}
