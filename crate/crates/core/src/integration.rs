//! Sliding-window scan accumulation and distance-adaptive window lengths.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PointCloud, Scan};

/// Tracking modality an interval or tracker belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Adaptive sparse tracking: short windows.
    Ast,
    /// Adaptive dense tracking: long windows.
    Adt,
    /// Constant window baseline.
    Fixed,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Ast => "ast",
            Modality::Adt => "adt",
            Modality::Fixed => "fixed",
        })
    }
}

/// Bounds for the integration time of one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationInterval {
    pub i_min: usize,
    pub i_max: usize,
    /// Distance at which the window reaches `i_max`, meters.
    pub d_max: f64,
    pub label: Modality,
}

impl IntegrationInterval {
    pub fn new(i_min: usize, i_max: usize, d_max: f64, label: Modality) -> Result<Self> {
        let iv = Self { i_min, i_max, d_max, label };
        iv.validate()?;
        Ok(iv)
    }

    pub fn ast(d_max: f64) -> Self {
        Self { i_min: 1, i_max: 5, d_max, label: Modality::Ast }
    }

    pub fn adt(d_max: f64) -> Self {
        Self { i_min: 10, i_max: 50, d_max, label: Modality::Adt }
    }

    pub fn fixed(i: usize) -> Self {
        Self { i_min: i, i_max: i, d_max: 1.0, label: Modality::Fixed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.i_min < 1 || self.i_min > self.i_max {
            return Err(Error::Config(format!(
                "integration bounds must satisfy 1 <= i_min <= i_max, got ({}, {})",
                self.i_min, self.i_max
            )));
        }
        if !(self.d_max.is_finite() && self.d_max > 0.0) {
            return Err(Error::Config(format!("d_max must be positive, got {}", self.d_max)));
        }
        Ok(())
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.i_min..=self.i_max).contains(&i)
    }
}

/// Ring of the most recent scans, evicted oldest-first.
#[derive(Debug, Clone)]
pub struct ScanBuffer {
    scans: VecDeque<Arc<Scan>>,
    capacity: usize,
}

impl ScanBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { scans: VecDeque::with_capacity(capacity), capacity: capacity.max(1) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn seqs(&self) -> Vec<u64> {
        self.scans.iter().map(|s| s.seq).collect()
    }

    pub fn newest(&self) -> Option<&Scan> {
        self.scans.back().map(|s| s.as_ref())
    }

    /// Appends `scan`, which must directly follow the newest held scan.
    pub fn push_scan(&mut self, scan: Arc<Scan>) -> Result<()> {
        if let Some(last) = self.scans.back() {
            if scan.seq != last.seq + 1 {
                return Err(Error::Sequencing { expected: last.seq + 1, got: scan.seq });
            }
        }
        if self.scans.len() == self.capacity {
            self.scans.pop_front();
        }
        self.scans.push_back(scan);
        Ok(())
    }

    /// The most recent `min(i, held)` scans, oldest first.
    pub fn window(&self, i: usize) -> impl Iterator<Item = &Scan> {
        let take = i.min(self.scans.len());
        self.scans.iter().skip(self.scans.len() - take).map(|s| s.as_ref())
    }

    /// Concatenates the points of the newest `i` scans.
    pub fn integrate(&self, i: usize) -> Result<PointCloud> {
        if i < 1 {
            return Err(Error::Domain("integration time must be at least one scan".into()));
        }
        let newest = self.scans.back().ok_or(Error::EmptyBuffer)?;
        let take = i.min(self.scans.len());
        let first = &self.scans[self.scans.len() - take];
        let total = self.window(take).map(|s| s.points.len()).sum();
        let mut points = Vec::with_capacity(total);
        for scan in self.window(take) {
            points.extend_from_slice(&scan.points);
        }
        Ok(PointCloud { points, window: (first.seq, newest.seq) })
    }
}

/// Window length for distance `d`: linear between the bounds, round
/// half-up, clamped.
pub fn adapt_integration_time(d: f64, iv: &IntegrationInterval) -> Result<usize> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance must be non-negative, got {d}")));
    }
    let span = (iv.i_max - iv.i_min) as f64;
    let raw = iv.i_min as f64 + span * (d / iv.d_max);
    let rounded = (raw + 0.5).floor();
    Ok((rounded.max(iv.i_min as f64).min(iv.i_max as f64)) as usize)
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Points expected on a target face of side `side` at distance `d` for a
/// sensor with angular resolution `theta` radians.
pub fn expected_point_count(side: f64, d: f64, theta: f64) -> Result<f64> {
    require_positive("side length", side)?;
    require_positive("distance", d)?;
    require_positive("angular resolution", theta)?;
    Ok(side * side / (d * d * theta))
}

/// Distance at which the inverse-square law, anchored at `n4` points seen at
/// 4 m, falls to `n_min` points.
pub fn max_distance(n4: f64, n_min: f64) -> Result<f64> {
    require_positive("points at 4 m", n4)?;
    require_positive("minimum points", n_min)?;
    Ok(4.0 * (n4 / n_min).sqrt())
}
