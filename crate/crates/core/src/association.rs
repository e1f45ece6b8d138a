//! Target point extraction: a 3D KD-tree radius query around the predicted
//! position and a time-weighted centroid of the hits.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Point, PointCloud};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static KD-tree over the positions of a cloud, split at the axis median.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point>,
    /// `points` permuted so every leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn coord(p: &Point, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn dist2(p: &Point, c: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (p.x - c.x, p.y - c.y, p.z - c.z);
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points.clone())
    }

    pub fn from_points(points: Vec<Point>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build_node(&points, &mut order, 0, n, &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices (into the indexed cloud) of every point with
    /// `|p - center| <= r`, in ascending order.
    pub fn radius_indices(&self, center: &Vector3<f64>, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || !(r >= 0.0) {
            return out;
        }
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[*start..*end] {
                        if dist2(&self.points[i], center) <= r2 {
                            out.push(i);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = center[*axis] - value;
                    // a point on the far side is at least |diff| away along this axis
                    if diff <= 0.0 || diff * diff <= r2 {
                        stack.push(*left);
                    }
                    if diff >= 0.0 || diff * diff <= r2 {
                        stack.push(*right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn radius_search(&self, center: &Vector3<f64>, r: f64) -> Vec<Point> {
        self.radius_indices(center, r).into_iter().map(|i| self.points[i]).collect()
    }
}

fn build_node(points: &[Point], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &order[start..end];
    let axis = (0..3)
        .max_by(|&a, &b| {
            let spread = |ax: usize| {
                let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = coord(&points[i], ax);
                    (lo.min(v), hi.max(v))
                });
                hi - lo
            };
            spread(a).total_cmp(&spread(b))
        })
        .unwrap_or(0);
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        coord(&points[a], axis).total_cmp(&coord(&points[b], axis))
    });
    let value = coord(&points[order[start + mid]], axis);
    // left holds coords <= value, right holds coords >= value
    nodes.push(Node::Leaf { start, end });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

/// Builds the index for one integrated cloud.
pub fn build_index(cloud: &PointCloud) -> SpatialIndex {
    SpatialIndex::build(cloud)
}

/// Closed-ball query: all points within `r` of `center`.
pub fn radius_search(idx: &SpatialIndex, center: &Vector3<f64>, r: f64) -> Vec<Point> {
    idx.radius_search(center, r)
}

/// Per-point temporal weighting for the centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFn {
    /// Plain mean.
    None,
    /// `max(eps, 1 - age / window)`; `window` defaults to the integration
    /// window duration when absent.
    Linear {
        #[serde(default)]
        window: Option<f64>,
    },
    /// `exp(-gamma * age)`.
    Exponential { gamma: f64 },
}

impl Default for WeightFn {
    fn default() -> Self {
        WeightFn::Exponential { gamma: 5.0 }
    }
}

/// Floor for linear weights so the normalizer stays positive.
pub const LINEAR_WEIGHT_FLOOR: f64 = 1e-6;

impl WeightFn {
    pub fn name(&self) -> &'static str {
        match self {
            WeightFn::None => "none",
            WeightFn::Linear { .. } => "linear",
            WeightFn::Exponential { .. } => "exponential",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFn::None => Ok(()),
            WeightFn::Linear { window } => match window {
                Some(w) if !(w.is_finite() && *w > 0.0) => {
                    Err(Error::Config(format!("linear weight window must be positive, got {w}")))
                }
                _ => Ok(()),
            },
            WeightFn::Exponential { gamma } if !(gamma.is_finite() && *gamma > 0.0) => {
                Err(Error::Config(format!("gamma must be positive, got {gamma}")))
            }
            WeightFn::Exponential { .. } => Ok(()),
        }
    }

    /// Fills in the linear window from the current integration window.
    pub fn with_default_window(self, window: f64) -> Self {
        match self {
            WeightFn::Linear { window: None } => WeightFn::Linear { window: Some(window) },
            other => other,
        }
    }

    /// Weight for a point `age` seconds older than the newest scan.
    pub fn weight(&self, age: f64) -> f64 {
        match *self {
            WeightFn::None => 1.0,
            WeightFn::Linear { window } => {
                let w = window.unwrap_or(f64::INFINITY);
                (1.0 - age / w).max(LINEAR_WEIGHT_FLOOR)
            }
            WeightFn::Exponential { gamma } => (-gamma * age).exp(),
        }
    }
}

/// Weighted mean position of `pts` with weights from their age relative to
/// `t_scan`.
pub fn weighted_centroid(pts: &[Point], t_scan: f64, w: &WeightFn) -> Result<Vector3<f64>> {
    if pts.is_empty() {
        return Err(Error::NoMeasurement);
    }
    let mut sum = Vector3::zeros();
    let mut norm = 0.0;
    for p in pts {
        let wp = w.weight((t_scan - p.t).max(0.0));
        sum += p.position() * wp;
        norm += wp;
    }
    if !(norm > 0.0) {
        return Err(Error::Numeric("centroid weights vanished".into()));
    }
    Ok(sum / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, z: f64, t: f64) -> Point {
        Point::new(x, y, z, 0.5, t)
    }

    fn brute(points: &[Point], c: &Vector3<f64>, r: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| dist2(&points[i], c) <= r * r).collect()
    }

    #[test]
    fn empty_and_single() {
        let empty = build_index(&PointCloud::default());
        assert!(radius_search(&empty, &Vector3::zeros(), 10.0).is_empty());
        let one = SpatialIndex::from_points(vec![pt(1.0, 1.0, 1.0, 0.0)]);
        assert_eq!(radius_search(&one, &Vector3::new(1.0, 1.0, 1.0), 0.1).len(), 1);
    }

    #[test]
    fn threshold_and_closed_ball() {
        let pts = vec![pt(0.1, 0.0, 0.0, 0.0), pt(0.0, 0.3, 0.0, 0.0), pt(0.0, 0.0, 0.9, 0.0)];
        let idx = SpatialIndex::from_points(pts.clone());
        assert_eq!(idx.radius_indices(&Vector3::zeros(), 0.5), vec![0, 1]);
        assert_eq!(idx.radius_indices(&Vector3::zeros(), 5.0), vec![0, 1, 2]);
        let boundary = SpatialIndex::from_points(vec![pt(0.5, 0.0, 0.0, 0.0)]);
        assert_eq!(boundary.radius_indices(&Vector3::zeros(), 0.5), vec![0]);
    }

    #[test]
    fn matches_linear_scan_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Point> = (0..1000)
            .map(|_| pt(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0))
            .collect();
        let idx = SpatialIndex::from_points(pts.clone());
        for _ in 0..200 {
            let c = Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            let r = rng.random_range(0.01..3.0);
            assert_eq!(idx.radius_indices(&c, r), brute(&pts, &c, r));
        }
    }

    #[test]
    fn duplicated_coordinates_are_all_found() {
        let pts: Vec<Point> = (0..100).map(|i| pt(1.0, (i % 3) as f64, 0.0, 0.0)).collect();
        let idx = SpatialIndex::from_points(pts.clone());
        let c = Vector3::new(1.0, 1.0, 0.0);
        assert_eq!(idx.radius_indices(&c, 0.0), brute(&pts, &c, 0.0));
        assert_eq!(idx.radius_indices(&c, 1.0).len(), 100);
    }

    #[test]
    fn centroid_examples() {
        let same_t = vec![pt(0.0, 0.0, 0.0, 1.0), pt(2.0, 4.0, 0.0, 1.0), pt(1.0, 2.0, 3.0, 1.0)];
        let mean = Vector3::new(1.0, 2.0, 1.0);
        for w in [WeightFn::None, WeightFn::Linear { window: Some(0.5) }, WeightFn::Exponential { gamma: 5.0 }] {
            assert!((weighted_centroid(&same_t, 1.0, &w).unwrap() - mean).norm() < 1e-12);
            let single = weighted_centroid(&same_t[1..2], 1.3, &w).unwrap();
            assert_eq!(single, same_t[1].position());
        }
        let two = vec![pt(0.0, 0.0, 0.0, 1.0), pt(1.0, 0.0, 0.0, 0.8)];
        let c = weighted_centroid(&two, 1.0, &WeightFn::Exponential { gamma: 5.0 }).unwrap();
        let e = (-1.0f64).exp();
        assert!((c.x - e / (1.0 + e)).abs() < 1e-12);
        assert!((c.x - 0.2689).abs() < 1e-4);
        assert!(matches!(weighted_centroid(&[], 0.0, &WeightFn::None), Err(Error::NoMeasurement)));
    }

    #[test]
    fn linear_weights_floor_and_decay() {
        let w = WeightFn::Linear { window: Some(0.5) };
        assert_eq!(w.weight(0.0), 1.0);
        assert!((w.weight(0.25) - 0.5).abs() < 1e-12);
        assert_eq!(w.weight(2.0), LINEAR_WEIGHT_FLOOR);
        let old = vec![pt(0.0, 0.0, 0.0, 0.0), pt(2.0, 0.0, 0.0, 0.0)];
        assert!((weighted_centroid(&old, 10.0, &w).unwrap().x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_weight_shape() {
        let w = WeightFn::Exponential { gamma: 5.0 };
        assert_eq!(w.weight(0.0), 1.0);
        assert!(w.weight(0.1) > w.weight(0.2));
        let pts = vec![pt(0.0, 0.0, 0.0, 0.0), pt(1.0, 3.0, 0.0, 0.3), pt(5.0, 0.0, 1.0, 0.45)];
        let plain = weighted_centroid(&pts, 0.5, &WeightFn::None).unwrap();
        let tiny = weighted_centroid(&pts, 0.5, &WeightFn::Exponential { gamma: 1e-9 }).unwrap();
        assert!((plain - tiny).norm() < 1e-6);
    }

    proptest! {
        #[test]
        fn centroid_inside_bounding_box(
            raw in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0, 0.0f64..0.5), 1..40),
            gamma in 0.1f64..20.0,
        ) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y, z, age)| pt(x, y, z, 1.0 - age)).collect();
            for w in [WeightFn::None, WeightFn::Linear { window: Some(0.5) }, WeightFn::Exponential { gamma }] {
                let c = weighted_centroid(&pts, 1.0, &w).unwrap();
                for k in 0..3 {
                    let lo = pts.iter().map(|p| p.position()[k]).fold(f64::INFINITY, f64::min);
                    let hi = pts.iter().map(|p| p.position()[k]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(c[k] >= lo - 1e-9 && c[k] <= hi + 1e-9);
                }
            }
        }
    }
}
