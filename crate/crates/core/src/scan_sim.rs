//! Synthetic solid-state LiDAR: a two-frequency rosette scan pattern cast
//! against an axis-aligned box target moving along an analytic trajectory.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Point, Scan, TargetSpec};

const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Intensity assigned to target returns.
pub const TARGET_INTENSITY: f64 = 0.8;
const GROUND_INTENSITY: f64 = 0.3;
const CLUTTER_INTENSITY: f64 = 0.5;

/// Non-target returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    #[default]
    None,
    /// Horizontal plane at height `z` (sensor frame, usually negative).
    GroundPlane { z: f64 },
    /// Uniform random points inside an axis-aligned region.
    Clutter { points_per_scan: usize, min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Horizontal field of view, degrees.
    pub fov_az: f64,
    /// Vertical field of view, degrees.
    pub fov_el: f64,
    pub points_per_second: f64,
    /// Duration of one base scan, seconds.
    pub scan_period: f64,
    /// Azimuth and elevation sweep frequencies, Hz.
    pub pattern_freqs: [f64; 2],
    /// Elevation phase offset, radians.
    pub pattern_phase: f64,
    /// Per-axis Gaussian noise on each return, meters.
    pub noise_sigma: f64,
    pub max_range: f64,
    pub background: Background,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            fov_az: 81.7,
            fov_el: 25.1,
            points_per_second: 240_000.0,
            scan_period: 0.01,
            pattern_freqs: [173.0, 280.0 * GOLDEN_RATIO],
            pattern_phase: 0.5,
            noise_sigma: 0.0,
            max_range: 100.0,
            background: Background::None,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.fov_az, self.fov_el, self.points_per_second, self.scan_period, self.max_range];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("sensor fov, rate, period and range must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if self.pattern_freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config("pattern frequencies must be positive".into()));
        }
        Ok(())
    }

    /// Rays emitted during one base scan.
    pub fn rays_per_scan(&self) -> usize {
        (self.points_per_second * self.scan_period).round().max(1.0) as usize
    }

    /// Beam direction (azimuth, elevation) in radians at absolute time `t`.
    pub fn pattern_angles(&self, t: f64) -> (f64, f64) {
        let az = 0.5 * self.fov_az.to_radians() * (2.0 * PI * self.pattern_freqs[0] * t).sin();
        let el = 0.5
            * self.fov_el.to_radians()
            * (2.0 * PI * self.pattern_freqs[1] * t + self.pattern_phase).sin();
        (az, el)
    }
}

/// Unit ray for an (azimuth, elevation) pair: x forward, y left, z up.
pub fn direction(az: f64, el: f64) -> Vector3<f64> {
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Analytic target motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Line {
        start: [f64; 3],
        velocity: [f64; 3],
        duration: f64,
    },
    CircleArc {
        center: [f64; 3],
        radius: f64,
        /// rad/s; the sign selects the turning direction.
        angular_rate: f64,
        #[serde(default)]
        start_angle: f64,
        #[serde(default)]
        vertical_rate: f64,
        duration: f64,
    },
    /// Lemniscate of Gerono around `center`: `(ax sin wt, ay sin wt cos wt)`,
    /// with an optional vertical oscillation `az sin wt`.
    FigureEight {
        center: [f64; 3],
        amplitude: [f64; 2],
        angular_rate: f64,
        #[serde(default)]
        vertical_amplitude: f64,
        duration: f64,
    },
    /// Constant-speed traversal of straight segments.
    Polyline {
        waypoints: Vec<[f64; 3]>,
        speed: f64,
    },
    Hover {
        position: [f64; 3],
        duration: f64,
    },
    /// `base` started from rest: its clock accelerates uniformly over the
    /// first `ramp` seconds.
    Ramped {
        ramp: f64,
        base: Box<TrajectorySpec>,
    },
}

/// Eased clock of a ramped trajectory and its rate.
fn ramp_clock(t: f64, ramp: f64) -> (f64, f64) {
    if t < ramp {
        (t * t / (2.0 * ramp), t / ramp)
    } else {
        (t - 0.5 * ramp, 1.0)
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl TrajectorySpec {
    pub fn duration(&self) -> f64 {
        match self {
            TrajectorySpec::Line { duration, .. }
            | TrajectorySpec::CircleArc { duration, .. }
            | TrajectorySpec::FigureEight { duration, .. }
            | TrajectorySpec::Hover { duration, .. } => *duration,
            TrajectorySpec::Polyline { waypoints, speed } => {
                let length: f64 = waypoints.windows(2).map(|w| (v3(w[1]) - v3(w[0])).norm()).sum();
                length / speed
            }
            TrajectorySpec::Ramped { ramp, base } => base.duration() + 0.5 * ramp,
        }
    }

    /// Checks parameters and that the path stays within `max_distance` of the
    /// sensor.
    pub fn validate(&self, max_distance: f64) -> Result<()> {
        match self {
            TrajectorySpec::Polyline { waypoints, speed } => {
                if waypoints.len() < 2 {
                    return Err(Error::Config("polyline needs at least two waypoints".into()));
                }
                if !(speed.is_finite() && *speed > 0.0) {
                    return Err(Error::Config("polyline speed must be positive".into()));
                }
            }
            TrajectorySpec::CircleArc { radius, .. } if !(*radius >= 0.0) => {
                return Err(Error::Config("circle radius must be non-negative".into()));
            }
            TrajectorySpec::Ramped { ramp, base } => {
                if !(ramp.is_finite() && *ramp > 0.0) {
                    return Err(Error::Config("ramp must be positive".into()));
                }
                base.validate(max_distance)?;
            }
            _ => {}
        }
        let duration = self.duration();
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Config(format!("trajectory duration must be positive, got {duration}")));
        }
        for i in 0..=1000 {
            let t = duration * i as f64 / 1000.0;
            let (p, _) = eval_trajectory(self, t)?;
            if !(p.norm() <= max_distance) {
                return Err(Error::Config(format!(
                    "trajectory leaves the {max_distance} m bound at t={t:.3}"
                )));
            }
        }
        Ok(())
    }

    /// Position and velocity with `t` clamped into the trajectory's span.
    pub fn sample_clamped(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let t = t.clamp(0.0, self.duration());
        eval_trajectory(self, t).expect("time clamped into range")
    }
}

/// Position and analytic velocity at time `t` since trajectory start.
pub fn eval_trajectory(spec: &TrajectorySpec, t: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let duration = spec.duration();
    if !(t >= 0.0 && t <= duration * (1.0 + 1e-12)) {
        return Err(Error::Range(format!("t={t} outside trajectory span [0, {duration}]")));
    }
    Ok(match spec {
        TrajectorySpec::Line { start, velocity, .. } => {
            let v = v3(*velocity);
            (v3(*start) + v * t, v)
        }
        TrajectorySpec::CircleArc { center, radius, angular_rate, start_angle, vertical_rate, .. } => {
            let a = start_angle + angular_rate * t;
            let p = v3(*center) + Vector3::new(radius * a.cos(), radius * a.sin(), vertical_rate * t);
            let v = Vector3::new(
                -radius * angular_rate * a.sin(),
                radius * angular_rate * a.cos(),
                *vertical_rate,
            );
            (p, v)
        }
        TrajectorySpec::FigureEight { center, amplitude, angular_rate, vertical_amplitude, .. } => {
            let w = *angular_rate;
            let (s, c) = (w * t).sin_cos();
            let p = v3(*center)
                + Vector3::new(amplitude[0] * s, amplitude[1] * s * c, vertical_amplitude * s);
            let v = Vector3::new(
                amplitude[0] * w * c,
                amplitude[1] * w * (c * c - s * s),
                vertical_amplitude * w * c,
            );
            (p, v)
        }
        TrajectorySpec::Polyline { waypoints, speed } => {
            let mut remaining = t * speed;
            let last = waypoints.len() - 2;
            for (i, w) in waypoints.windows(2).enumerate() {
                let (a, b) = (v3(w[0]), v3(w[1]));
                let seg = b - a;
                let len = seg.norm();
                if len == 0.0 {
                    continue;
                }
                let dir = seg / len;
                if remaining < len || i == last {
                    let s = remaining.min(len);
                    return Ok((a + dir * s, dir * *speed));
                }
                remaining -= len;
            }
            let p = v3(*waypoints.last().expect("validated non-empty"));
            (p, Vector3::zeros())
        }
        TrajectorySpec::Hover { position, .. } => (v3(*position), Vector3::zeros()),
        TrajectorySpec::Ramped { ramp, base } => {
            let (s, rate) = ramp_clock(t, *ramp);
            let (p, v) = eval_trajectory(base, s.min(base.duration()))?;
            (p, v * rate)
        }
    })
}

/// Entry distance along a ray from the origin into an axis-aligned box, or
/// `None` when the ray misses or starts inside.
pub fn ray_box_entry(dir: &Vector3<f64>, center: &Vector3<f64>, half: &Vector3<f64>) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        let lo = center[k] - half[k];
        let hi = center[k] + half[k];
        if dir[k].abs() < 1e-15 {
            if 0.0 < lo || 0.0 > hi {
                return None;
            }
            continue;
        }
        let (mut t1, mut t2) = (lo / dir[k], hi / dir[k]);
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        t_near = t_near.max(t1);
        t_far = t_far.min(t2);
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

/// A scan together with which of its points came from the target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScan {
    pub scan: Scan,
    /// Parallel to `scan.points`.
    pub is_target: Vec<bool>,
}

impl LabeledScan {
    pub fn target_points(&self) -> impl Iterator<Item = &Point> {
        self.scan.points.iter().zip(&self.is_target).filter(|(_, t)| **t).map(|(p, _)| p)
    }

    pub fn target_count(&self) -> usize {
        self.is_target.iter().filter(|t| **t).count()
    }
}

fn scan_rng(seed: u64, seq: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ seq.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Emits one base scan covering `[t0, t0 + scan_period]`.
pub fn generate_scan(
    cfg: &SensorConfig,
    spec: &TrajectorySpec,
    target: &TargetSpec,
    seq: u64,
    t0: f64,
    seed: u64,
) -> LabeledScan {
    let n = cfg.rays_per_scan();
    let dt = cfg.scan_period / n as f64;
    let half = target.half_extents();
    let mut rng = scan_rng(seed, seq);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let clutter_p = match &cfg.background {
        Background::Clutter { points_per_scan, .. } => (*points_per_scan as f64 / n as f64).min(1.0),
        _ => 0.0,
    };

    let mut points = Vec::new();
    let mut is_target = Vec::new();
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        let (az, el) = cfg.pattern_angles(t);
        let dir = direction(az, el);
        let (center, _) = spec.sample_clamped(t);
        if let Some(range) = ray_box_entry(&dir, &center, &half).filter(|r| *r <= cfg.max_range) {
            let mut p = dir * range;
            if cfg.noise_sigma > 0.0 {
                p += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            }
            points.push(Point::new(p.x, p.y, p.z, TARGET_INTENSITY, t));
            is_target.push(true);
            continue;
        }
        match &cfg.background {
            Background::None => {}
            Background::GroundPlane { z } => {
                if dir.z < 0.0 && *z < 0.0 {
                    let range = z / dir.z;
                    if range <= cfg.max_range {
                        let p = dir * range;
                        points.push(Point::new(p.x, p.y, p.z, GROUND_INTENSITY, t));
                        is_target.push(false);
                    }
                }
            }
            Background::Clutter { min, max, .. } => {
                if rng.random::<f64>() < clutter_p {
                    let p: [f64; 3] = std::array::from_fn(|k| {
                        if max[k] > min[k] {
                            rng.random_range(min[k]..max[k])
                        } else {
                            min[k]
                        }
                    });
                    points.push(Point::new(p[0], p[1], p[2], CLUTTER_INTENSITY, t));
                    is_target.push(false);
                }
            }
        }
    }
    LabeledScan { scan: Scan { seq, t_start: t0, t_end: t0 + cfg.scan_period, points }, is_target }
}

/// One ground-truth sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// Time-ordered ground-truth samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub samples: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Format("ground truth timestamps must strictly increase".into()));
            }
        }
        let finite = self
            .samples
            .iter()
            .all(|s| s.t.is_finite() && s.position.iter().chain(&s.velocity).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Format("ground truth holds non-finite values".into()));
        }
        Ok(())
    }

    /// Linearly interpolated position at `t`; `None` outside the covered span.
    pub fn position_at(&self, t: f64) -> Option<Vector3<f64>> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let idx = self.samples.partition_point(|s| s.t <= t);
        if idx == 0 {
            return Some(v3(first.position));
        }
        if idx >= self.samples.len() {
            return Some(v3(last.position));
        }
        let (a, b) = (&self.samples[idx - 1], &self.samples[idx]);
        let u = (t - a.t) / (b.t - a.t);
        Some(v3(a.position) * (1.0 - u) + v3(b.position) * u)
    }
}

/// `ceil(duration / scan_period)` contiguous scans and boundary-sampled truth.
pub fn simulate_labeled(
    cfg: &SensorConfig,
    spec: &TrajectorySpec,
    target: &TargetSpec,
    duration: f64,
    seed: u64,
) -> Result<(Vec<LabeledScan>, GroundTruth)> {
    cfg.validate()?;
    target.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Domain(format!("duration must be positive, got {duration}")));
    }
    let count = (duration / cfg.scan_period - 1e-9).ceil().max(1.0) as u64;
    let scans = (0..count)
        .map(|k| generate_scan(cfg, spec, target, k, k as f64 * cfg.scan_period, seed))
        .collect();
    let samples = (0..=count)
        .map(|k| {
            let t = k as f64 * cfg.scan_period;
            let (p, v) = spec.sample_clamped(t);
            TruthSample { t, position: p.into(), velocity: v.into() }
        })
        .collect();
    Ok((scans, GroundTruth { samples }))
}

/// Unlabeled variant of [`simulate_labeled`].
pub fn simulate_sequence(
    cfg: &SensorConfig,
    spec: &TrajectorySpec,
    target: &TargetSpec,
    duration: f64,
    seed: u64,
) -> Result<(Vec<Scan>, GroundTruth)> {
    let (labeled, gt) = simulate_labeled(cfg, spec, target, duration, seed)?;
    Ok((labeled.into_iter().map(|l| l.scan).collect(), gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover(position: [f64; 3]) -> TrajectorySpec {
        TrajectorySpec::Hover { position, duration: 10.0 }
    }

    #[test]
    fn line_and_hover_kinematics() {
        let line = TrajectorySpec::Line { start: [0.0; 3], velocity: [1.0, 0.0, 0.0], duration: 5.0 };
        let (p, v) = eval_trajectory(&line, 2.0).unwrap();
        assert_eq!(p, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(v, Vector3::new(1.0, 0.0, 0.0));
        let (p, v) = eval_trajectory(&hover([3.0, 0.0, 1.0]), 7.3).unwrap();
        assert_eq!(p, Vector3::new(3.0, 0.0, 1.0));
        assert_eq!(v, Vector3::zeros());
        assert!(matches!(eval_trajectory(&line, 5.5), Err(Error::Range(_))));
        assert!(eval_trajectory(&line, -0.1).is_err());
    }

    #[test]
    fn circle_arc_quarter_turn() {
        let arc = TrajectorySpec::CircleArc {
            center: [0.0; 3],
            radius: 2.0,
            angular_rate: 0.5,
            start_angle: 0.0,
            vertical_rate: 0.0,
            duration: 10.0,
        };
        let (p, v) = eval_trajectory(&arc, PI).unwrap();
        assert!((p - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn velocities_match_position_derivative() {
        let specs = [
            TrajectorySpec::FigureEight {
                center: [6.0, 0.0, 0.5],
                amplitude: [1.5, 2.0],
                angular_rate: 0.7,
                vertical_amplitude: 0.3,
                duration: 20.0,
            },
            TrajectorySpec::CircleArc {
                center: [5.0, 1.0, 0.0],
                radius: 1.2,
                angular_rate: -1.1,
                start_angle: 0.3,
                vertical_rate: 0.2,
                duration: 20.0,
            },
            TrajectorySpec::Polyline {
                waypoints: vec![[4.0, -1.0, 0.0], [5.0, 0.0, 0.5], [4.0, 1.0, 0.0]],
                speed: 1.5,
            },
            TrajectorySpec::Ramped {
                ramp: 1.5,
                base: Box::new(TrajectorySpec::FigureEight {
                    center: [6.0, 0.0, 0.5],
                    amplitude: [1.5, 2.0],
                    angular_rate: 0.7,
                    vertical_amplitude: 0.3,
                    duration: 20.0,
                }),
            },
        ];
        let h = 1e-6;
        for spec in &specs {
            for i in 1..40 {
                let t = spec.duration() * i as f64 / 40.0 + 0.0123;
                if t + h > spec.duration() {
                    continue;
                }
                let (p1, _) = eval_trajectory(spec, t - h).unwrap();
                let (p2, _) = eval_trajectory(spec, t + h).unwrap();
                let (_, v) = eval_trajectory(spec, t).unwrap();
                assert!(((p2 - p1) / (2.0 * h) - v).norm() < 1e-6, "{spec:?} at {t}");
            }
        }
    }

    #[test]
    fn ramp_starts_at_rest_and_joins_base() {
        let base = TrajectorySpec::Line { start: [3.0, 0.0, 0.0], velocity: [2.0, 0.0, 0.0], duration: 4.0 };
        let spec = TrajectorySpec::Ramped { ramp: 1.0, base: Box::new(base.clone()) };
        assert_eq!(spec.duration(), 4.5);
        let (p0, v0) = eval_trajectory(&spec, 0.0).unwrap();
        assert_eq!((p0, v0), (Vector3::new(3.0, 0.0, 0.0), Vector3::zeros()));
        let (p, v) = eval_trajectory(&spec, 0.5).unwrap();
        assert!((v.x - 1.0).abs() < 1e-12 && (p.x - 3.25).abs() < 1e-12);
        let (p, v) = eval_trajectory(&spec, 3.0).unwrap();
        assert_eq!((p, v), eval_trajectory(&base, 2.5).unwrap());
        let end = eval_trajectory(&spec, 4.5).unwrap();
        assert_eq!(end, eval_trajectory(&base, 4.0).unwrap());
        assert!(TrajectorySpec::Ramped { ramp: 0.0, base: Box::new(base) }.validate(100.0).is_err());
    }

    #[test]
    fn polyline_reaches_waypoints() {
        let spec = TrajectorySpec::Polyline {
            waypoints: vec![[4.0, 0.0, 0.0], [4.0, 3.0, 0.0], [8.0, 3.0, 0.0]],
            speed: 1.0,
        };
        assert!((spec.duration() - 7.0).abs() < 1e-12);
        let (p, v) = eval_trajectory(&spec, 3.0).unwrap();
        assert!((p - Vector3::new(4.0, 3.0, 0.0)).norm() < 1e-12);
        assert!((v - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let (p, _) = eval_trajectory(&spec, 7.0).unwrap();
        assert!((p - Vector3::new(8.0, 3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn validate_rejects_escaping_paths() {
        let line = TrajectorySpec::Line { start: [5.0, 0.0, 0.0], velocity: [3.0, 0.0, 0.0], duration: 10.0 };
        assert!(line.validate(20.0).is_err());
        assert!(line.validate(40.0).is_ok());
        let bad = TrajectorySpec::Polyline { waypoints: vec![[1.0, 0.0, 0.0]], speed: 1.0 };
        assert!(bad.validate(10.0).is_err());
    }

    #[test]
    fn ray_box_entry_oracle() {
        let c = Vector3::new(4.0, 0.0, 0.0);
        let h = Vector3::new(0.2, 0.2, 0.2);
        assert!((ray_box_entry(&Vector3::x(), &c, &h).unwrap() - 3.8).abs() < 1e-12);
        assert!(ray_box_entry(&Vector3::y(), &c, &h).is_none());
        assert!(ray_box_entry(&-Vector3::x(), &c, &h).is_none());
    }

    #[test]
    fn target_outside_fov_gives_no_target_returns() {
        let cfg = SensorConfig::default();
        let s = generate_scan(&cfg, &hover([0.0, 6.0, 0.0]), &TargetSpec::cube(0.4), 0, 0.0, 1);
        assert_eq!(s.target_count(), 0);
        let behind = generate_scan(&cfg, &hover([-4.0, 0.0, 0.0]), &TargetSpec::cube(0.4), 0, 0.0, 1);
        assert_eq!(behind.target_count(), 0);
    }

    #[test]
    fn noiseless_returns_lie_on_cube_surface() {
        let cfg = SensorConfig::default();
        let target = TargetSpec::cube(0.4);
        let s = generate_scan(&cfg, &hover([4.0, 0.0, 0.0]), &target, 0, 0.0, 1);
        assert!(s.target_count() >= 1);
        for p in s.target_points() {
            let d = p.position() - Vector3::new(4.0, 0.0, 0.0);
            let inf = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((inf - 0.2).abs() < 1e-9, "point {d:?} not on surface");
        }
    }

    #[test]
    fn return_count_follows_inverse_square() {
        let cfg = SensorConfig::default();
        let target = TargetSpec::cube(0.4);
        let count = |x: f64| -> usize {
            (0..100)
                .map(|k| {
                    generate_scan(&cfg, &hover([x, 0.0, 0.0]), &target, k, k as f64 * cfg.scan_period, 1)
                        .target_count()
                })
                .sum()
        };
        let (near, far) = (count(4.0) as f64, count(8.0) as f64);
        let ratio = near / far;
        assert!(ratio > 2.0 && ratio < 6.0, "near {near} far {far} ratio {ratio}");
    }

    #[test]
    fn sequence_counts_and_ordering() {
        let cfg = SensorConfig::default();
        let spec = TrajectorySpec::Line { start: [5.0, -1.0, 0.0], velocity: [0.0, 1.0, 0.0], duration: 1.0 };
        let (scans, gt) = simulate_sequence(&cfg, &spec, &TargetSpec::cube(0.4), 1.0, 7).unwrap();
        assert_eq!(scans.len(), 100);
        assert_eq!(gt.samples.len(), 101);
        for (k, s) in scans.iter().enumerate() {
            assert_eq!(s.seq, k as u64);
            s.validate().unwrap();
        }
        for w in scans.windows(2) {
            assert!((w[0].t_end - w[1].t_start).abs() < 1e-12);
        }
        let times: Vec<f64> = scans.iter().flat_map(|s| s.points.iter().map(|p| p.t)).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        gt.validate().unwrap();
    }

    #[test]
    fn deterministic_for_same_seed() {
        let cfg = SensorConfig {
            noise_sigma: 0.02,
            background: Background::Clutter { points_per_scan: 20, min: [2.0, -3.0, -1.0], max: [10.0, 3.0, 2.0] },
            ..SensorConfig::default()
        };
        let spec = hover([5.0, 0.0, 0.0]);
        let a = simulate_sequence(&cfg, &spec, &TargetSpec::cube(0.4), 0.3, 11).unwrap();
        let b = simulate_sequence(&cfg, &spec, &TargetSpec::cube(0.4), 0.3, 11).unwrap();
        assert_eq!(a.0, b.0);
        let c = simulate_sequence(&cfg, &spec, &TargetSpec::cube(0.4), 0.3, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn ground_plane_returns_below_sensor() {
        let cfg = SensorConfig { background: Background::GroundPlane { z: -1.0 }, ..SensorConfig::default() };
        let s = generate_scan(&cfg, &hover([5.0, 0.0, 0.0]), &TargetSpec::cube(0.4), 0, 0.0, 1);
        let ground: Vec<_> = s.scan.points.iter().zip(&s.is_target).filter(|(_, t)| !**t).collect();
        assert!(!ground.is_empty());
        assert!(ground.iter().all(|(p, _)| (p.z + 1.0).abs() < 1e-9));
    }

    #[test]
    fn truth_interpolation() {
        let gt = GroundTruth {
            samples: vec![
                TruthSample { t: 0.0, position: [0.0; 3], velocity: [1.0, 0.0, 0.0] },
                TruthSample { t: 1.0, position: [1.0, 2.0, 0.0], velocity: [1.0, 0.0, 0.0] },
            ],
        };
        assert_eq!(gt.position_at(0.25).unwrap(), Vector3::new(0.25, 0.5, 0.0));
        assert!(gt.position_at(1.5).is_none());
    }
}
