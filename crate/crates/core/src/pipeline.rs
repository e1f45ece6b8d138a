//! Dual-window tracking loop.
//!
//! Every incoming scan advances both trackers on their own sliding windows,
//! the two posteriors are fused, the fused mean is written back into both
//! trackers and the fused distance sets the next window lengths.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::association::{build_index, weighted_centroid, WeightFn};
use crate::error::{Error, Result};
use crate::filters::{FilterKind, FilterState, NoiseConfig};
use crate::fusion::{fuse, FusionStrategy, DEFAULT_OMEGA_TOL};
use crate::integration::{adapt_integration_time, max_distance, IntegrationInterval, Modality, ScanBuffer};
use crate::model::{wrap_angle, Scan, TargetSpec};

/// Window bounds of one modality, in scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowBounds {
    pub i_min: usize,
    pub i_max: usize,
    /// Minimum target points that define the modality's maximum distance.
    #[serde(default = "default_n_min")]
    pub n_min: f64,
}

fn default_n_min() -> f64 {
    4.0
}

/// Returns of the tracker `tracker` are suppressed for `start <= t <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    pub tracker: Modality,
    pub start: f64,
    pub end: f64,
}

/// Tracking loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter: FilterKind,
    /// Overrides `filter` for the sparse tracker.
    pub ast_filter: Option<FilterKind>,
    /// Overrides `filter` for the dense tracker.
    pub adt_filter: Option<FilterKind>,
    pub noise: NoiseConfig,
    pub ast: WindowBounds,
    pub adt: WindowBounds,
    /// Target points observed at 4 m with a single scan.
    pub n4: f64,
    pub weighting: WeightFn,
    pub fusion: FusionStrategy,
    pub omega_tol: f64,
    /// Points required for a measurement update.
    pub min_points: usize,
    /// Consecutive lost steps tolerated before the track terminates.
    pub lost_limit: usize,
    pub occlusions: Vec<Occlusion>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterKind::Ekf,
            ast_filter: None,
            adt_filter: None,
            noise: NoiseConfig::default(),
            ast: WindowBounds { i_min: 1, i_max: 5, n_min: 4.0 },
            adt: WindowBounds { i_min: 10, i_max: 50, n_min: 4.0 },
            n4: 100.0,
            weighting: WeightFn::default(),
            fusion: FusionStrategy::Ici,
            omega_tol: DEFAULT_OMEGA_TOL,
            min_points: 1,
            lost_limit: 100,
            occlusions: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.weighting.validate()?;
        self.interval(Modality::Ast)?;
        self.interval(Modality::Adt)?;
        if !(self.omega_tol > 0.0) {
            return Err(Error::Config("omega_tol must be positive".into()));
        }
        if self.min_points == 0 {
            return Err(Error::Config("min_points must be at least 1".into()));
        }
        Ok(())
    }

    /// Integration interval of a modality, with its maximum distance derived
    /// from `n4` and the modality's `n_min`.
    pub fn interval(&self, label: Modality) -> Result<IntegrationInterval> {
        let bounds = match label {
            Modality::Ast => self.ast,
            Modality::Adt => self.adt,
            Modality::Fixed => return Err(Error::Config("fixed windows have no adaptive interval".into())),
        };
        let d_max = max_distance(self.n4, bounds.n_min).map_err(|e| Error::Config(e.to_string()))?;
        IntegrationInterval::new(bounds.i_min, bounds.i_max, d_max, label)
    }

    pub fn filter_for(&self, label: Modality) -> FilterKind {
        match label {
            Modality::Ast => self.ast_filter.unwrap_or(self.filter),
            Modality::Adt => self.adt_filter.unwrap_or(self.filter),
            Modality::Fixed => self.filter,
        }
    }

    fn occluded(&self, label: Modality, t: f64) -> bool {
        self.occlusions.iter().any(|o| o.tracker == label && t >= o.start && t <= o.end)
    }
}

/// Which trackers run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackMode {
    /// One tracker with a constant window.
    Fixed(usize),
    /// One adaptive tracker of the given modality.
    Single(Modality),
    /// Both adaptive trackers, fused.
    Dual,
}

impl std::fmt::Display for TrackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrackMode::Fixed(i) => write!(f, "fixed:{i}"),
            TrackMode::Single(m) => write!(f, "adaptive-{m}"),
            TrackMode::Dual => f.write_str("adaptive-dual"),
        }
    }
}

impl std::str::FromStr for TrackMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "adaptive-dual" | "dual" => Ok(TrackMode::Dual),
            "adaptive-ast" | "ast" => Ok(TrackMode::Single(Modality::Ast)),
            "adaptive-adt" | "adt" => Ok(TrackMode::Single(Modality::Adt)),
            _ => {
                let i = s
                    .strip_prefix("fixed:")
                    .or_else(|| s.strip_prefix("fixed-"))
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))?;
                if i == 0 {
                    return Err(Error::Config("fixed integration time must be at least 1".into()));
                }
                Ok(TrackMode::Fixed(i))
            }
        }
    }
}

impl Serialize for TrackMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TrackMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One estimator with its window state.
#[derive(Debug, Clone)]
pub struct TrackerInstance {
    pub label: Modality,
    pub filter: FilterState,
    pub interval: IntegrationInterval,
    pub current_i: usize,
    pub last_update_seq: Option<u64>,
    /// Time the filter state refers to.
    pub last_time: f64,
    pub lost_count: usize,
}

impl TrackerInstance {
    pub fn new(label: Modality, kind: FilterKind, interval: IntegrationInterval, init: Vector3<f64>, t0: f64) -> Self {
        let current_i = adapt_integration_time(init.norm(), &interval).unwrap_or(interval.i_min);
        Self {
            label,
            filter: FilterState::initial(kind, init),
            interval,
            current_i,
            last_update_seq: None,
            last_time: t0,
            lost_count: 0,
        }
    }
}

/// Per-step context shared by trackers.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub target: &'a TargetSpec,
    pub weighting: &'a WeightFn,
    pub noise: &'a NoiseConfig,
    pub min_points: usize,
    /// Suppress all returns for this step.
    pub blind: bool,
}

/// What one tracker saw in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub points: usize,
    pub measurement: Option<Vector3<f64>>,
}

/// Predict to the newest scan, associate within the target radius and update.
pub fn tracker_step(tr: &TrackerInstance, buf: &ScanBuffer, ctx: &StepContext) -> Result<(TrackerInstance, StepRecord)> {
    let newest = buf.newest().ok_or(Error::EmptyBuffer)?;
    let mut next = tr.clone();
    let t_scan = newest.t_end;
    let dt = t_scan - tr.last_time;
    if dt > 0.0 {
        next.filter = tr.filter.predict(dt, ctx.noise)?;
        next.last_time = t_scan;
    }
    let predicted = next.filter.position();

    let hits = if ctx.blind {
        Vec::new()
    } else {
        let cloud = buf.integrate(tr.current_i)?;
        build_index(&cloud).radius_search(&predicted, ctx.target.search_radius())
    };
    let mut record = StepRecord { points: hits.len(), measurement: None };
    if hits.len() >= ctx.min_points {
        let t_first = buf.window(tr.current_i).next().map_or(t_scan, |s| s.t_start);
        let weighting = ctx.weighting.with_default_window((t_scan - t_first).max(1e-9));
        let z = weighted_centroid(&hits, t_scan, &weighting)?;
        match next.filter.update(&z, ctx.noise) {
            Ok(updated) => {
                next.filter = updated;
                next.lost_count = 0;
                next.last_update_seq = Some(newest.seq);
                record.measurement = Some(z);
            }
            Err(Error::RejectedMeasurement(_)) => next.lost_count += 1,
            Err(e) => return Err(e),
        }
    } else {
        next.lost_count += 1;
    }
    Ok((next, record))
}

/// Step flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStatus {
    pub ast_lost: bool,
    pub adt_lost: bool,
    pub fusion_degenerate: bool,
    pub terminated: bool,
}

impl StepStatus {
    pub fn is_ok(&self) -> bool {
        *self == StepStatus::default()
    }
}

impl std::fmt::Display for StepStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        match (self.ast_lost, self.adt_lost) {
            (true, true) => parts.push("both_lost"),
            (true, false) => parts.push("ast_lost"),
            (false, true) => parts.push("adt_lost"),
            _ => {}
        }
        if self.fusion_degenerate {
            parts.push("fusion_degenerate");
        }
        if self.terminated {
            parts.push("terminated");
        }
        if parts.is_empty() {
            f.write_str("ok")
        } else {
            f.write_str(&parts.join("|"))
        }
    }
}

impl std::str::FromStr for StepStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut st = StepStatus::default();
        for part in s.split('|') {
            match part.trim() {
                "ok" => {}
                "ast_lost" => st.ast_lost = true,
                "adt_lost" => st.adt_lost = true,
                "both_lost" => {
                    st.ast_lost = true;
                    st.adt_lost = true;
                }
                "fusion_degenerate" => st.fusion_degenerate = true,
                "terminated" => st.terminated = true,
                other => return Err(Error::Format(format!("unknown status flag {other:?}"))),
            }
        }
        Ok(st)
    }
}

/// Posterior of one tracker after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerSnapshot {
    pub label: Modality,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub position_cov: nalgebra::Matrix3<f64>,
    pub i: usize,
    pub points: usize,
    pub updated: bool,
}

/// Output of one scan tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub seq: u64,
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub covariance: DMatrix<f64>,
    pub omega: Option<f64>,
    pub trackers: Vec<TrackerSnapshot>,
    pub i_ast: usize,
    pub i_adt: usize,
    pub status: StepStatus,
}

impl TrackOutput {
    pub fn tracker(&self, label: Modality) -> Option<&TrackerSnapshot> {
        self.trackers.iter().find(|t| t.label == label)
    }
}

/// Streaming tracker over a scan sequence.
#[derive(Debug, Clone)]
pub struct Pipeline {
    mode: TrackMode,
    config: PipelineConfig,
    target: TargetSpec,
    trackers: Vec<TrackerInstance>,
    buffers: Vec<ScanBuffer>,
    init: Vector3<f64>,
    started: bool,
    both_lost: usize,
    terminated: bool,
    last_t: Option<f64>,
}

impl Pipeline {
    pub fn new(mode: TrackMode, config: PipelineConfig, target: TargetSpec, init: Vector3<f64>) -> Result<Self> {
        config.validate()?;
        target.validate()?;
        if !init.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("initial position must be finite".into()));
        }
        Ok(Self {
            mode,
            config,
            target,
            trackers: Vec::new(),
            buffers: Vec::new(),
            init,
            started: false,
            both_lost: 0,
            terminated: false,
            last_t: None,
        })
    }

    pub fn mode(&self) -> TrackMode {
        self.mode
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn trackers(&self) -> &[TrackerInstance] {
        &self.trackers
    }

    fn start(&mut self, t0: f64) -> Result<()> {
        let labels: Vec<(Modality, IntegrationInterval)> = match self.mode {
            TrackMode::Fixed(i) => vec![(Modality::Fixed, IntegrationInterval::fixed(i))],
            TrackMode::Single(m) => vec![(m, self.config.interval(m)?)],
            TrackMode::Dual => vec![
                (Modality::Ast, self.config.interval(Modality::Ast)?),
                (Modality::Adt, self.config.interval(Modality::Adt)?),
            ],
        };
        for (label, iv) in labels {
            let kind = self.config.filter_for(label);
            self.trackers.push(TrackerInstance::new(label, kind, iv, self.init, t0));
            self.buffers.push(ScanBuffer::new(iv.i_max));
        }
        self.started = true;
        Ok(())
    }

    /// Consumes one scan; `None` once the track has terminated.
    pub fn step(&mut self, scan: Arc<Scan>) -> Result<Option<TrackOutput>> {
        if self.terminated {
            return Ok(None);
        }
        if let Some(t) = self.last_t {
            if scan.t_end <= t {
                return Err(Error::Domain(format!("scan {} does not advance time", scan.seq)));
            }
        }
        if !self.started {
            self.start(scan.t_start)?;
        }
        for buf in &mut self.buffers {
            buf.push_scan(Arc::clone(&scan))?;
        }

        let mut records = Vec::with_capacity(self.trackers.len());
        for (tr, buf) in self.trackers.iter_mut().zip(&self.buffers) {
            let ctx = StepContext {
                target: &self.target,
                weighting: &self.config.weighting,
                noise: &self.config.noise,
                min_points: self.config.min_points,
                blind: self.config.occluded(tr.label, scan.t_end),
            };
            let (next, rec) = tracker_step(tr, buf, &ctx)?;
            *tr = next;
            records.push(rec);
        }

        let mut status = StepStatus::default();
        for (tr, rec) in self.trackers.iter().zip(&records) {
            if rec.measurement.is_none() {
                match tr.label {
                    Modality::Ast => status.ast_lost = true,
                    Modality::Adt => status.adt_lost = true,
                    Modality::Fixed => {
                        status.ast_lost = true;
                        status.adt_lost = true;
                    }
                }
            }
        }

        let (position, velocity, covariance, omega) = if self.trackers.len() == 2 {
            self.fuse_pair(&mut status)?
        } else {
            let f = &self.trackers[0].filter;
            (f.position(), f.velocity(), f.covariance(), None)
        };

        // window lengths follow the fused distance
        let d = position.norm();
        for tr in &mut self.trackers {
            if tr.label != Modality::Fixed {
                tr.current_i = adapt_integration_time(d, &tr.interval)?;
            }
        }

        let lost = if self.trackers.len() == 2 {
            if status.ast_lost && status.adt_lost {
                self.both_lost += 1;
            } else {
                self.both_lost = 0;
            }
            self.both_lost
        } else {
            self.trackers[0].lost_count
        };
        if lost > self.config.lost_limit {
            status.terminated = true;
            self.terminated = true;
        }

        let snapshots: Vec<TrackerSnapshot> = self
            .trackers
            .iter()
            .zip(&records)
            .map(|(tr, rec)| TrackerSnapshot {
                label: tr.label,
                position: tr.filter.position(),
                velocity: tr.filter.velocity(),
                position_cov: tr.filter.position_covariance(),
                i: tr.current_i,
                points: rec.points,
                updated: rec.measurement.is_some(),
            })
            .collect();
        let window_of = |label: Modality| {
            self.trackers.iter().find(|t| t.label == label || t.label == Modality::Fixed).map_or(0, |t| t.current_i)
        };
        self.last_t = Some(scan.t_end);
        Ok(Some(TrackOutput {
            seq: scan.seq,
            t: scan.t_end,
            position,
            velocity,
            covariance,
            omega,
            trackers: snapshots,
            i_ast: window_of(Modality::Ast),
            i_adt: window_of(Modality::Adt),
            status,
        }))
    }

    /// Fuses the two trackers and writes the fused mean back into both.
    #[allow(clippy::type_complexity)]
    fn fuse_pair(
        &mut self,
        status: &mut StepStatus,
    ) -> Result<(Vector3<f64>, Vector3<f64>, DMatrix<f64>, Option<f64>)> {
        let (a, b) = (self.trackers[0].filter, self.trackers[1].filter);
        let same = a.kind() == b.kind();
        let (xa, pa, xb, pb) = if same {
            let (xa, mut xb) = (a.mean(), b.mean());
            if a.kind() == FilterKind::Ekf {
                xb[5] = xa[5] + wrap_angle(xb[5] - xa[5]);
            }
            (xa, a.covariance(), xb, b.covariance())
        } else {
            let (ca, qa) = a.to_cartesian();
            let (cb, qb) = b.to_cartesian();
            (
                DVector::from_column_slice(ca.as_slice()),
                DMatrix::from_column_slice(6, 6, qa.as_slice()),
                DVector::from_column_slice(cb.as_slice()),
                DMatrix::from_column_slice(6, 6, qb.as_slice()),
            )
        };

        let (x, p, omega) = match fuse(self.config.fusion, &xa, &pa, &xb, &pb, self.config.omega_tol) {
            Ok(r) => r,
            Err(Error::FusionDegenerate(_)) | Err(Error::Numeric(_)) => {
                status.fusion_degenerate = true;
                if pa.trace() <= pb.trace() {
                    (xa, pa, None)
                } else {
                    (xb, pb, None)
                }
            }
            Err(e) => return Err(e),
        };

        for tr in &mut self.trackers {
            if same {
                tr.filter.set_mean(&x)?;
            } else {
                tr.filter.set_cartesian(&crate::filters::Vector6::from_column_slice(x.as_slice()));
            }
        }
        let reference = self.trackers[0].filter;
        Ok((reference.position(), reference.velocity(), p, omega))
    }
}

/// Runs `mode` over a whole scan sequence.
pub fn track(
    scans: &[Scan],
    init: Vector3<f64>,
    mode: TrackMode,
    cfg: &PipelineConfig,
    target: &TargetSpec,
) -> Result<Vec<TrackOutput>> {
    let mut pipeline = Pipeline::new(mode, cfg.clone(), *target, init)?;
    let mut out = Vec::with_capacity(scans.len());
    for scan in scans {
        match pipeline.step(Arc::new(scan.clone()))? {
            Some(o) => out.push(o),
            None => break,
        }
    }
    Ok(out)
}

/// Both adaptive trackers with fusion and feedback.
pub fn dual_track(scans: &[Scan], init: Vector3<f64>, cfg: &PipelineConfig, target: &TargetSpec) -> Result<Vec<TrackOutput>> {
    track(scans, init, TrackMode::Dual, cfg, target)
}

/// A single tracker with a constant window of `i_const` scans.
pub fn fixed_track(
    scans: &[Scan],
    init: Vector3<f64>,
    i_const: usize,
    cfg: &PipelineConfig,
    target: &TargetSpec,
) -> Result<Vec<TrackOutput>> {
    if i_const == 0 {
        return Err(Error::Domain("fixed integration time must be at least 1".into()));
    }
    track(scans, init, TrackMode::Fixed(i_const), cfg, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;

    /// Scans whose returns are symmetric about `center`, so their centroid is exact.
    fn symmetric_scans(center: Vector3<f64>, n: usize, period: f64) -> Vec<Scan> {
        let offsets = [
            Vector3::new(0.05, 0.0, 0.0),
            Vector3::new(-0.05, 0.0, 0.0),
            Vector3::new(0.0, 0.05, 0.0),
            Vector3::new(0.0, -0.05, 0.0),
            Vector3::new(0.0, 0.0, 0.05),
            Vector3::new(0.0, 0.0, -0.05),
        ];
        (0..n)
            .map(|k| {
                let t0 = k as f64 * period;
                let t = t0 + period / 2.0;
                let points = offsets.iter().map(|o| {
                    let p = center + o;
                    Point::new(p.x, p.y, p.z, 0.8, t)
                });
                Scan { seq: k as u64, t_start: t0, t_end: t0 + period, points: points.collect() }
            })
            .collect()
    }

    fn empty_scans(n: usize) -> Vec<Scan> {
        (0..n)
            .map(|k| Scan { seq: k as u64, t_start: k as f64 * 0.01, t_end: (k + 1) as f64 * 0.01, points: vec![] })
            .collect()
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("adaptive-dual".parse::<TrackMode>().unwrap(), TrackMode::Dual);
        assert_eq!("adaptive-ast".parse::<TrackMode>().unwrap(), TrackMode::Single(Modality::Ast));
        assert_eq!("fixed:20".parse::<TrackMode>().unwrap(), TrackMode::Fixed(20));
        assert!("fixed:0".parse::<TrackMode>().is_err());
        assert!("sideways".parse::<TrackMode>().is_err());
        assert_eq!(TrackMode::Fixed(5).to_string().parse::<TrackMode>().unwrap(), TrackMode::Fixed(5));
    }

    #[test]
    fn status_round_trip() {
        let st = StepStatus { ast_lost: true, adt_lost: true, fusion_degenerate: true, terminated: false };
        assert_eq!(st.to_string(), "both_lost|fusion_degenerate");
        assert_eq!(st.to_string().parse::<StepStatus>().unwrap(), st);
        assert_eq!("ok".parse::<StepStatus>().unwrap(), StepStatus::default());
    }

    #[test]
    fn stationary_noiseless_fixed_point() {
        let center = Vector3::new(4.0, 0.5, 1.0);
        let scans = symmetric_scans(center, 30, 0.01);
        for kind in [FilterKind::Kf, FilterKind::Ekf] {
            let cfg = PipelineConfig { filter: kind, ..PipelineConfig::default() };
            let out = dual_track(&scans, center, &cfg, &TargetSpec::cube(0.4)).unwrap();
            for o in &out[10..] {
                assert!((o.position - center).norm() <= 1e-3);
                assert!(o.status.is_ok());
            }
        }
    }

    #[test]
    fn empty_windows_predict_and_count_losses() {
        let init = Vector3::new(5.0, 0.0, 0.0);
        let cfg = PipelineConfig::default();
        let target = TargetSpec::cube(0.4);
        let scans = empty_scans(5);
        let out = track(&scans, init, TrackMode::Single(Modality::Ast), &cfg, &target).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|o| o.status.ast_lost));
        let mut p = Pipeline::new(TrackMode::Single(Modality::Ast), cfg, target, init).unwrap();
        for s in &scans {
            p.step(Arc::new(s.clone())).unwrap();
        }
        assert_eq!(p.trackers()[0].lost_count, 5);
        // zero velocity prior, pure prediction keeps the position
        assert!((out[4].position - init).norm() < 1e-12);
    }

    #[test]
    fn min_points_gate() {
        let center = Vector3::new(4.0, 0.0, 0.0);
        let scans: Vec<Scan> = symmetric_scans(center, 1, 0.01)
            .into_iter()
            .map(|mut s| {
                s.points.truncate(3);
                s
            })
            .collect();
        let cfg = PipelineConfig { min_points: 4, ..PipelineConfig::default() };
        let out = fixed_track(&scans, center, 1, &cfg, &TargetSpec::cube(0.4)).unwrap();
        assert!(!out[0].trackers[0].updated);
        assert_eq!(out[0].trackers[0].points, 3);
        assert!(out[0].status.ast_lost);
    }

    #[test]
    fn terminates_after_lost_limit() {
        let cfg = PipelineConfig { lost_limit: 10, ..PipelineConfig::default() };
        let out = dual_track(&empty_scans(40), Vector3::new(5.0, 0.0, 0.0), &cfg, &TargetSpec::cube(0.4)).unwrap();
        assert_eq!(out.len(), 11);
        assert!(out.last().unwrap().status.terminated);
        assert!(out[..10].iter().all(|o| !o.status.terminated));
    }

    #[test]
    fn windows_stay_in_bounds_and_follow_distance() {
        let cfg = PipelineConfig::default();
        for d in [2.0, 8.0, 15.0, 30.0] {
            let center = Vector3::new(d, 0.0, 0.0);
            let out = dual_track(&symmetric_scans(center, 5, 0.01), center, &cfg, &TargetSpec::cube(0.4)).unwrap();
            let ast = cfg.interval(Modality::Ast).unwrap();
            let adt = cfg.interval(Modality::Adt).unwrap();
            for o in &out {
                assert!(ast.contains(o.i_ast) && adt.contains(o.i_adt));
                assert_eq!(o.i_adt, adapt_integration_time(o.position.norm(), &adt).unwrap());
            }
        }
    }

    #[test]
    fn feedback_leaves_covariances_alone() {
        // linear filter: covariance evolution does not depend on the mean
        let center = Vector3::new(4.0, 0.0, 0.0);
        let target = TargetSpec::cube(0.4);
        let cfg = PipelineConfig { filter: FilterKind::Kf, ..PipelineConfig::default() };
        let scans = symmetric_scans(center, 10, 0.01);
        let fused = dual_track(&scans, center + Vector3::new(0.1, 0.0, 0.0), &cfg, &target).unwrap();
        let single = track(&scans, center, TrackMode::Single(Modality::Ast), &cfg, &target).unwrap();
        for (a, b) in fused.iter().zip(&single) {
            let pa = a.tracker(Modality::Ast).unwrap().position_cov;
            let pb = b.tracker(Modality::Ast).unwrap().position_cov;
            assert!((pa - pb).amax() < 1e-15);
        }
    }

    #[test]
    fn rejects_time_going_backwards() {
        let center = Vector3::new(4.0, 0.0, 0.0);
        let mut scans = symmetric_scans(center, 2, 0.01);
        scans[1].t_start = 0.0;
        scans[1].t_end = 0.005;
        assert!(dual_track(&scans, center, &PipelineConfig::default(), &TargetSpec::cube(0.4)).is_err());
    }

    #[test]
    fn occlusion_blinds_only_its_tracker() {
        let center = Vector3::new(4.0, 0.0, 0.0);
        let cfg = PipelineConfig {
            occlusions: vec![Occlusion { tracker: Modality::Ast, start: 0.0, end: 0.1 }],
            ..PipelineConfig::default()
        };
        let out = dual_track(&symmetric_scans(center, 20, 0.01), center, &cfg, &TargetSpec::cube(0.4)).unwrap();
        assert!(out[..9].iter().all(|o| o.status.ast_lost && !o.status.adt_lost));
        assert!(out[12..].iter().all(|o| o.status.is_ok()));
    }

    #[test]
    fn mixed_filter_types_fuse_in_cartesian_space() {
        let center = Vector3::new(4.0, 0.0, 0.0);
        let cfg = PipelineConfig { ast_filter: Some(FilterKind::Kf), ..PipelineConfig::default() };
        let out = dual_track(&symmetric_scans(center, 20, 0.01), center, &cfg, &TargetSpec::cube(0.4)).unwrap();
        assert_eq!(out[0].covariance.nrows(), 6);
        assert!((out[19].position - center).norm() < 1e-3);
    }
}
