//! Evaluation against ground truth, experiment and ablation runners.

pub mod config;
pub mod io;
pub mod scenarios;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::association::WeightFn;
use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::fusion::FusionStrategy;
use crate::model::Scan;
use crate::pipeline::{track, PipelineConfig, StepStatus, TrackMode};
use crate::scan_sim::{simulate_sequence, GroundTruth};

pub use config::{OutputPaths, RunConfig};
pub use io::{TrajectoryRow, FORMAT_VERSION};

/// Root mean square position error against linearly interpolated truth.
pub fn rmse<I>(estimates: I, gt: &GroundTruth) -> Result<f64>
where
    I: IntoIterator<Item = (f64, Vector3<f64>)>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for (t, p) in estimates {
        let truth = gt
            .position_at(t)
            .ok_or_else(|| Error::Eval(format!("ground truth does not cover t = {t}")))?;
        sum += (p - truth).norm_squared();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Eval("no estimates to evaluate".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Metrics of one tracked trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format_version: u32,
    /// Emitted estimates.
    pub steps: usize,
    /// No termination and no error above the divergence threshold.
    pub completed: bool,
    /// Meters, over all emitted estimates.
    pub rmse: f64,
    pub max_error: f64,
    /// First step that terminated or exceeded the divergence threshold.
    pub divergence_step: Option<usize>,
    pub terminated: bool,
    pub mean_omega: Option<f64>,
    /// Steps with an empty sparse-window association.
    pub lost_ast: usize,
    /// Steps with an empty dense-window association.
    pub lost_adt: usize,
}

/// Scores a trajectory; `threshold` is the divergence error in meters.
pub fn evaluate(rows: &[TrajectoryRow], gt: &GroundTruth, threshold: f64) -> Result<EvalReport> {
    let value = rmse(rows.iter().map(|r| (r.t, r.position())), gt)?;
    let mut report = EvalReport {
        format_version: FORMAT_VERSION,
        steps: rows.len(),
        completed: true,
        rmse: value,
        max_error: 0.0,
        divergence_step: None,
        terminated: false,
        mean_omega: None,
        lost_ast: 0,
        lost_adt: 0,
    };
    let (mut omega_sum, mut omega_n) = (0.0, 0usize);
    for (k, r) in rows.iter().enumerate() {
        let status: StepStatus = r.status.parse()?;
        let err = (r.position() - gt.position_at(r.t).expect("covered by rmse")).norm();
        report.max_error = report.max_error.max(err);
        if (err > threshold || status.terminated) && report.divergence_step.is_none() {
            report.divergence_step = Some(k);
        }
        report.terminated |= status.terminated;
        report.lost_ast += status.ast_lost as usize;
        report.lost_adt += status.adt_lost as usize;
        if let Some(w) = r.omega {
            omega_sum += w;
            omega_n += 1;
        }
    }
    report.completed = report.divergence_step.is_none();
    report.mean_omega = (omega_n > 0).then(|| omega_sum / omega_n as f64);
    Ok(report)
}

/// Report of one mode within an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub scenario: String,
    pub mode: TrackMode,
    pub filter: String,
    pub weighting: String,
    pub fusion: String,
    pub seed: u64,
    pub eval: EvalReport,
}

fn filter_label(cfg: &PipelineConfig, mode: TrackMode) -> String {
    use crate::integration::Modality;
    match mode {
        TrackMode::Fixed(_) => cfg.filter.to_string(),
        TrackMode::Single(m) => cfg.filter_for(m).to_string(),
        TrackMode::Dual => {
            let (a, b) = (cfg.filter_for(Modality::Ast), cfg.filter_for(Modality::Adt));
            if a == b {
                a.to_string()
            } else {
                format!("{a}+{b}")
            }
        }
    }
}

/// One tracked mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub report: RunReport,
    pub rows: Vec<TrajectoryRow>,
}

/// Simulated data plus every tracked mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub scans: Vec<Scan>,
    pub truth: GroundTruth,
    pub runs: Vec<Run>,
}

pub fn simulate(cfg: &RunConfig) -> Result<(Vec<Scan>, GroundTruth)> {
    cfg.validate()?;
    simulate_sequence(&cfg.sensor, &cfg.trajectory, &cfg.target, cfg.duration(), cfg.seed)
}

/// The configured initial position, or the truth at the first sample.
pub fn initial_position(cfg: &RunConfig, gt: &GroundTruth) -> Result<Vector3<f64>> {
    match cfg.init {
        Some(p) => Ok(Vector3::from(p)),
        None => {
            let s = gt.samples.first().ok_or_else(|| Error::Eval("empty ground truth".into()))?;
            Ok(Vector3::from(s.position))
        }
    }
}

fn track_rows(
    scans: &[Scan],
    init: Vector3<f64>,
    mode: TrackMode,
    pipeline: &PipelineConfig,
    cfg: &RunConfig,
) -> Result<Vec<TrajectoryRow>> {
    Ok(io::rows_from_outputs(&track(scans, init, mode, pipeline, &cfg.target)?))
}

fn run_mode(
    cfg: &RunConfig,
    pipeline: &PipelineConfig,
    scans: &[Scan],
    truth: &GroundTruth,
    mode: TrackMode,
) -> Result<Run> {
    let init = initial_position(cfg, truth)?;
    let rows = track_rows(scans, init, mode, pipeline, cfg)?;
    let eval = evaluate(&rows, truth, cfg.divergence_threshold)?;
    let report = RunReport {
        scenario: cfg.name.clone(),
        mode,
        filter: filter_label(pipeline, mode),
        weighting: pipeline.weighting.name().to_string(),
        fusion: pipeline.fusion.name().to_string(),
        seed: cfg.seed,
        eval,
    };
    Ok(Run { report, rows })
}

/// Runs `jobs` on scoped threads, preserving order.
fn parallel<T: Send, F: Fn(usize) -> Result<T> + Sync>(n: usize, f: F) -> Result<Vec<T>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n.max(1));
    if workers <= 1 {
        return (0..n).map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Simulates once and tracks every configured mode.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    let (scans, truth) = simulate(cfg)?;
    let runs = parallel(cfg.modes.len(), |i| run_mode(cfg, &cfg.pipeline, &scans, &truth, cfg.modes[i]))?;
    Ok(Experiment { scans, truth, runs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Weighting,
    Fusion,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weighting" => Ok(AblationAxis::Weighting),
            "fusion" => Ok(AblationAxis::Fusion),
            other => Err(Error::Config(format!("unknown ablation axis {other:?}"))),
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationAxis::Weighting => "weighting",
            AblationAxis::Fusion => "fusion",
        })
    }
}

/// One cell of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub scenario: String,
    pub axis: AblationAxis,
    pub filter: FilterKind,
    pub mode: TrackMode,
    pub variant: String,
    pub completed: bool,
    pub rmse: f64,
    pub mean_omega: Option<f64>,
    pub divergence_step: Option<usize>,
    pub steps: usize,
}

fn weighting_variants(base: &WeightFn) -> [WeightFn; 3] {
    let gamma = match base {
        WeightFn::Exponential { gamma } => *gamma,
        _ => 5.0,
    };
    let window = match base {
        WeightFn::Linear { window } => *window,
        _ => None,
    };
    [WeightFn::None, WeightFn::Linear { window }, WeightFn::Exponential { gamma }]
}

/// Crosses each base scenario with {KF, EKF} and the axis variants. The
/// weighting axis runs every configured mode; the fusion axis runs the dual
/// mode only.
pub fn run_ablation(bases: &[RunConfig], axis: AblationAxis) -> Result<Vec<AblationRow>> {
    let mut bases: Vec<&RunConfig> = bases.iter().collect();
    bases.sort_by(|a, b| a.name.cmp(&b.name));
    let mut rows = Vec::new();
    for base in bases {
        let (scans, truth) = simulate(base)?;
        let mut cells: Vec<(FilterKind, TrackMode, String, PipelineConfig)> = Vec::new();
        for filter in [FilterKind::Kf, FilterKind::Ekf] {
            let mut p = base.pipeline.clone();
            p.filter = filter;
            p.ast_filter = None;
            p.adt_filter = None;
            match axis {
                AblationAxis::Weighting => {
                    for mode in &base.modes {
                        for w in weighting_variants(&base.pipeline.weighting) {
                            let cell = PipelineConfig { weighting: w, ..p.clone() };
                            cells.push((filter, *mode, w.name().to_string(), cell));
                        }
                    }
                }
                AblationAxis::Fusion => {
                    for fusion in FusionStrategy::ALL {
                        let cell = PipelineConfig { fusion, ..p.clone() };
                        cells.push((filter, TrackMode::Dual, fusion.name().to_string(), cell));
                    }
                }
            }
        }
        let runs = parallel(cells.len(), |i| run_mode(base, &cells[i].3, &scans, &truth, cells[i].1))?;
        for ((filter, mode, variant, _), run) in cells.into_iter().zip(runs) {
            let e = run.report.eval;
            rows.push(AblationRow {
                scenario: base.name.clone(),
                axis,
                filter,
                mode,
                variant,
                completed: e.completed,
                rmse: e.rmse,
                mean_omega: e.mean_omega,
                divergence_step: e.divergence_step,
                steps: e.steps,
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation<W: std::io::Write>(mut w: W, rows: &[AblationRow]) -> Result<()> {
    writeln!(w, "# format_version: {FORMAT_VERSION}")?;
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan_sim::TruthSample;

    fn line_truth() -> GroundTruth {
        GroundTruth {
            samples: (0..=10)
                .map(|k| {
                    let t = k as f64 * 0.1;
                    TruthSample { t, position: [t, 0.0, 0.0], velocity: [1.0, 0.0, 0.0] }
                })
                .collect(),
        }
    }

    fn row(t: f64, x: f64, status: &str) -> TrajectoryRow {
        TrajectoryRow {
            t,
            x,
            y: 0.0,
            z: 0.0,
            vx: 0.0,
            vy: 0.0,
            vz: 0.0,
            omega: Some(0.5),
            i_ast: 1,
            i_adt: 10,
            status: status.into(),
        }
    }

    #[test]
    fn rmse_examples() {
        let gt = line_truth();
        let exact = [(0.05, Vector3::new(0.05, 0.0, 0.0)), (0.55, Vector3::new(0.55, 0.0, 0.0))];
        assert!(rmse(exact, &gt).unwrap() < 1e-15);
        let offset = (1..9).map(|k| (k as f64 * 0.1, Vector3::new(k as f64 * 0.1 + 0.1, 0.0, 0.0)));
        assert!((rmse(offset, &gt).unwrap() - 0.1).abs() < 1e-12);
        let two = [(0.2, Vector3::new(0.2, 0.3, 0.0)), (0.4, Vector3::new(0.4, 0.0, 0.4))];
        assert!((rmse(two, &gt).unwrap() - 0.125f64.sqrt()).abs() < 1e-12);
        assert!(rmse(std::iter::empty(), &gt).is_err());
        assert!(rmse([(1.5, Vector3::zeros())], &gt).is_err());
    }

    #[test]
    fn evaluation_flags_divergence() {
        let gt = line_truth();
        let rows = vec![row(0.1, 0.1, "ok"), row(0.2, 6.0, "ast_lost"), row(0.3, 0.3, "both_lost|terminated")];
        let r = evaluate(&rows, &gt, 5.0).unwrap();
        assert!(!r.completed && r.terminated);
        assert_eq!(r.divergence_step, Some(1));
        assert_eq!((r.lost_ast, r.lost_adt), (2, 1));
        assert_eq!(r.mean_omega, Some(0.5));
        let ok = evaluate(&rows[..1], &gt, 5.0).unwrap();
        assert!(ok.completed && ok.divergence_step.is_none());
    }

    #[test]
    fn ablation_axis_parsing() {
        assert_eq!("fusion".parse::<AblationAxis>().unwrap(), AblationAxis::Fusion);
        assert!("colour".parse::<AblationAxis>().is_err());
        assert_eq!(weighting_variants(&WeightFn::Exponential { gamma: 2.0 })[2], WeightFn::Exponential { gamma: 2.0 });
    }

    #[test]
    fn parallel_preserves_order() {
        let v = parallel(37, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..37).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel(5, |i| if i == 3 { Err(Error::Eval("x".into())) } else { Ok(i) }).is_err());
    }
}
