//! File formats: JSON Lines scans, CSV ground truth and trajectories.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_stream, Point, Scan};
use crate::pipeline::TrackOutput;
use crate::scan_sim::{GroundTruth, TruthSample};

pub const FORMAT_VERSION: u32 = 1;
const VERSION_LINE: &str = "# format_version: 1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanLine {
    format_version: u32,
    seq: u64,
    t_start: f64,
    t_end: f64,
    /// `[x, y, z, intensity, t]`
    points: Vec<[f64; 5]>,
}

pub fn write_scans<W: Write>(mut w: W, scans: &[Scan]) -> Result<()> {
    for s in scans {
        let line = ScanLine {
            format_version: FORMAT_VERSION,
            seq: s.seq,
            t_start: s.t_start,
            t_end: s.t_end,
            points: s.points.iter().map(|p| [p.x, p.y, p.z, p.intensity, p.t]).collect(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses and validates a scan stream; blank lines are skipped.
pub fn read_scans(src: &str) -> Result<Vec<Scan>> {
    let mut scans = Vec::new();
    for (n, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: ScanLine = serde_json::from_str(line).map_err(|e| Error::Format(format!("scans line {}: {e}", n + 1)))?;
        if l.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "scans line {}: unsupported format_version {}",
                n + 1,
                l.format_version
            )));
        }
        let scan = Scan {
            seq: l.seq,
            t_start: l.t_start,
            t_end: l.t_end,
            points: l.points.iter().map(|p| Point::new(p[0], p[1], p[2], p[3], p[4])).collect(),
        };
        scan.validate().map_err(|e| Error::Format(format!("scans line {}: {e}", n + 1)))?;
        scans.push(scan);
    }
    validate_stream(&scans).map_err(|e| Error::Format(e.to_string()))?;
    Ok(scans)
}

fn strip_version(src: &str, what: &str) -> Result<String> {
    let mut lines = src.lines();
    match lines.next().map(str::trim) {
        Some(VERSION_LINE) => Ok(lines.collect::<Vec<_>>().join("\n")),
        Some(other) if other.starts_with("# format_version:") => {
            Err(Error::Format(format!("{what}: unsupported version line {other:?}")))
        }
        _ => Err(Error::Format(format!("{what}: missing {VERSION_LINE:?} header"))),
    }
}

fn csv_writer<W: Write>(mut w: W) -> Result<csv::Writer<W>> {
    writeln!(w, "{VERSION_LINE}")?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_error(what: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{what}: {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    vx: f64,
    vy: f64,
    vz: f64,
}

pub fn write_truth<W: Write>(w: W, gt: &GroundTruth) -> Result<()> {
    let mut out = csv_writer(w)?;
    for s in &gt.samples {
        let [x, y, z] = s.position;
        let [vx, vy, vz] = s.velocity;
        out.serialize(TruthRow { t: s.t, x, y, z, vx, vy, vz }).map_err(|e| csv_error("truth", e))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth(src: &str) -> Result<GroundTruth> {
    let body = strip_version(src, "truth")?;
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let mut samples = Vec::new();
    for row in rd.deserialize::<TruthRow>() {
        let r = row.map_err(|e| csv_error("truth", e))?;
        samples.push(TruthSample { t: r.t, position: [r.x, r.y, r.z], velocity: [r.vx, r.vy, r.vz] });
    }
    let gt = GroundTruth { samples };
    gt.validate()?;
    Ok(gt)
}

/// One trajectory CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub omega: Option<f64>,
    #[serde(rename = "I_ast")]
    pub i_ast: usize,
    #[serde(rename = "I_adt")]
    pub i_adt: usize,
    pub status: String,
}

impl TrajectoryRow {
    pub fn position(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }
}

impl From<&TrackOutput> for TrajectoryRow {
    fn from(o: &TrackOutput) -> Self {
        Self {
            t: o.t,
            x: o.position.x,
            y: o.position.y,
            z: o.position.z,
            vx: o.velocity.x,
            vy: o.velocity.y,
            vz: o.velocity.z,
            omega: o.omega,
            i_ast: o.i_ast,
            i_adt: o.i_adt,
            status: o.status.to_string(),
        }
    }
}

pub fn rows_from_outputs(outputs: &[TrackOutput]) -> Vec<TrajectoryRow> {
    outputs.iter().map(TrajectoryRow::from).collect()
}

pub fn write_trajectory<W: Write>(w: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut out = csv_writer(w)?;
    for r in rows {
        out.serialize(r).map_err(|e| csv_error("trajectory", e))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory(src: &str) -> Result<Vec<TrajectoryRow>> {
    let body = strip_version(src, "trajectory")?;
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    for row in rd.deserialize::<TrajectoryRow>() {
        let r = row.map_err(|e| csv_error("trajectory", e))?;
        r.status.parse::<crate::pipeline::StepStatus>()?;
        if rows.last().is_some_and(|p| !(r.t > p.t)) {
            return Err(Error::Format("trajectory timestamps must strictly increase".into()));
        }
        rows.push(r);
    }
    Ok(rows)
}

/// Trajectory CSV as bytes.
pub fn trajectory_bytes(rows: &[TrajectoryRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, rows)?;
    Ok(buf)
}

/// Reads a whole file, keeping missing files distinguishable.
pub fn read_file(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}
