//! Range images: projection of an integrated cloud onto the sensor's angular
//! grid, zero-pixel classification, hole filling and detection back-projection.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PointCloud;
use crate::scan_sim::direction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeImageConfig {
    pub width: usize,
    pub height: usize,
    /// Degrees.
    pub fov_az: f64,
    /// Degrees.
    pub fov_el: f64,
    /// Intensity share of the combined channel.
    pub alpha: f64,
    /// Return neighbors that mark a zero pixel as unscanned.
    pub neighbor_k: usize,
    pub threshold: f64,
}

impl Default for RangeImageConfig {
    fn default() -> Self {
        Self { width: 512, height: 160, fov_az: 81.7, fov_el: 25.1, alpha: 0.5, neighbor_k: 3, threshold: 0.02 }
    }
}

impl RangeImageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!("image must be at least 2x2, got {}x{}", self.width, self.height)));
        }
        if !(self.fov_az > 0.0 && self.fov_el > 0.0 && self.fov_az < 360.0 && self.fov_el < 180.0) {
            return Err(Error::Config("image fov must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.neighbor_k == 0 || self.neighbor_k > 8 {
            return Err(Error::Config("neighbor_k must lie in 1..=8".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelClass {
    Return,
    NoReturnBackground,
    Unscanned,
}

/// Row-major image; pixel `(u, v)` is column `u`, row `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    pub width: usize,
    pub height: usize,
    /// Radians.
    pub fov_az: f64,
    /// Radians.
    pub fov_el: f64,
    /// Range in meters, 0 where nothing was observed.
    pub depth: Vec<f64>,
    pub intensity: Vec<f64>,
    pub combined: Vec<f64>,
    pub mask: Vec<PixelClass>,
}

impl RangeImage {
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn return_count(&self) -> usize {
        self.mask.iter().filter(|m| **m == PixelClass::Return).count()
    }

    /// Pixel of a sensor-frame direction, `None` outside the field of view.
    pub fn pixel_of(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let az = p.y.atan2(p.x);
        let el = p.z.atan2(p.x.hypot(p.y));
        let fu = (az / self.fov_az + 0.5) * (self.width - 1) as f64;
        let fv = (0.5 - el / self.fov_el) * (self.height - 1) as f64;
        let (u, v) = (fu.round(), fv.round());
        if u < 0.0 || v < 0.0 || u > (self.width - 1) as f64 || v > (self.height - 1) as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    /// Unit ray through continuous pixel coordinates.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let az = (u / (self.width - 1) as f64 - 0.5) * self.fov_az;
        let el = (0.5 - v / (self.height - 1) as f64) * self.fov_el;
        direction(az, el)
    }

    fn neighbors(&self, u: usize, v: usize) -> impl Iterator<Item = usize> + '_ {
        let (w, h) = (self.width as isize, self.height as isize);
        (-1isize..=1)
            .flat_map(move |dv| (-1isize..=1).map(move |du| (du, dv)))
            .filter(|&(du, dv)| du != 0 || dv != 0)
            .filter_map(move |(du, dv)| {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                (nu >= 0 && nv >= 0 && nu < w && nv < h).then(|| (nv * w + nu) as usize)
            })
    }

    /// 16-bit binary PGM of the depth channel in millimeters.
    pub fn depth_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for d in &self.depth {
            let mm = (d * 1000.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&mm.to_be_bytes());
        }
        out
    }

    /// 8-bit binary PGM of the combined channel.
    pub fn combined_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.combined.iter().map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }
}

/// Min-max normalization in place; an all-equal input maps to 1.0.
fn min_max(values: &mut [f64]) {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if values.is_empty() {
        return;
    }
    if hi - lo <= 0.0 {
        values.iter_mut().for_each(|v| *v = 1.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
}

/// Projects a cloud; the nearest point wins each pixel.
pub fn project(cloud: &PointCloud, cfg: &RangeImageConfig) -> Result<RangeImage> {
    cfg.validate()?;
    let n = cfg.width * cfg.height;
    let mut img = RangeImage {
        width: cfg.width,
        height: cfg.height,
        fov_az: cfg.fov_az.to_radians(),
        fov_el: cfg.fov_el.to_radians(),
        depth: vec![0.0; n],
        intensity: vec![0.0; n],
        combined: vec![0.0; n],
        mask: vec![PixelClass::NoReturnBackground; n],
    };
    for p in &cloud.points {
        let pos = p.position();
        let r = pos.norm();
        if !(r > 0.0 && r.is_finite()) {
            continue;
        }
        let Some((u, v)) = img.pixel_of(&pos) else { continue };
        let i = img.index(u, v);
        if img.mask[i] != PixelClass::Return || r < img.depth[i] {
            img.mask[i] = PixelClass::Return;
            img.depth[i] = r;
            img.intensity[i] = p.intensity;
        }
    }
    let hits: Vec<usize> = (0..n).filter(|&i| img.mask[i] == PixelClass::Return).collect();
    let mut inten: Vec<f64> = hits.iter().map(|&i| img.intensity[i]).collect();
    let mut inv: Vec<f64> = hits.iter().map(|&i| 1.0 / img.depth[i]).collect();
    min_max(&mut inten);
    min_max(&mut inv);
    for (k, &i) in hits.iter().enumerate() {
        img.combined[i] = cfg.alpha * inten[k] + (1.0 - cfg.alpha) * inv[k];
    }
    Ok(img)
}

/// Splits zero pixels into unscanned gaps and background.
pub fn classify_zero_regions(img: &RangeImage, k: usize) -> RangeImage {
    let mut out = img.clone();
    for v in 0..img.height {
        for u in 0..img.width {
            let i = img.index(u, v);
            if img.mask[i] == PixelClass::Return {
                continue;
            }
            let returns = img.neighbors(u, v).filter(|&j| img.mask[j] == PixelClass::Return).count();
            out.mask[i] = if returns >= k { PixelClass::Unscanned } else { PixelClass::NoReturnBackground };
        }
    }
    out
}

/// Nearest return pixel by Euclidean pixel distance, ties by row-major order.
fn nearest_return(img: &RangeImage, u: usize, v: usize) -> Option<usize> {
    let (w, h) = (img.width as isize, img.height as isize);
    let max_ring = w.max(h);
    let mut best: Option<(isize, usize)> = None;
    for ring in 1..=max_ring {
        if let Some((d2, _)) = best {
            // every pixel on this ring is at least `ring` away
            if ring * ring > d2 {
                break;
            }
        }
        for dv in -ring..=ring {
            for du in -ring..=ring {
                if du.abs() != ring && dv.abs() != ring {
                    continue;
                }
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu < 0 || nv < 0 || nu >= w || nv >= h {
                    continue;
                }
                let j = (nv * w + nu) as usize;
                if img.mask[j] != PixelClass::Return {
                    continue;
                }
                let d2 = du * du + dv * dv;
                if best.is_none_or(|(bd, bj)| d2 < bd || (d2 == bd && j < bj)) {
                    best = Some((d2, j));
                }
            }
        }
    }
    best.map(|(_, j)| j)
}

/// Copies the nearest return into every unscanned pixel and zeroes background.
pub fn fill_unscanned(img: &RangeImage) -> Result<RangeImage> {
    if img.return_count() == 0 {
        return Err(Error::DegenerateImage);
    }
    let mut out = img.clone();
    for v in 0..img.height {
        for u in 0..img.width {
            let i = img.index(u, v);
            match img.mask[i] {
                PixelClass::Return => {}
                PixelClass::NoReturnBackground => {
                    out.depth[i] = 0.0;
                    out.intensity[i] = 0.0;
                    out.combined[i] = 0.0;
                }
                PixelClass::Unscanned => {
                    let j = nearest_return(img, u, v).ok_or(Error::DegenerateImage)?;
                    out.depth[i] = img.depth[j];
                    out.intensity[i] = img.intensity[j];
                    out.combined[i] = img.combined[j];
                }
            }
        }
    }
    Ok(out)
}

/// Fills, min-max normalizes the combined channel over observed pixels and
/// zeroes values below `threshold`.
pub fn fill_and_normalize(img: &RangeImage, threshold: f64) -> Result<RangeImage> {
    let mut out = fill_unscanned(img)?;
    let observed: Vec<usize> = (0..out.mask.len()).filter(|&i| out.mask[i] != PixelClass::NoReturnBackground).collect();
    let mut values: Vec<f64> = observed.iter().map(|&i| out.combined[i]).collect();
    min_max(&mut values);
    for (&i, v) in observed.iter().zip(values) {
        out.combined[i] = if v < threshold { 0.0 } else { v };
    }
    Ok(out)
}

/// Project, classify and fill with the configured knobs.
pub fn render(cloud: &PointCloud, cfg: &RangeImageConfig) -> Result<RangeImage> {
    let img = project(cloud, cfg)?;
    fill_and_normalize(&classify_zero_regions(&img, cfg.neighbor_k), cfg.threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl DetectionBox {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let ok = self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= (width - 1) as f64
            && self.y_max <= (height - 1) as f64
            && (0.0..=1.0).contains(&self.confidence);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("detection box {self:?} is malformed or outside a {width}x{height} image")))
        }
    }
}

/// Contents of a detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detections {
    pub boxes: Vec<DetectionBox>,
}

impl Detections {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("detections: {e}")))
    }

    /// The highest-confidence box; the first one on ties.
    pub fn best(&self) -> Option<&DetectionBox> {
        self.boxes.iter().fold(None, |acc: Option<&DetectionBox>, b| match acc {
            Some(a) if a.confidence >= b.confidence => Some(a),
            _ => Some(b),
        })
    }
}

/// Position along the box-center ray at the median depth of the box's returns.
pub fn backproject_detection(img: &RangeImage, b: &DetectionBox) -> Result<Vector3<f64>> {
    b.validate(img.width, img.height)?;
    let (u0, u1) = (b.x_min.floor() as usize, (b.x_max.ceil() as usize).min(img.width - 1));
    let (v0, v1) = (b.y_min.floor() as usize, (b.y_max.ceil() as usize).min(img.height - 1));
    let mut depths: Vec<f64> = (v0..=v1)
        .flat_map(|v| (u0..=u1).map(move |u| (u, v)))
        .map(|(u, v)| img.index(u, v))
        .filter(|&i| img.mask[i] == PixelClass::Return)
        .map(|i| img.depth[i])
        .collect();
    if depths.is_empty() {
        return Err(Error::EmptyDetection);
    }
    depths.sort_by(f64::total_cmp);
    let m = depths.len();
    let median = if m % 2 == 1 { depths[m / 2] } else { 0.5 * (depths[m / 2 - 1] + depths[m / 2]) };
    let ray = img.ray(0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max));
    Ok(ray * median)
}

/// Tight box around the return pixels within `radius` meters of `center`.
pub fn box_around(img: &RangeImage, center: &Vector3<f64>, radius: f64) -> Option<DetectionBox> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for v in 0..img.height {
        for u in 0..img.width {
            let i = img.index(u, v);
            if img.mask[i] != PixelClass::Return {
                continue;
            }
            let p = img.ray(u as f64, v as f64) * img.depth[i];
            if (p - center).norm() > radius {
                continue;
            }
            bounds = Some(match bounds {
                None => (u, v, u, v),
                Some((a, b, c, d)) => (a.min(u), b.min(v), c.max(u), d.max(v)),
            });
        }
    }
    let (a, b, c, d) = bounds?;
    let grow = |lo: usize, hi: usize, max: usize| {
        if lo < hi {
            (lo as f64, hi as f64)
        } else if hi < max {
            (lo as f64, (hi + 1) as f64)
        } else {
            ((lo - 1) as f64, hi as f64)
        }
    };
    let (x_min, x_max) = grow(a, c, img.width - 1);
    let (y_min, y_max) = grow(b, d, img.height - 1);
    Some(DetectionBox { x_min, y_min, x_max, y_max, confidence: 1.0 })
}
