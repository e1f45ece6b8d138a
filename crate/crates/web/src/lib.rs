//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns JSON text or raw bytes so the page needs no glue
//! beyond what `wasm-bindgen` generates.

use nalgebra::DMatrix;
use serde_json::json;
use wasm_bindgen::prelude::*;

use scantrack::eval::{initial_position, scenarios, simulate};
use scantrack::fusion::{ici_fuse_optimal, ici_objective, DEFAULT_OMEGA_TOL};
use scantrack::model::PointCloud;
use scantrack::pipeline::{track, TrackMode};
use scantrack::range_image::{render, PixelClass, RangeImageConfig};

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Names of the bundled scenarios as a JSON array.
pub fn scenario_names_json() -> String {
    json!(scenarios::names().collect::<Vec<_>>()).to_string()
}

/// Tracks a bundled scenario with one mode; returns truth, estimates and the
/// evaluation summary as JSON.
pub fn track_scenario_json(name: &str, mode: &str, seed: u64, noise_sigma: f64) -> Result<String, String> {
    let mut cfg = scenarios::load(name).map_err(msg)?;
    cfg.seed = seed;
    cfg.sensor.noise_sigma = noise_sigma;
    cfg.validate().map_err(msg)?;
    let mode: TrackMode = mode.parse().map_err(msg)?;
    let (scans, truth) = simulate(&cfg).map_err(msg)?;
    let init = initial_position(&cfg, &truth).map_err(msg)?;
    let out = track(&scans, init, mode, &cfg.pipeline, &cfg.target).map_err(msg)?;
    let rows = scantrack::eval::io::rows_from_outputs(&out);
    let report = scantrack::eval::evaluate(&rows, &truth, cfg.divergence_threshold).map_err(msg)?;
    let est: Vec<[f64; 3]> = out.iter().map(|o| o.position.into()).collect();
    let gt: Vec<[f64; 3]> = truth.samples.iter().map(|s| s.position).collect();
    Ok(json!({
        "scenario": cfg.name,
        "mode": mode.to_string(),
        "truth": gt,
        "estimate": est,
        "omega": out.iter().map(|o| o.omega).collect::<Vec<_>>(),
        "i_ast": out.iter().map(|o| o.i_ast).collect::<Vec<_>>(),
        "i_adt": out.iter().map(|o| o.i_adt).collect::<Vec<_>>(),
        "status": out.iter().map(|o| o.status.to_string()).collect::<Vec<_>>(),
        "report": report,
    })
    .to_string())
}

fn square(v: &[f64]) -> Result<DMatrix<f64>, String> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != v.len() {
        return Err(format!("expected a square matrix in row-major order, got {} values", v.len()));
    }
    Ok(DMatrix::from_row_slice(n, n, v))
}

/// Fused-covariance trace over `samples` evenly spaced weights, plus the
/// optimal weight and fused covariance. Matrices are row-major.
pub fn ici_curve_json(pa: &[f64], pb: &[f64], samples: usize) -> Result<String, String> {
    let (pa, pb) = (square(pa)?, square(pb)?);
    if pa.shape() != pb.shape() {
        return Err("covariances differ in size".into());
    }
    let samples = samples.clamp(2, 10_000);
    let mut omega = Vec::with_capacity(samples);
    let mut trace = Vec::with_capacity(samples);
    for k in 0..samples {
        let w = k as f64 / (samples - 1) as f64;
        omega.push(w);
        trace.push(ici_objective(&pa, &pb, w).map_err(msg)?);
    }
    let n = pa.nrows();
    let zero = nalgebra::DVector::zeros(n);
    let f = ici_fuse_optimal(&zero, &pa, &zero, &pb, DEFAULT_OMEGA_TOL).map_err(msg)?;
    let rows: Vec<Vec<f64>> = (0..n).map(|r| f.p.row(r).iter().copied().collect()).collect();
    Ok(json!({
        "omega": omega,
        "trace": trace,
        "best_omega": f.omega,
        "best_trace": f.p.trace(),
        "fused": rows,
    })
    .to_string())
}

/// Width and height of the demo range image as JSON `[w, h]`.
pub fn range_image_size_json() -> String {
    let c = RangeImageConfig::default();
    json!([c.width, c.height]).to_string()
}

/// RGBA pixels of the combined channel after integrating the first `scans`
/// scans of a bundled scenario. Background pixels are drawn dark blue.
pub fn range_image_rgba_bytes(name: &str, seed: u64, scans: usize) -> Result<Vec<u8>, String> {
    let mut cfg = scenarios::load(name).map_err(msg)?;
    cfg.seed = seed;
    let n = scans.max(1);
    cfg.duration = Some((n as f64 * cfg.sensor.scan_period).min(cfg.duration()));
    let (stream, _) = simulate(&cfg).map_err(msg)?;
    let cloud = PointCloud {
        points: stream.iter().flat_map(|s| s.points.iter().copied()).collect(),
        window: (0, stream.len().saturating_sub(1) as u64),
    };
    let img = render(&cloud, &RangeImageConfig::default()).map_err(msg)?;
    let mut rgba = Vec::with_capacity(img.combined.len() * 4);
    for (i, &c) in img.combined.iter().enumerate() {
        let px = match img.mask[i] {
            PixelClass::Return => {
                let g = (c.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g, 255]
            }
            PixelClass::NoReturnBackground => [10, 20, 60, 255],
            PixelClass::Unscanned => [60, 0, 0, 255],
        };
        rgba.extend_from_slice(&px);
    }
    Ok(rgba)
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    scenario_names_json()
}

#[wasm_bindgen]
pub fn track_scenario(name: &str, mode: &str, seed: u64, noise_sigma: f64) -> Result<String, JsValue> {
    track_scenario_json(name, mode, seed, noise_sigma).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn ici_curve(pa: &[f64], pb: &[f64], samples: usize) -> Result<String, JsValue> {
    ici_curve_json(pa, pb, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn range_image_size() -> String {
    range_image_size_json()
}

#[wasm_bindgen]
pub fn range_image_rgba(name: &str, seed: u64, scans: usize) -> Result<Vec<u8>, JsValue> {
    range_image_rgba_bytes(name, seed, scans).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_a_bundled_scenario() {
        let v: serde_json::Value = serde_json::from_str(&track_scenario_json("hover", "adaptive-dual", 1, 0.01).unwrap()).unwrap();
        assert_eq!(v["estimate"].as_array().unwrap().len(), 300);
        assert!(v["report"]["completed"].as_bool().unwrap());
        assert!(track_scenario_json("hover", "sideways", 1, 0.01).is_err());
        assert!(track_scenario_json("nowhere", "adaptive-dual", 1, 0.01).is_err());
    }

    #[test]
    fn ici_curve_minimum_matches_samples() {
        let v: serde_json::Value =
            serde_json::from_str(&ici_curve_json(&[1.0, 0.2, 0.2, 2.0], &[3.0, -0.4, -0.4, 0.5], 101).unwrap()).unwrap();
        let trace: Vec<f64> = v["trace"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let best = v["best_trace"].as_f64().unwrap();
        assert_eq!(trace.len(), 101);
        assert!(trace.iter().all(|t| best <= t + 1e-9));
        assert!(ici_curve_json(&[1.0, 2.0, 3.0], &[1.0], 10).is_err());
    }

    #[test]
    fn range_image_has_expected_size() {
        let px = range_image_rgba_bytes("hover", 1, 5).unwrap();
        let size: Vec<usize> = serde_json::from_str(&range_image_size_json()).unwrap();
        assert_eq!(px.len(), size[0] * size[1] * 4);
        assert!(px.chunks(4).any(|p| p[0] > 0 && p[0] == p[1]));
    }
}
