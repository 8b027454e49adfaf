//! Conversions between core rasters and image files, frame rendering and
//! the offline snapshot measurement tool.

use std::io::Cursor;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use gcs_core::sim::synthetic_frame;
use gcs_core::snapshot::{rectify_raster, run_session, ClickScript, MeasurementSession, Raster};
use image::{ImageFormat, RgbaImage};
use serde_json::Value;

pub fn raster_from_image(img: &image::DynamicImage) -> Raster {
    let rgba = img.to_rgba8();
    Raster {
        width: rgba.width(),
        height: rgba.height(),
        data: rgba.into_raw(),
    }
}

pub fn raster_to_image(r: &Raster) -> RgbaImage {
    RgbaImage::from_raw(r.width, r.height, r.data.clone()).expect("raster size matches its data")
}

pub fn png_bytes(r: &Raster) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    raster_to_image(r).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Renders the PNG of a synthetic camera frame payload.
pub fn frame_png(payload: &Value) -> Result<Vec<u8>> {
    let index = payload
        .get("index")
        .and_then(Value::as_u64)
        .ok_or_else(|| anyhow!("frame without index"))?;
    let stamp = payload.get("stamp").and_then(Value::as_f64).unwrap_or(0.0);
    let width = payload.get("width").and_then(Value::as_u64).unwrap_or(160) as u32;
    let height = payload.get("height").and_then(Value::as_u64).unwrap_or(120) as u32;
    png_bytes(&synthetic_frame(index, stamp, width, height))
}

/// Runs a click script against an image file; optionally writes the
/// rectified image.
pub fn measure_file(image: &Path, clicks: &ClickScript, rectified: Option<&Path>) -> Result<MeasurementSession> {
    let img = image::open(image).with_context(|| format!("reading {}", image.display()))?;
    let src = raster_from_image(&img);
    let session = run_session(clicks).map_err(|e| anyhow!("{e}"))?;
    if let Some(out) = rectified {
        let w = (clicks.panel.width_cm * clicks.target_px_per_cm).round().max(1.0) as u32;
        let h = (clicks.panel.height_cm * clicks.target_px_per_cm).round().max(1.0) as u32;
        let r = rectify_raster(&src, &session.homography, w, h).map_err(|e| anyhow!("{e}"))?;
        raster_to_image(&r)
            .save(out)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(session)
}
