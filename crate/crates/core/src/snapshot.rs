//! Snapshot measurement: rectify a photo of a planar panel from its four
//! corner clicks, calibrate the pixel-to-centimetre ratio and measure crack
//! polylines.
//!
//! All measurement math works on coordinates; the raster helpers at the end
//! only produce the rectified picture for display. Pixel centres sit on
//! integer coordinates.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{fabs, floor, hypot};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SnapshotError {
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("point maps to infinity")]
    Horizon,
    #[error("invalid input: {0}")]
    Validation(&'static str),
}

pub type Point = [f64; 2];

/// Corner clicks in image pixels, ordered top-left, top-right, bottom-right,
/// bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad(pub [Point; 4]);

impl Quad {
    /// No three corners are collinear: every corner triangle has an area of
    /// at least `1e-6` times the bounding-box area.
    pub fn check(&self) -> Result<(), SnapshotError> {
        let p = &self.0;
        if p.iter().any(|q| !q[0].is_finite() || !q[1].is_finite()) {
            return Err(SnapshotError::Validation("non-finite corner"));
        }
        let (mut lo, mut hi) = (p[0], p[0]);
        for q in p {
            lo = [lo[0].min(q[0]), lo[1].min(q[1])];
            hi = [hi[0].max(q[0]), hi[1].max(q[1])];
        }
        let bbox = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        if !(bbox > 0.0) {
            return Err(SnapshotError::Degenerate("corners have no extent"));
        }
        for skip in 0..4 {
            let t: Vec<&Point> = p
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, q)| q)
                .collect();
            if triangle_area(t[0], t[1], t[2]) < 1e-6 * bbox {
                return Err(SnapshotError::Degenerate("three corners are collinear"));
            }
        }
        Ok(())
    }
}

fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * fabs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelDims {
    pub width_cm: f64,
    pub height_cm: f64,
}

impl PanelDims {
    pub fn check(&self) -> Result<(), SnapshotError> {
        if self.width_cm > 0.0 && self.height_cm > 0.0 && self.width_cm.is_finite() && self.height_cm.is_finite() {
            Ok(())
        } else {
            Err(SnapshotError::Validation("panel dimensions must be positive"))
        }
    }
}

/// Projective map with `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Homography(pub [[f64; 3]; 3]);

impl Homography {
    pub const IDENTITY: Homography = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Scales the matrix so that `h33 = 1`.
    pub fn normalized(m: [[f64; 3]; 3]) -> Result<Homography, SnapshotError> {
        let n = m.iter().flatten().map(|v| v * v).sum::<f64>();
        let h33 = m[2][2];
        if !(n > 0.0) || fabs(h33) < 1e-12 * libm::sqrt(n) {
            return Err(SnapshotError::Degenerate("cannot normalise h33"));
        }
        let mut out = m;
        for row in &mut out {
            for v in row {
                *v /= h33;
            }
        }
        let h = Homography(out);
        if fabs(h.det()) < 1e-15 {
            return Err(SnapshotError::Degenerate("singular homography"));
        }
        Ok(h)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Homography, SnapshotError> {
        let m = &self.0;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        // adj is the inverse up to the factor 1/det, which normalisation removes
        Homography::normalized(adj)
    }

    pub fn compose(&self, other: &Homography) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        out
    }

    /// Maps an image point; fails when it lies on the vanishing line.
    pub fn apply(&self, p: Point) -> Result<Point, SnapshotError> {
        let m = &self.0;
        let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
        if fabs(w) < 1e-12 {
            return Err(SnapshotError::Horizon);
        }
        Ok([
            (m[0][0] * p[0] + m[0][1] * p[1] + m[0][2]) / w,
            (m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]) / w,
        ])
    }
}

/// Rectified corner targets: the axis-aligned rectangle
/// `(0,0)..(w*s, h*s)` in TL, TR, BR, BL order.
pub fn target_corners(dims: PanelDims, px_per_cm: f64) -> [Point; 4] {
    let (w, h) = (dims.width_cm * px_per_cm, dims.height_cm * px_per_cm);
    [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]
}

/// Exact four-point homography from `src` to `dst` (h33 = 1), solved as an
/// 8x8 linear system on Hartley-normalised coordinates.
pub fn homography_from_points(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography, SnapshotError> {
    let (ts, ns) = normalizer(src);
    let (td, nd) = normalizer(dst);
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = (ns[i][0], ns[i][1]);
        let (u, v) = (nd[i][0], nd[i][1]);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    let h = solve8(a)?;
    let hn = Homography([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]);
    // H = Td^-1 * Hn * Ts
    let td_inv = Homography([[1.0 / td[0], 0.0, -td[1]], [0.0, 1.0 / td[0], -td[2]], [0.0, 0.0, 1.0]]);
    let ts_m = Homography([
        [ts[0], 0.0, ts[0] * ts[1]],
        [0.0, ts[0], ts[0] * ts[2]],
        [0.0, 0.0, 1.0],
    ]);
    let tmp = Homography(td_inv.compose(&hn));
    Homography::normalized(tmp.compose(&ts_m))
}

/// `(scale, -cx, -cy)` moving the centroid to the origin with mean distance
/// sqrt(2), plus the transformed points.
fn normalizer(p: &[Point; 4]) -> ([f64; 3], [Point; 4]) {
    let cx = p.iter().map(|q| q[0]).sum::<f64>() / 4.0;
    let cy = p.iter().map(|q| q[1]).sum::<f64>() / 4.0;
    let mean = p.iter().map(|q| hypot(q[0] - cx, q[1] - cy)).sum::<f64>() / 4.0;
    let s = if mean > 0.0 {
        core::f64::consts::SQRT_2 / mean
    } else {
        1.0
    };
    let mut out = [[0.0; 2]; 4];
    for (o, q) in out.iter_mut().zip(p) {
        *o = [s * (q[0] - cx), s * (q[1] - cy)];
    }
    ([s, -cx, -cy], out)
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8(mut a: [[f64; 9]; 8]) -> Result<[f64; 8], SnapshotError> {
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| fabs(a[i][col]).total_cmp(&fabs(a[j][col])))
            .unwrap_or(col);
        if fabs(a[pivot][col]) < 1e-12 {
            return Err(SnapshotError::Degenerate("singular system"));
        }
        a.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let s: f64 = (row + 1..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][8] - s) / a[row][row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SnapshotError::Degenerate("singular system"));
    }
    Ok(x)
}

/// Homography taking the clicked quad onto the rectangle of the panel at
/// `target_px_per_cm`.
pub fn estimate_homography(quad: &Quad, dims: PanelDims, target_px_per_cm: f64) -> Result<Homography, SnapshotError> {
    quad.check()?;
    dims.check()?;
    if !(target_px_per_cm > 0.0) || !target_px_per_cm.is_finite() {
        return Err(SnapshotError::Validation("target scale must be positive"));
    }
    homography_from_points(&quad.0, &target_corners(dims, target_px_per_cm))
}

pub fn rectify_point(h: &Homography, p: Point) -> Result<Point, SnapshotError> {
    h.apply(p)
}

/// Pixels per centimetre from a mark of known length in the rectified image.
pub fn calibrate_scale(p1: Point, p2: Point, known_length_cm: f64) -> Result<f64, SnapshotError> {
    if !(known_length_cm > 0.0) {
        return Err(SnapshotError::Validation("known length must be positive"));
    }
    let d = hypot(p2[0] - p1[0], p2[1] - p1[1]);
    if !(d > 0.0) {
        return Err(SnapshotError::Validation("zero-length scale mark"));
    }
    Ok(d / known_length_cm)
}

pub fn polyline_px(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| hypot(w[1][0] - w[0][0], w[1][1] - w[0][1]))
        .sum()
}

/// Length of a rectified polyline in centimetres.
pub fn measure_polyline(points: &[Point], px_per_cm: f64) -> Result<f64, SnapshotError> {
    if points.len() < 2 {
        return Err(SnapshotError::Validation("a polyline needs at least two points"));
    }
    if !(px_per_cm > 0.0) {
        return Err(SnapshotError::Validation("scale must be positive"));
    }
    Ok(polyline_px(points) / px_per_cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub polyline: Vec<Point>,
    pub px_per_cm: f64,
    pub length_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMark {
    pub p1: Point,
    pub p2: Point,
    pub length_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSpace {
    /// Clicks on the rectified picture.
    #[default]
    Rectified,
    /// Clicks on the original photo; mapped through the homography first.
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackClicks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub space: PointSpace,
    pub points: Vec<Point>,
}

/// Headless description of one measurement session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickScript {
    pub corners: [Point; 4],
    pub panel: PanelDims,
    pub target_px_per_cm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_mark: Option<ScaleMark>,
    #[serde(default)]
    pub cracks: Vec<CrackClicks>,
}

/// Exported result of a measurement session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSession {
    pub corners: [Point; 4],
    pub panel: PanelDims,
    pub target_px_per_cm: f64,
    pub homography: Homography,
    /// Ratio used for measurements: the calibrated one when a scale mark was
    /// given, otherwise the rectification target.
    pub px_per_cm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_px_per_cm: Option<f64>,
    /// Relative difference between calibrated and target ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_disagreement: Option<f64>,
    pub measurements: Vec<Measurement>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Calibrated and panel-derived scale disagreeing by more than this raises
/// a warning.
pub const SCALE_WARN_FRACTION: f64 = 0.01;

pub fn run_session(script: &ClickScript) -> Result<MeasurementSession, SnapshotError> {
    let quad = Quad(script.corners);
    let h = estimate_homography(&quad, script.panel, script.target_px_per_cm)?;
    let mut warnings = Vec::new();
    let (px_per_cm, calibrated, disagreement) = match &script.scale_mark {
        Some(mark) => {
            let c = calibrate_scale(mark.p1, mark.p2, mark.length_cm)?;
            let d = fabs(c - script.target_px_per_cm) / script.target_px_per_cm;
            if d > SCALE_WARN_FRACTION {
                warnings.push(alloc::format!(
                    "scale mark gives {c:.4} px/cm but the panel dimensions give {:.4} px/cm ({:.1}% apart)",
                    script.target_px_per_cm,
                    d * 100.0
                ));
            }
            (c, Some(c), Some(d))
        }
        None => (script.target_px_per_cm, None, None),
    };
    let mut measurements = Vec::new();
    for crack in &script.cracks {
        let polyline: Vec<Point> = match crack.space {
            PointSpace::Rectified => crack.points.clone(),
            PointSpace::Image => crack.points.iter().map(|p| h.apply(*p)).collect::<Result<_, _>>()?,
        };
        let length_cm = measure_polyline(&polyline, px_per_cm)?;
        measurements.push(Measurement {
            label: crack.label.clone(),
            polyline,
            px_per_cm,
            length_cm,
        });
    }
    Ok(MeasurementSession {
        corners: script.corners,
        panel: script.panel,
        target_px_per_cm: script.target_px_per_cm,
        homography: h,
        px_per_cm,
        calibrated_px_per_cm: calibrated,
        scale_disagreement: disagreement,
        measurements,
        warnings,
    })
}

/// 8-bit RGBA raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![0; width as usize * height as usize * 4],
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3]]
    }

    pub fn put(&mut self, x: u32, y: u32, px: [u8; 4]) {
        if x < self.width && y < self.height {
            let i = (y as usize * self.width as usize + x as usize) * 4;
            self.data[i..i + 4].copy_from_slice(&px);
        }
    }

    /// Bilinear sample at a sub-pixel position; transparent outside.
    pub fn sample(&self, x: f64, y: f64) -> [u8; 4] {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return [0, 0, 0, 0];
        }
        let (x0, y0) = (floor(x) as u32, floor(y) as u32);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let (a, b, c, d) = (
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
        );
        let mut out = [0u8; 4];
        for k in 0..4 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = libm::round(top * (1.0 - fy) + bottom * fy) as u8;
        }
        out
    }
}

/// Rectified picture of the panel by inverse mapping with bilinear
/// interpolation. `h` maps image to rectified coordinates.
pub fn rectify_raster(src: &Raster, h: &Homography, width: u32, height: u32) -> Result<Raster, SnapshotError> {
    if src.width == 0 || src.height == 0 {
        return Err(SnapshotError::Validation("empty source image"));
    }
    let inv = h.inverse()?;
    let mut out = Raster::new(width, height);
    for y in 0..height {
        for x in 0..width {
            if let Ok(p) = inv.apply([x as f64, y as f64]) {
                out.put(x, y, src.sample(p[0], p[1]));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn near(a: Point, b: Point, tol: f64) -> bool {
        hypot(a[0] - b[0], a[1] - b[1]) <= tol
    }

    const DIMS: PanelDims = PanelDims {
        width_cm: 60.0,
        height_cm: 40.0,
    };

    #[test]
    fn target_rectangle_gives_identity() {
        let quad = Quad(target_corners(DIMS, 5.0));
        let h = estimate_homography(&quad, DIMS, 5.0).unwrap();
        for (r, e) in h.0.iter().flatten().zip(Homography::IDENTITY.0.iter().flatten()) {
            assert!((r - e).abs() < 1e-12, "{:?}", h);
        }
    }

    #[test]
    fn rotated_rectangle_gives_inverse_rotation() {
        // A square panel seen rotated by +90 degrees about its centre.
        let dims = PanelDims {
            width_cm: 10.0,
            height_cm: 10.0,
        };
        let t = target_corners(dims, 10.0);
        let c = [50.0, 50.0];
        let rot = |p: Point| [c[0] - (p[1] - c[1]), c[1] + (p[0] - c[0])];
        let quad = Quad([rot(t[0]), rot(t[1]), rot(t[2]), rot(t[3])]);
        let h = estimate_homography(&quad, dims, 10.0).unwrap();
        // inverse rotation: (x, y) -> (c.x + (y - c.y), c.y - (x - c.x))
        let expected = [[0.0, 1.0, 0.0], [-1.0, 0.0, 100.0], [0.0, 0.0, 1.0]];
        for (r, e) in h.0.iter().flatten().zip(expected.iter().flatten()) {
            assert!((r - e).abs() < 1e-9, "{:?}", h);
        }
    }

    #[test]
    fn collinear_corners_rejected() {
        let quad = Quad([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [0.0, 10.0]]);
        assert!(matches!(
            estimate_homography(&quad, DIMS, 1.0),
            Err(SnapshotError::Degenerate(_))
        ));
        let quad = Quad([[5.0, 5.0]; 4]);
        assert!(matches!(
            estimate_homography(&quad, DIMS, 1.0),
            Err(SnapshotError::Degenerate(_))
        ));
    }

    #[test]
    fn identity_and_corners() {
        assert_eq!(rectify_point(&Homography::IDENTITY, [3.0, 4.0]).unwrap(), [3.0, 4.0]);
        let quad = Quad([[102.0, 87.0], [611.0, 120.0], [580.0, 433.0], [95.0, 399.0]]);
        let h = estimate_homography(&quad, DIMS, 4.0).unwrap();
        for (c, t) in quad.0.iter().zip(target_corners(DIMS, 4.0)) {
            assert!(near(h.apply(*c).unwrap(), t, 1e-9));
        }
    }

    #[test]
    fn affine_map_preserves_edge_midpoints() {
        // parallelogram: image of the rectangle under an affine map
        let quad = Quad([[10.0, 20.0], [310.0, 60.0], [350.0, 260.0], [50.0, 220.0]]);
        let h = estimate_homography(&quad, DIMS, 5.0).unwrap();
        assert!(h.0[2][0].abs() < 1e-12 && h.0[2][1].abs() < 1e-12);
        let t = target_corners(DIMS, 5.0);
        for i in 0..4 {
            let j = (i + 1) % 4;
            let mid = [(quad.0[i][0] + quad.0[j][0]) / 2.0, (quad.0[i][1] + quad.0[j][1]) / 2.0];
            let tmid = [(t[i][0] + t[j][0]) / 2.0, (t[i][1] + t[j][1]) / 2.0];
            assert!(near(h.apply(mid).unwrap(), tmid, 1e-9));
        }
    }

    #[test]
    fn horizon_point() {
        let h = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]);
        assert_eq!(h.apply([-1.0, 5.0]), Err(SnapshotError::Horizon));
    }

    #[test]
    fn scale_calibration() {
        assert_eq!(calibrate_scale([0.0, 0.0], [200.0, 0.0], 100.0).unwrap(), 2.0);
        assert!(calibrate_scale([1.0, 1.0], [1.0, 1.0], 10.0).is_err());
        assert!(calibrate_scale([0.0, 0.0], [1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn polyline_lengths() {
        assert_eq!(measure_polyline(&[[0.0, 0.0], [40.0, 0.0]], 2.0).unwrap(), 20.0);
        let square = [[0.0, 0.0], [100.0, 0.0], [100.0, 100.0], [0.0, 100.0], [0.0, 0.0]];
        assert_eq!(measure_polyline(&square, 1.0).unwrap(), 400.0);
        assert!(measure_polyline(&[[0.0, 0.0]], 1.0).is_err());
    }

    #[test]
    fn polyline_is_additive() {
        let a = [[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]];
        let b = [[6.0, 8.0], [6.0, 20.0]];
        let joined = [a[0], a[1], a[2], b[1]];
        let sum = measure_polyline(&a, 2.0).unwrap() + measure_polyline(&b, 2.0).unwrap();
        assert!((measure_polyline(&joined, 2.0).unwrap() - sum).abs() < 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let quad = Quad([[102.0, 87.0], [611.0, 120.0], [580.0, 433.0], [95.0, 399.0]]);
        let h = estimate_homography(&quad, DIMS, 4.0).unwrap();
        let inv = h.inverse().unwrap();
        let p = [300.0, 250.0];
        assert!(near(inv.apply(h.apply(p).unwrap()).unwrap(), p, 1e-9));
    }

    #[test]
    fn session_warns_on_scale_disagreement() {
        let script = ClickScript {
            corners: target_corners(DIMS, 5.0),
            panel: DIMS,
            target_px_per_cm: 5.0,
            scale_mark: Some(ScaleMark {
                p1: [0.0, 0.0],
                p2: [104.0, 0.0],
                length_cm: 20.0,
            }),
            cracks: vec![CrackClicks {
                label: Some("c1".into()),
                space: PointSpace::Rectified,
                points: vec![[0.0, 0.0], [52.0, 0.0]],
            }],
        };
        let s = run_session(&script).unwrap();
        assert_eq!(s.px_per_cm, 5.2);
        assert_eq!(s.warnings.len(), 1);
        assert!((s.measurements[0].length_cm - 10.0).abs() < 1e-12);

        let mut ok = script.clone();
        ok.scale_mark = Some(ScaleMark {
            p1: [0.0, 0.0],
            p2: [100.0, 0.0],
            length_cm: 20.0,
        });
        assert!(run_session(&ok).unwrap().warnings.is_empty());
    }

    #[test]
    fn raster_rectification_of_identity() {
        let mut src = Raster::new(4, 3);
        for y in 0..3 {
            for x in 0..4 {
                src.put(x, y, [(x * 60) as u8, (y * 100) as u8, 7, 255]);
            }
        }
        let out = rectify_raster(&src, &Homography::IDENTITY, 4, 3).unwrap();
        assert_eq!(out, src);
        assert_eq!(src.sample(0.5, 0.0), [30, 0, 7, 255]);
        assert_eq!(src.sample(-1.0, 0.0), [0, 0, 0, 0]);
    }
}
