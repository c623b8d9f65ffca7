//! Depth rasters, camera geometry and 8-bit height maps.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Camera-to-ground distance of the acquisition chute, in millimeters.
pub const DEFAULT_GROUND_DISTANCE_MM: f64 = 2515.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DepthError {
    #[error("depth raster is empty")]
    Empty,
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("cell (row {row}, column {col}) is not numeric")]
    Parse { row: usize, col: usize },
    #[error("grid length {len} does not match {width}x{height}")]
    Shape { width: usize, height: usize, len: usize },
    #[error("invalid camera configuration: {0}")]
    Camera(&'static str),
    #[error("target {target_w}x{target_h} is smaller than source {width}x{height}")]
    PadTooSmall { width: usize, height: usize, target_w: usize, target_h: usize },
}

/// Row-major grid of camera-to-surface distances in millimeters.
///
/// Cells that are missing, non-finite, zero or negative are kept in the grid
/// but flagged invalid; only structural faults are errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    width: usize,
    height: usize,
    depth_mm: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthRaster {
    /// Builds a raster from raw samples, deriving the validity mask.
    pub fn new(width: usize, height: usize, depth_mm: Vec<f64>) -> Result<Self, DepthError> {
        if width == 0 || height == 0 {
            return Err(DepthError::Empty);
        }
        if depth_mm.len() != width * height {
            return Err(DepthError::Shape { width, height, len: depth_mm.len() });
        }
        let valid = depth_mm.iter().map(|&d| is_valid_depth(d)).collect();
        Ok(Self { width, height, depth_mm, valid })
    }

    /// Builds a raster with an explicit mask. Cells that fail the depth rules
    /// are invalid regardless of `valid`.
    pub fn with_mask(
        width: usize,
        height: usize,
        depth_mm: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, DepthError> {
        let mut r = Self::new(width, height, depth_mm)?;
        if valid.len() != r.valid.len() {
            return Err(DepthError::Shape { width, height, len: valid.len() });
        }
        for (v, m) in r.valid.iter_mut().zip(valid) {
            *v &= m;
        }
        Ok(r)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth_mm
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Depth at column `u`, row `v`, or `None` for invalid / out-of-range cells.
    #[inline]
    pub fn depth(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = self.index(u, v);
        self.valid[i].then(|| self.depth_mm[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Valid-neighbor bilinear depth at a fractional pixel location.
    ///
    /// Weights of invalid neighbors are dropped and the rest renormalized;
    /// neighbors with zero weight are ignored. Returns `None` when no
    /// contributing neighbor is valid or the location is outside the grid.
    pub fn bilinear_depth(&self, u: f64, v: f64) -> Option<f64> {
        bilinear(self.width, self.height, u, v, |x, y| self.depth(x, y))
    }
}

#[inline]
fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Renormalized bilinear interpolation over the valid cells of a grid.
pub(crate) fn bilinear(
    width: usize,
    height: usize,
    u: f64,
    v: f64,
    sample: impl Fn(usize, usize) -> Option<f64>,
) -> Option<f64> {
    if !(u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64) {
        return None;
    }
    let u0 = math::floor(u);
    let v0 = math::floor(v);
    let fu = u - u0;
    let fv = v - v0;
    let (u0, v0) = (u0 as usize, v0 as usize);
    let taps = [
        (u0, v0, (1.0 - fu) * (1.0 - fv)),
        (u0 + 1, v0, fu * (1.0 - fv)),
        (u0, v0 + 1, (1.0 - fu) * fv),
        (u0 + 1, v0 + 1, fu * fv),
    ];
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (x, y, w) in taps {
        if w == 0.0 {
            continue;
        }
        if let Some(z) = sample(x, y) {
            acc += w * z;
            wsum += w;
        }
    }
    (wsum > 0.0).then(|| acc / wsum)
}

/// Parses a comma-separated depth raster (one image row per line).
///
/// Empty, non-finite, zero and negative cells become invalid samples. A
/// trailing newline is optional; `\r\n` line endings are accepted.
pub fn parse_depth_raster(text: &str) -> Result<DepthRaster, DepthError> {
    if text.trim().is_empty() {
        return Err(DepthError::Empty);
    }
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    // A final newline terminates the last row. In a single-column file an
    // empty line is a masked cell, so further blank lines are only dropped
    // when rows have several columns.
    if lines.len() > 1 && lines.last() == Some(&"") {
        lines.pop();
    }
    if lines[0].contains(',') {
        while lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
    }
    let width = lines[0].split(',').count();
    let mut depth = Vec::with_capacity(width * lines.len());
    for (row, line) in lines.iter().enumerate() {
        let start = depth.len();
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let d = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| DepthError::Parse { row, col })?
            };
            depth.push(d);
        }
        let found = depth.len() - start;
        if found != width {
            return Err(DepthError::Ragged { row, expected: width, found });
        }
    }
    DepthRaster::new(width, lines.len(), depth)
}

/// Pinhole intrinsics plus the camera-to-ground reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    #[serde(default = "default_ground")]
    pub ground_distance_mm: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Height mapped to gray level 255; defaults to the ground distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_max_mm: Option<f64>,
}

fn default_ground() -> f64 {
    DEFAULT_GROUND_DISTANCE_MM
}

impl CameraConfig {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            ground_distance_mm: DEFAULT_GROUND_DISTANCE_MM,
            fx,
            fy,
            cx,
            cy,
            height_max_mm: None,
        }
    }

    pub fn height_max(&self) -> f64 {
        self.height_max_mm.unwrap_or(self.ground_distance_mm)
    }

    pub fn validate(&self) -> Result<(), DepthError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.fx) || !pos(self.fy) {
            return Err(DepthError::Camera("focal lengths must be positive"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(DepthError::Camera("principal point must be finite"));
        }
        if !pos(self.ground_distance_mm) {
            return Err(DepthError::Camera("ground distance must be positive"));
        }
        if !pos(self.height_max()) {
            return Err(DepthError::Camera("height_max_mm must be positive"));
        }
        Ok(())
    }

    /// Height above ground for a camera depth; may be negative below ground.
    #[inline]
    pub fn height_of(&self, depth_mm: f64) -> f64 {
        self.ground_distance_mm - depth_mm
    }

    /// Back-projects pixel `(u, v)` at depth `d` into the camera frame.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        [(u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d]
    }

    /// Projects a camera-frame point to `(u, v, depth)`.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> (f64, f64, f64) {
        (p[0] * self.fx / p[2] + self.cx, p[1] * self.fy / p[2] + self.cy, p[2])
    }
}

/// 8-bit height-above-ground image.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<u8>,
    pub scale_mm_per_level: f64,
}

impl HeightMap {
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.gray[v * self.width + u]
    }

    /// Height in millimeters represented by a gray level.
    pub fn level_to_mm(&self, level: u8) -> f64 {
        level as f64 * self.scale_mm_per_level
    }
}

/// Converts depth to height above ground and quantizes linearly over
/// `[0, height_max]` with round-half-up. Sub-ground readings clamp to 0 and
/// invalid cells map to 0.
pub fn raster_to_heightmap(r: &DepthRaster, cam: &CameraConfig) -> Result<HeightMap, DepthError> {
    cam.validate()?;
    let hmax = cam.height_max();
    let gray = r
        .depth_mm
        .iter()
        .zip(&r.valid)
        .map(|(&d, &ok)| {
            if !ok {
                return 0;
            }
            let h = cam.height_of(d).max(0.0).min(hmax);
            math::round_half_up(255.0 * h / hmax) as u8
        })
        .collect();
    Ok(HeightMap { width: r.width, height: r.height, gray, scale_mm_per_level: hmax / 255.0 })
}

/// Places `h` in the center of a `target_w` x `target_h` canvas filled with
/// `fill`. Returns the padded image and the `(du, dv)` offset of the source.
pub fn pad_center(
    h: &HeightMap,
    target_w: usize,
    target_h: usize,
    fill: u8,
) -> Result<(HeightMap, (usize, usize)), DepthError> {
    if target_w < h.width || target_h < h.height {
        return Err(DepthError::PadTooSmall {
            width: h.width,
            height: h.height,
            target_w,
            target_h,
        });
    }
    let du = (target_w - h.width) / 2;
    let dv = (target_h - h.height) / 2;
    let mut gray = alloc::vec![fill; target_w * target_h];
    for v in 0..h.height {
        let src = &h.gray[v * h.width..(v + 1) * h.width];
        let start = (v + dv) * target_w + du;
        gray[start..start + h.width].copy_from_slice(src);
    }
    Ok((
        HeightMap { width: target_w, height: target_h, gray, scale_mm_per_level: h.scale_mm_per_level },
        (du, dv),
    ))
}
