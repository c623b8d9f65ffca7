//! The 24 handcrafted geometric features: maximum distance and area along ten
//! landmark lines, and four triangular-plane volumes.
//!
//! Two surface representations share the same feature code:
//!
//! - [`HeightGrid`]: height above ground in millimeters on the pixel grid
//!   (depth-image variant). Lengths are in pixels, so areas are px·mm and
//!   volumes px²·mm.
//! - [`CloudSurface`]: the back-projected point cloud in camera-frame
//!   millimeters (point-cloud variant). Lengths are measured in the `xy`
//!   plane, so areas are mm² and volumes mm³.
//!
//! Deviations are `surface - chord` for lines and `plane - surface` for
//! volumes, both signed unless [`FeatureParams::clamp_positive`] is set.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{bilinear, CameraConfig, DepthRaster};
use crate::landmarks::{
    derive_spikes, landmarks_to_3d, refine_keypoints, LandmarkError, LandmarkName, LandmarkSet,
    RefinementConfig,
};
use crate::math;
use crate::pointcloud::{backproject, CloudError, PointCloud};

use LandmarkName::*;

pub const N_FEATURES: usize = 24;

/// A feature line between two landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineSpec {
    pub id: &'static str,
    pub endpoints: (LandmarkName, LandmarkName),
}

/// A triangular anatomical plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriangleSpec {
    pub id: &'static str,
    pub vertices: [LandmarkName; 3],
}

pub const LINES: [LineSpec; 10] = [
    LineSpec { id: "L1", endpoints: (SpikeA, RightHook) },
    LineSpec { id: "L2", endpoints: (SpikeB, RightHook) },
    LineSpec { id: "L3", endpoints: (SpikeC, RightHook) },
    LineSpec { id: "L4", endpoints: (RightPin, RightHook) },
    LineSpec { id: "L5", endpoints: (SpikeB, RightPin) },
    LineSpec { id: "L6", endpoints: (SpikeB, LeftPin) },
    LineSpec { id: "L7", endpoints: (LeftHook, LeftPin) },
    LineSpec { id: "L8", endpoints: (LeftHook, SpikeC) },
    LineSpec { id: "L9", endpoints: (LeftHook, SpikeB) },
    LineSpec { id: "L10", endpoints: (LeftHook, SpikeA) },
];

pub const TRIANGLES: [TriangleSpec; 4] = [
    TriangleSpec { id: "V1", vertices: [SpikeA, SpikeB, RightHook] },
    TriangleSpec { id: "V2", vertices: [SpikeA, SpikeB, LeftHook] },
    TriangleSpec { id: "V3", vertices: [SpikeB, SpikeC, RightHook] },
    TriangleSpec { id: "V4", vertices: [SpikeB, SpikeC, LeftHook] },
];

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "maxdist_l1", "maxdist_l2", "maxdist_l3", "maxdist_l4", "maxdist_l5",
    "maxdist_l6", "maxdist_l7", "maxdist_l8", "maxdist_l9", "maxdist_l10",
    "area_l1", "area_l2", "area_l3", "area_l4", "area_l5",
    "area_l6", "area_l7", "area_l8", "area_l9", "area_l10",
    "volume_v1", "volume_v2", "volume_v3", "volume_v4",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    DepthImage,
    PointCloud,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::DepthImage => "depth_image",
            Variant::PointCloud => "point_cloud",
        }
    }

    /// Accepts the long names and the CLI short forms `depth` / `cloud`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "depth_image" | "depth" => Some(Variant::DepthImage),
            "point_cloud" | "cloud" => Some(Variant::PointCloud),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub variant: Variant,
    pub values: [f64; N_FEATURES],
}

impl FeatureVector {
    pub fn maxdist(&self, line: usize) -> f64 {
        self.values[line]
    }

    pub fn area(&self, line: usize) -> f64 {
        self.values[10 + line]
    }

    pub fn volume(&self, tri: usize) -> f64 {
        self.values[20 + tri]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("{feature}: profile needs at least 2 samples")]
    TooFewSamples { feature: &'static str },
    #[error("{feature}: line endpoints coincide")]
    CoincidentEndpoints { feature: &'static str },
    #[error("{feature}: no surface data at samples {gaps:?}")]
    ProfileGaps { feature: &'static str, gaps: Vec<usize> },
    #[error("{feature}: degenerate plane (collinear or duplicated xy)")]
    DegeneratePlane { feature: &'static str },
    #[error("{feature}: {missing} interior cells without surface data")]
    VolumeGaps { feature: &'static str, missing: usize },
    #[error("{feature}: no surface data at vertex {vertex}")]
    VertexGap { feature: &'static str, vertex: LandmarkName },
    #[error("{0}: landmark has no 3D position")]
    Missing3d(LandmarkName),
    #[error("{feature}: non-finite value")]
    NonFinite { feature: String },
    #[error("point cloud has no points above ground")]
    EmptySurface,
}

/// How the point-cloud surface is read at a query location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceQuery {
    /// Least-squares plane through the points within the query radius,
    /// evaluated at the query location (mean height when fewer than three
    /// non-collinear points are available).
    #[default]
    LocalPlane,
    /// Highest point within the query radius.
    Highest,
}

/// Length used for the area integral of a point-cloud line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChordMetric {
    /// Length of the chord projected onto the `xy` plane.
    #[default]
    Planar,
    /// Full 3D length of the chord between the endpoint surface points.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    /// Samples per line; `None` uses `max(64, ceil(2 * length / pitch))`.
    pub n_samples: Option<usize>,
    /// Clamp every deviation at zero before aggregating.
    pub clamp_positive: bool,
    pub surface_query: SurfaceQuery,
    /// Point-cloud query radius; `None` uses 1.5x the median nearest-neighbor
    /// `xy` spacing.
    pub r_query_mm: Option<f64>,
    /// Point-cloud volume lattice pitch; `None` uses the median
    /// nearest-neighbor `xy` spacing.
    pub grid_pitch_mm: Option<f64>,
    pub chord_metric: ChordMetric,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            n_samples: None,
            clamp_positive: false,
            surface_query: SurfaceQuery::LocalPlane,
            r_query_mm: None,
            grid_pitch_mm: None,
            chord_metric: ChordMetric::Planar,
        }
    }
}

/// A height field that can be sampled at arbitrary planar locations.
pub trait HeightSurface {
    fn height_at(&self, x: f64, y: f64) -> Option<f64>;

    /// Nominal sample spacing, in the surface's planar units.
    fn pitch(&self) -> f64;

    /// Lattice `(origin, pitch)` used to integrate over a triangle whose
    /// first vertex is `anchor`.
    fn lattice(&self, anchor: [f64; 2]) -> ([f64; 2], f64);
}

/// Heights above ground on the pixel grid; `NaN` marks invalid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightGrid {
    width: usize,
    height: usize,
    heights: Vec<f64>,
}

impl HeightGrid {
    pub fn from_raster(r: &DepthRaster, cam: &CameraConfig) -> Self {
        let heights = (0..r.height())
            .flat_map(|v| (0..r.width()).map(move |u| (u, v)))
            .map(|(u, v)| r.depth(u, v).map_or(f64::NAN, |d| cam.height_of(d)))
            .collect();
        Self { width: r.width(), height: r.height(), heights }
    }

    /// Row-major heights, `NaN` for missing cells.
    pub fn from_heights(width: usize, height: usize, heights: Vec<f64>) -> Self {
        assert_eq!(heights.len(), width * height, "grid size mismatch");
        Self { width, height, heights }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn cell(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let h = self.heights[v * self.width + u];
        (!h.is_nan()).then_some(h)
    }
}

impl HeightSurface for HeightGrid {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(self.width, self.height, x, y, |u, v| self.cell(u, v))
    }

    fn pitch(&self) -> f64 {
        1.0
    }

    fn lattice(&self, _anchor: [f64; 2]) -> ([f64; 2], f64) {
        ([0.0, 0.0], 1.0)
    }
}

/// Bucketed `xy` index over a point cloud, with heights above ground.
#[derive(Debug, Clone)]
pub struct CloudSurface {
    xy: Vec<[f64; 2]>,
    h: Vec<f64>,
    index: BucketGrid,
    r_query: f64,
    pitch: f64,
    query: SurfaceQuery,
    ground: f64,
}

#[derive(Debug, Clone)]
struct BucketGrid {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl BucketGrid {
    fn build(xy: &[[f64; 2]], cell: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in xy {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = |k: usize| ((hi[k] - lo[k]) / cell) as usize + 1;
        let (nx, ny) = (span(0), span(1));
        let mut g = Self { origin: lo, cell, nx, ny, start: alloc::vec![0; nx * ny + 1], items: Vec::new() };
        let keys: Vec<usize> = xy.iter().map(|p| g.key(p)).collect();
        for &k in &keys {
            g.start[k + 1] += 1;
        }
        for i in 0..nx * ny {
            g.start[i + 1] += g.start[i];
        }
        let mut fill = g.start.clone();
        g.items = alloc::vec![0; xy.len()];
        for (i, &k) in keys.iter().enumerate() {
            g.items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        g
    }

    #[inline]
    fn coord(&self, x: f64, k: usize, n: usize) -> i64 {
        let c = math::floor((x - self.origin[k]) / self.cell) as i64;
        c.clamp(-1, n as i64)
    }

    #[inline]
    fn key(&self, p: &[f64; 2]) -> usize {
        let ix = self.coord(p[0], 0, self.nx).clamp(0, self.nx as i64 - 1) as usize;
        let iy = self.coord(p[1], 1, self.ny).clamp(0, self.ny as i64 - 1) as usize;
        iy * self.nx + ix
    }

    /// Visits every indexed point in the cells overlapping the square of
    /// half-width `r` around `(x, y)`.
    fn for_each_near(&self, x: f64, y: f64, r: f64, mut f: impl FnMut(usize)) {
        let rng = |c: f64, k: usize, n: usize| {
            let lo = self.coord(c - r, k, n).max(0);
            let hi = self.coord(c + r, k, n).min(n as i64 - 1);
            (lo, hi)
        };
        let (x0, x1) = rng(x, 0, self.nx);
        let (y0, y1) = rng(y, 1, self.ny);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = iy as usize * self.nx + ix as usize;
                for &i in &self.items[self.start[c] as usize..self.start[c + 1] as usize] {
                    f(i as usize);
                }
            }
        }
    }
}

impl CloudSurface {
    /// Builds the surface from the cloud's above-ground points.
    pub fn new(cloud: &PointCloud, cam: &CameraConfig, params: &FeatureParams) -> Result<Self, FeatureError> {
        let mut xy = Vec::with_capacity(cloud.len());
        let mut h = Vec::with_capacity(cloud.len());
        for p in &cloud.points {
            let height = cam.height_of(p[2]);
            if height > 0.0 {
                xy.push([p[0], p[1]]);
                h.push(height);
            }
        }
        if xy.len() < 2 {
            return Err(FeatureError::EmptySurface);
        }
        let spacing = median_nn_spacing(&xy);
        let pitch = params.grid_pitch_mm.unwrap_or(spacing);
        let r_query = params.r_query_mm.unwrap_or(1.5 * spacing);
        let index = BucketGrid::build(&xy, r_query.max(f64::MIN_POSITIVE));
        Ok(Self { xy, h, index, r_query, pitch, query: params.surface_query, ground: cam.ground_distance_mm })
    }

    pub fn r_query(&self) -> f64 {
        self.r_query
    }

    /// Height above ground of a camera-frame point.
    pub fn height_of(&self, p: [f64; 3]) -> f64 {
        self.ground - p[2]
    }

    pub fn len(&self) -> usize {
        self.xy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xy.is_empty()
    }
}

impl HeightSurface for CloudSurface {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let r2 = self.r_query * self.r_query;
        match self.query {
            SurfaceQuery::Highest => {
                let mut best: Option<f64> = None;
                self.index.for_each_near(x, y, self.r_query, |i| {
                    let (dx, dy) = (self.xy[i][0] - x, self.xy[i][1] - y);
                    if dx * dx + dy * dy <= r2 {
                        best = Some(best.map_or(self.h[i], |b: f64| b.max(self.h[i])));
                    }
                });
                best
            }
            SurfaceQuery::LocalPlane => {
                let mut fit = PlaneAccumulator::default();
                self.index.for_each_near(x, y, self.r_query, |i| {
                    let (dx, dy) = (self.xy[i][0] - x, self.xy[i][1] - y);
                    if dx * dx + dy * dy <= r2 {
                        fit.push(dx, dy, self.h[i]);
                    }
                });
                fit.value_at_origin()
            }
        }
    }

    fn pitch(&self) -> f64 {
        self.pitch
    }

    fn lattice(&self, anchor: [f64; 2]) -> ([f64; 2], f64) {
        (anchor, self.pitch)
    }
}

/// Running normal equations for `h = a*dx + b*dy + c`.
#[derive(Default)]
struct PlaneAccumulator {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
    sh: f64,
    sxh: f64,
    syh: f64,
}

impl PlaneAccumulator {
    fn push(&mut self, x: f64, y: f64, h: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.sxy += x * y;
        self.syy += y * y;
        self.sh += h;
        self.sxh += x * h;
        self.syh += y * h;
    }

    fn value_at_origin(&self) -> Option<f64> {
        if self.n == 0.0 {
            return None;
        }
        let mean = self.sh / self.n;
        if self.n < 3.0 {
            return Some(mean);
        }
        // Centered 2x2 system for the slopes, then the intercept at the origin.
        let (mx, my) = (self.sx / self.n, self.sy / self.n);
        let cxx = self.sxx - self.n * mx * mx;
        let cxy = self.sxy - self.n * mx * my;
        let cyy = self.syy - self.n * my * my;
        let cxh = self.sxh - self.n * mx * mean;
        let cyh = self.syh - self.n * my * mean;
        let det = cxx * cyy - cxy * cxy;
        let scale = (cxx + cyy) * (cxx + cyy);
        if !(det > 1e-9 * scale) {
            return Some(mean);
        }
        let a = (cxh * cyy - cyh * cxy) / det;
        let b = (cyh * cxx - cxh * cxy) / det;
        Some(mean - a * mx - b * my)
    }
}

/// Median distance from each point to its nearest `xy` neighbor.
fn median_nn_spacing(xy: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in xy {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(f64::MIN_POSITIVE);
    let cell = math::sqrt(area / xy.len() as f64).max(1e-9);
    let grid = BucketGrid::build(xy, cell);
    let mut d: Vec<f64> = xy
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut ring = 1.0;
            loop {
                let mut best = f64::INFINITY;
                grid.for_each_near(p[0], p[1], ring * cell, |j| {
                    if j != i {
                        let (dx, dy) = (xy[j][0] - p[0], xy[j][1] - p[1]);
                        best = best.min(dx * dx + dy * dy);
                    }
                });
                // Anything outside the searched square is farther than ring*cell.
                if best <= (ring * cell) * (ring * cell) {
                    return math::sqrt(best);
                }
                ring *= 2.0;
            }
        })
        .collect();
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t: f64,
    pub surface: f64,
    pub chord: f64,
}

impl ProfileSample {
    #[inline]
    pub fn deviation(&self) -> f64 {
        self.surface - self.chord
    }
}

/// Samples the surface at `n` evenly spaced points of the segment `p0 -> p1`
/// and the chord joining the endpoint surface heights.
pub fn line_profile<S: HeightSurface + ?Sized>(
    surface: &S,
    p0: [f64; 2],
    p1: [f64; 2],
    n: usize,
) -> Result<Vec<ProfileSample>, FeatureError> {
    line_profile_named(surface, p0, p1, n, None, "line")
}

fn line_profile_named<S: HeightSurface + ?Sized>(
    surface: &S,
    p0: [f64; 2],
    p1: [f64; 2],
    n: usize,
    anchors: Option<[f64; 2]>,
    feature: &'static str,
) -> Result<Vec<ProfileSample>, FeatureError> {
    if n < 2 {
        return Err(FeatureError::TooFewSamples { feature });
    }
    if p0 == p1 {
        return Err(FeatureError::CoincidentEndpoints { feature });
    }
    let last = (n - 1) as f64;
    let mut heights = Vec::with_capacity(n);
    let mut gaps = Vec::new();
    for i in 0..n {
        let t = i as f64 / last;
        let x = p0[0] + t * (p1[0] - p0[0]);
        let y = p0[1] + t * (p1[1] - p0[1]);
        match surface.height_at(x, y) {
            Some(h) => heights.push(h),
            None => {
                gaps.push(i);
                heights.push(f64::NAN);
            }
        }
    }
    if !gaps.is_empty() {
        return Err(FeatureError::ProfileGaps { feature, gaps });
    }
    let [h0, h1] = anchors.unwrap_or([heights[0], heights[n - 1]]);
    Ok(heights
        .into_iter()
        .enumerate()
        .map(|(i, surface)| {
            let t = i as f64 / last;
            ProfileSample { t, surface, chord: h0 + t * (h1 - h0) }
        })
        .collect())
}

#[inline]
fn dev(s: &ProfileSample, clamp: bool) -> f64 {
    let d = s.deviation();
    if clamp { d.max(0.0) } else { d }
}

/// Largest `surface - chord` along the profile (negative for concave
/// profiles unless clamped).
pub fn max_distance(profile: &[ProfileSample], clamp_positive: bool) -> f64 {
    profile.iter().map(|s| dev(s, clamp_positive)).fold(f64::NEG_INFINITY, f64::max)
}

/// Trapezoidal integral of `surface - chord` over `[0, chord_length]`.
pub fn area(profile: &[ProfileSample], chord_length: f64, clamp_positive: bool) -> f64 {
    profile
        .windows(2)
        .map(|w| 0.5 * (dev(&w[0], clamp_positive) + dev(&w[1], clamp_positive)) * (w[1].t - w[0].t))
        .sum::<f64>()
        * chord_length
}

/// Coefficients of `z = a*x + b*y + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PlaneCoeffs {
    #[inline]
    pub fn z(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }
}

/// Exact plane through three points (Cramer's rule on the 3x3 system).
pub fn fit_plane(p1: [f64; 3], p2: [f64; 3], p3: [f64; 3]) -> Result<PlaneCoeffs, FeatureError> {
    fit_plane_named(p1, p2, p3, "plane")
}

fn fit_plane_named(
    p1: [f64; 3],
    p2: [f64; 3],
    p3: [f64; 3],
    feature: &'static str,
) -> Result<PlaneCoeffs, FeatureError> {
    let (ux, uy, uz) = (p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]);
    let (vx, vy, vz) = (p3[0] - p1[0], p3[1] - p1[1], p3[2] - p1[2]);
    let det = ux * vy - vx * uy;
    let scale = (ux.abs() + uy.abs()).max(vx.abs() + vy.abs());
    if !(det.abs() > 1e-12 * scale * scale) {
        return Err(FeatureError::DegeneratePlane { feature });
    }
    let a = (uz * vy - vz * uy) / det;
    let b = (ux * vz - vx * uz) / det;
    let c = p1[2] - a * p1[0] - b * p1[1];
    Ok(PlaneCoeffs { a, b, c })
}

/// Calls `f(x, y, w)` for every lattice point `origin + pitch * (i, j)` in
/// the closed triangle. Interior points get `w = 1`; points exactly on an edge
/// get `w = 1/2`, so triangles sharing an edge count it once in total and a
/// ridge along an edge is not over- or under-counted.
pub fn for_each_lattice_point(
    tri: [[f64; 2]; 3],
    origin: [f64; 2],
    pitch: f64,
    mut f: impl FnMut(f64, f64, f64),
) {
    let [a, mut b, mut c] = tri;
    let edge = |p: [f64; 2], q: [f64; 2], x: f64, y: f64| (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]);
    let area2 = edge(a, b, c[0], c[1]);
    if area2 == 0.0 {
        return;
    }
    if area2 < 0.0 {
        core::mem::swap(&mut b, &mut c);
    }
    let edges = [(a, b), (b, c), (c, a)];
    let lo_x = a[0].min(b[0]).min(c[0]);
    let hi_x = a[0].max(b[0]).max(c[0]);
    let lo_y = a[1].min(b[1]).min(c[1]);
    let hi_y = a[1].max(b[1]).max(c[1]);
    let i0 = math::ceil((lo_x - origin[0]) / pitch) as i64;
    let i1 = math::floor((hi_x - origin[0]) / pitch) as i64;
    let j0 = math::ceil((lo_y - origin[1]) / pitch) as i64;
    let j1 = math::floor((hi_y - origin[1]) / pitch) as i64;
    for j in j0..=j1 {
        let y = origin[1] + j as f64 * pitch;
        for i in i0..=i1 {
            let x = origin[0] + i as f64 * pitch;
            let mut on_edge = false;
            let inside = edges.iter().all(|&(p, q)| {
                let w = edge(p, q, x, y);
                on_edge |= w == 0.0;
                w >= 0.0
            });
            if inside {
                f(x, y, if on_edge { 0.5 } else { 1.0 });
            }
        }
    }
}

/// Signed volume between the plane through the three vertices (at their
/// surface heights) and the surface, summed over the lattice points of the
/// triangle with edge points at half weight.
pub fn triangle_volume<S: HeightSurface + ?Sized>(
    surface: &S,
    tri: [[f64; 2]; 3],
    clamp_positive: bool,
) -> Result<f64, FeatureError> {
    let names = [SpikeA, SpikeB, RightHook];
    triangle_volume_named(surface, tri, names, None, clamp_positive, "triangle")
}

fn triangle_volume_named<S: HeightSurface + ?Sized>(
    surface: &S,
    tri: [[f64; 2]; 3],
    names: [LandmarkName; 3],
    anchors: Option<[f64; 3]>,
    clamp_positive: bool,
    feature: &'static str,
) -> Result<f64, FeatureError> {
    let mut v3 = [[0.0; 3]; 3];
    for k in 0..3 {
        let h = match anchors {
            Some(a) => a[k],
            None => surface
                .height_at(tri[k][0], tri[k][1])
                .ok_or(FeatureError::VertexGap { feature, vertex: names[k] })?,
        };
        v3[k] = [tri[k][0], tri[k][1], h];
    }
    let plane = fit_plane_named(v3[0], v3[1], v3[2], feature)?;
    let (origin, pitch) = surface.lattice(tri[0]);
    let mut sum = 0.0;
    let mut missing = 0usize;
    for_each_lattice_point(tri, origin, pitch, |x, y, w| match surface.height_at(x, y) {
        Some(h) => {
            let d = plane.z(x, y) - h;
            sum += w * if clamp_positive { d.max(0.0) } else { d };
        }
        None => missing += 1,
    });
    if missing > 0 {
        return Err(FeatureError::VolumeGaps { feature, missing });
    }
    Ok(sum * pitch * pitch)
}

/// Surface representation and the matching landmark coordinates.
pub enum Surface<'a> {
    Grid(&'a HeightGrid),
    Cloud(&'a CloudSurface),
}

impl Surface<'_> {
    pub fn variant(&self) -> Variant {
        match self {
            Surface::Grid(_) => Variant::DepthImage,
            Surface::Cloud(_) => Variant::PointCloud,
        }
    }

    fn as_dyn(&self) -> &dyn HeightSurface {
        match self {
            Surface::Grid(g) => *g,
            Surface::Cloud(c) => *c,
        }
    }
}

/// Planar position of a landmark and, for clouds, its lifted height. Grid
/// endpoints take their height from the surface itself.
fn anchor(l: &LandmarkSet, name: LandmarkName, surface: &Surface<'_>) -> Result<([f64; 2], Option<f64>), FeatureError> {
    let lm = l.try_get(name)?;
    match surface {
        Surface::Grid(_) => Ok(([lm.u, lm.v], None)),
        Surface::Cloud(c) => {
            let p = lm.xyz_mm.ok_or(FeatureError::Missing3d(name))?;
            Ok(([p[0], p[1]], Some(c.height_of(p))))
        }
    }
}

/// Computes all 24 features for one image.
pub fn extract_features(
    surface: &Surface<'_>,
    landmarks: &LandmarkSet,
    params: &FeatureParams,
) -> Result<FeatureVector, FeatureError> {
    landmarks.require(&LandmarkName::ALL)?;
    let variant = surface.variant();
    let s = surface.as_dyn();
    let clamp = params.clamp_positive;
    let mut values = [0.0; N_FEATURES];
    for (i, line) in LINES.iter().enumerate() {
        let (p0, h0) = anchor(landmarks, line.endpoints.0, surface)?;
        let (p1, h1) = anchor(landmarks, line.endpoints.1, surface)?;
        let planar = math::hypot(p1[0] - p0[0], p1[1] - p0[1]);
        let n = params
            .n_samples
            .unwrap_or_else(|| (math::ceil(2.0 * planar / s.pitch()) as usize).max(64));
        let anchors = h0.zip(h1).map(|(a, b)| [a, b]);
        let profile = line_profile_named(s, p0, p1, n, anchors, line.id)?;
        let length = match params.chord_metric {
            ChordMetric::Planar => planar,
            ChordMetric::Spatial => {
                let dz = profile[n - 1].chord - profile[0].chord;
                math::sqrt(planar * planar + dz * dz)
            }
        };
        values[i] = max_distance(&profile, clamp);
        values[10 + i] = area(&profile, length, clamp);
    }
    for (i, tri) in TRIANGLES.iter().enumerate() {
        let mut verts = [[0.0; 2]; 3];
        let mut heights = [0.0; 3];
        let mut lifted = true;
        for k in 0..3 {
            let (p, h) = anchor(landmarks, tri.vertices[k], surface)?;
            verts[k] = p;
            match h {
                Some(h) => heights[k] = h,
                None => lifted = false,
            }
        }
        let anchors = lifted.then_some(heights);
        values[20 + i] = triangle_volume_named(s, verts, tri.vertices, anchors, clamp, tri.id)?;
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite { feature: FEATURE_NAMES[i].into() });
    }
    Ok(FeatureVector { variant, values })
}

/// Per-image processing shared by the CLI and the evaluation driver:
/// refine hooks/pins, derive spikes, build the requested surface and extract
/// the features. Returns the final nine-landmark set alongside.
pub fn features_from_raster(
    raster: &DepthRaster,
    detected: &LandmarkSet,
    cam: &CameraConfig,
    refinement: &RefinementConfig,
    params: &FeatureParams,
    variant: Variant,
) -> Result<(FeatureVector, LandmarkSet), FeatureError> {
    let refined = refine_keypoints(detected, raster, cam, refinement)?;
    let nine = derive_spikes(&refined)?;
    match variant {
        Variant::DepthImage => {
            let grid = HeightGrid::from_raster(raster, cam);
            let fv = extract_features(&Surface::Grid(&grid), &nine, params)?;
            Ok((fv, nine))
        }
        Variant::PointCloud => {
            let lifted = landmarks_to_3d(&nine, raster, cam)?;
            let cloud = backproject(raster, cam)?;
            let surface = CloudSurface::new(&cloud, cam, params)?;
            let fv = extract_features(&Surface::Cloud(&surface), &lifted, params)?;
            Ok((fv, lifted))
        }
    }
}
