//! Camera-frame point clouds and the point-cloud preprocessing chain.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{CameraConfig, DepthError, DepthRaster};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("point cloud is empty")]
    Empty,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("source pixel list has {pixels} entries for {points} points")]
    ProvenanceLength { points: usize, pixels: usize },
    #[error("invalid voxel size {0}")]
    VoxelSize(f64),
    #[error("subsample count must be positive")]
    ZeroCount,
    #[error("invalid augmentation parameters: {0}")]
    Augment(&'static str),
    #[error(transparent)]
    Camera(#[from] DepthError),
}

/// Translation and scale applied by [`normalize_unit_sphere`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormTransform {
    pub centroid: [f64; 3],
    pub scale: f64,
}

/// Points in camera-frame millimeters: `x` right, `y` down, `z` along the
/// optical axis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Source `(u, v)` pixel of each point, when the cloud came straight from
    /// a raster.
    pub source_pixel: Option<Vec<(u32, u32)>>,
    pub norm_transform: Option<NormTransform>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, CloudError> {
        let c = Self { points, source_pixel: None, norm_transform: None };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.norm_transform.is_some()
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        if let Some(i) = self.points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(CloudError::NonFinite(i));
        }
        if let Some(px) = &self.source_pixel {
            if px.len() != self.points.len() {
                return Err(CloudError::ProvenanceLength {
                    points: self.points.len(),
                    pixels: px.len(),
                });
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let mut s = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                s[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        Some([s[0] / n, s[1] / n, s[2] / n])
    }

    /// Undoes [`normalize_unit_sphere`]; identity for clouds that were never
    /// normalized.
    pub fn denormalize(&self) -> PointCloud {
        let Some(t) = self.norm_transform else { return self.clone() };
        let points = self
            .points
            .iter()
            .map(|p| [p[0] * t.scale + t.centroid[0], p[1] * t.scale + t.centroid[1], p[2] * t.scale + t.centroid[2]])
            .collect();
        PointCloud { points, source_pixel: self.source_pixel.clone(), norm_transform: None }
    }
}

/// Back-projects every valid pixel strictly above the ground plane
/// (`depth < ground_distance_mm`) through the pinhole model.
pub fn backproject(r: &DepthRaster, cam: &CameraConfig) -> Result<PointCloud, CloudError> {
    cam.validate()?;
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for v in 0..r.height() {
        for u in 0..r.width() {
            let Some(d) = r.depth(u, v) else { continue };
            if d >= cam.ground_distance_mm {
                continue;
            }
            points.push(cam.unproject(u as f64, v as f64, d));
            pixels.push((u as u32, v as u32));
        }
    }
    Ok(PointCloud { points, source_pixel: Some(pixels), norm_transform: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridSpec {
    pub voxel_size_mm: f64,
    #[serde(default)]
    pub origin: [f64; 3],
}

impl VoxelGridSpec {
    pub fn new(voxel_size_mm: f64) -> Self {
        Self { voxel_size_mm, origin: [0.0; 3] }
    }

    /// Positive voxel size; `+inf` is allowed and collapses to one voxel.
    pub fn validate(&self) -> Result<(), CloudError> {
        if self.voxel_size_mm > 0.0 && !self.origin.iter().any(|c| !c.is_finite()) {
            Ok(())
        } else {
            Err(CloudError::VoxelSize(self.voxel_size_mm))
        }
    }

    fn key(&self, p: &[f64; 3]) -> [i64; 3] {
        core::array::from_fn(|k| math::floor((p[k] - self.origin[k]) / self.voxel_size_mm) as i64)
    }
}

/// Replaces the points of each occupied voxel by their centroid. Output order
/// is ascending `(ix, iy, iz)`.
pub fn voxel_downsample(c: &PointCloud, g: &VoxelGridSpec) -> Result<PointCloud, CloudError> {
    g.validate()?;
    let mut cells: BTreeMap<[i64; 3], ([f64; 3], usize)> = BTreeMap::new();
    for p in &c.points {
        let e = cells.entry(g.key(p)).or_insert(([0.0; 3], 0));
        for k in 0..3 {
            e.0[k] += p[k];
        }
        e.1 += 1;
    }
    let points = cells
        .into_values()
        .map(|(s, n)| {
            let n = n as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect();
    Ok(PointCloud { points, source_pixel: None, norm_transform: None })
}

/// Centers the cloud on its centroid and scales the farthest point to norm 1.
/// A cloud of coincident points maps to the origin with scale 1.
pub fn normalize_unit_sphere(c: &PointCloud) -> Result<PointCloud, CloudError> {
    let centroid = c.centroid().ok_or(CloudError::Empty)?;
    let norm = |p: &[f64; 3]| {
        let d = [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]];
        math::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    };
    let s = c.points.iter().map(norm).fold(0.0, f64::max);
    let scale = if s > 0.0 { s } else { 1.0 };
    let points = c
        .points
        .iter()
        .map(|p| core::array::from_fn(|k| (p[k] - centroid[k]) / scale))
        .collect();
    Ok(PointCloud {
        points,
        source_pixel: c.source_pixel.clone(),
        norm_transform: Some(NormTransform { centroid, scale }),
    })
}

/// Draws exactly `n` points. With at least `n` points this is a uniform
/// sample without replacement (partial Fisher-Yates, in draw order);
/// otherwise all points are kept, followed by `n - len` draws with
/// replacement.
pub fn subsample(c: &PointCloud, n: usize, seed: u64) -> Result<PointCloud, CloudError> {
    if n == 0 {
        return Err(CloudError::ZeroCount);
    }
    if c.is_empty() {
        return Err(CloudError::Empty);
    }
    let mut r = rng::seeded(seed);
    let len = c.len();
    let picks: Vec<usize> = if len >= n {
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..n {
            let j = i + rng::index(&mut r, len - i);
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    } else {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.extend((len..n).map(|_| rng::index(&mut r, len)));
        idx
    };
    Ok(PointCloud {
        points: picks.iter().map(|&i| c.points[i]).collect(),
        source_pixel: c.source_pixel.as_ref().map(|px| picks.iter().map(|&i| px[i]).collect()),
        norm_transform: c.norm_transform,
    })
}

/// Axis treated as "vertical" by [`augment`]. For a downward-looking camera
/// this is the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalAxis {
    #[default]
    Z,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Rotation angle drawn from `Uniform(-yaw_range, yaw_range)`, radians.
    pub yaw_range: f64,
    pub scale_range: (f64, f64),
    /// Per-coordinate Gaussian jitter, millimeters.
    pub jitter_sigma: f64,
    #[serde(default)]
    pub axis: VerticalAxis,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { yaw_range: 0.0, scale_range: (1.0, 1.0), jitter_sigma: 0.0, axis: VerticalAxis::Z }
    }

    fn validate(&self) -> Result<(), CloudError> {
        let (lo, hi) = self.scale_range;
        if !(self.yaw_range >= 0.0 && self.yaw_range.is_finite()) {
            return Err(CloudError::Augment("yaw_range must be finite and non-negative"));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(CloudError::Augment("scale range must satisfy 0 < min <= max"));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(CloudError::Augment("jitter_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Random rotation about the vertical axis (through the origin), isotropic
/// scaling, then Gaussian jitter. Draw order: angle, scale, then x/y/z noise
/// per point; no noise is drawn when `jitter_sigma == 0`.
pub fn augment(c: &PointCloud, params: &AugmentParams, seed: u64) -> Result<PointCloud, CloudError> {
    params.validate()?;
    let mut r = rng::seeded(seed);
    let theta = params.yaw_range * (2.0 * rng::unit(&mut r) - 1.0);
    let (lo, hi) = params.scale_range;
    let s = lo + (hi - lo) * rng::unit(&mut r);
    let (sin, cos) = math::sin_cos(theta);
    let (a, b) = match params.axis {
        VerticalAxis::Z => (0, 1),
        VerticalAxis::Y => (2, 0),
    };
    let points = c
        .points
        .iter()
        .map(|p| {
            let mut q = *p;
            q[a] = cos * p[a] - sin * p[b];
            q[b] = sin * p[a] + cos * p[b];
            for x in q.iter_mut() {
                *x *= s;
            }
            if params.jitter_sigma > 0.0 {
                for x in q.iter_mut() {
                    *x += params.jitter_sigma * rng::normal(&mut r);
                }
            }
            q
        })
        .collect();
    Ok(PointCloud { points, source_pixel: c.source_pixel.clone(), norm_transform: None })
}
