//! Parametric cow-back depth rasters with known landmarks and labels, and a
//! dense-integration oracle for the 24 features.
//!
//! The surface is an elliptic-paraboloid cap over the body ellipse plus one
//! compact bulge per feature line:
//!
//! ```text
//! h(p) = base + dome * (1 - (s/S)^2 - (l/B)^2)               inside the body
//!      + sum_k A_k * 4t(1-t) * (1 - (d/W)^2)^2                 bulge k
//! ```
//!
//! where `s`/`l` are the spine/lateral offsets from the body center, `t` the
//! position along line `k` and `d` the perpendicular distance to it. Outside
//! the body the height is zero (ground).
//!
//! The oracle in this module deliberately shares nothing with the feature
//! extractor: it has its own line table, its own sampling, and integrates
//! volumes over a fine barycentric subdivision instead of a pixel lattice.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::DepthRaster;
use crate::features::{FeatureVector, Variant, N_FEATURES};
use crate::forest::BcsLabel;
use crate::landmarks::{derive_spikes, Landmark, LandmarkError, LandmarkName, LandmarkSet};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error("body ellipse does not fit in the raster")]
    Layout,
}

/// Landmark positions in body units: `[s, l]` with `s` along the spine as a
/// fraction of the half length and `l` lateral as a fraction of the half
/// width. Left and right landmarks mirror each other in `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub short_rib: [f64; 2],
    pub hook: [f64; 2],
    pub pin: [f64; 2],
    /// Uniform per-landmark jitter, as a fraction of each body unit.
    pub jitter: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self { short_rib: [-0.45, 0.40], hook: [0.0, 0.80], pin: [0.55, 0.30], jitter: 0.05 }
    }
}

/// Monotone step map from mean bulge amplitude to label: values below
/// `edges[0]` get `labels[0]`, values in `[edges[i-1], edges[i])` get
/// `labels[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcsMap {
    pub edges: Vec<f64>,
    pub labels: Vec<BcsLabel>,
}

impl BcsMap {
    /// `n` consecutive classes starting at `first`, with equal-width bins
    /// over `[lo, hi]`.
    pub fn uniform(first: BcsLabel, n: usize, lo: f64, hi: f64) -> Self {
        let edges = (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let labels = (0..n).map(|i| BcsLabel::from_index(first.index() + i).expect("label in range")).collect();
        Self { edges, labels }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.labels.len() != self.edges.len() + 1 {
            return Err(SynthError::Params("bcs_map needs one more label than edges"));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) || self.edges.iter().any(|e| !e.is_finite()) {
            return Err(SynthError::Params("bcs_map edges must be finite and increasing"));
        }
        if self.labels.windows(2).any(|w| w[0] > w[1]) {
            return Err(SynthError::Params("bcs_map labels must be non-decreasing"));
        }
        Ok(())
    }

    pub fn label(&self, mean_amplitude: f64) -> BcsLabel {
        self.labels[self.edges.partition_point(|&e| e <= mean_amplitude)]
    }
}

impl Default for BcsMap {
    fn default() -> Self {
        Self::uniform(BcsLabel::from_index(3).unwrap(), 5, 8.0, 28.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCowParams {
    pub width: usize,
    pub height: usize,
    pub body_length_px: f64,
    pub body_width_px: f64,
    /// Body center in pixels; `None` centers the body in the raster.
    pub center: Option<[f64; 2]>,
    pub layout: Layout,
    /// Bulge amplitude for L1..L10.
    pub bulge_amplitude_mm: [f64; 10],
    /// Half width of each bulge's compact cross-section.
    pub bulge_width_px: f64,
    pub base_height_mm: f64,
    pub dome_height_mm: f64,
    pub noise_sigma_mm: f64,
    pub ground_distance_mm: f64,
    pub seed: u64,
    pub bcs_map: BcsMap,
}

impl Default for SyntheticCowParams {
    fn default() -> Self {
        Self {
            width: 480,
            height: 260,
            body_length_px: 400.0,
            body_width_px: 200.0,
            center: None,
            layout: Layout::default(),
            bulge_amplitude_mm: [18.0; 10],
            bulge_width_px: 15.0,
            base_height_mm: 1350.0,
            dome_height_mm: 30.0,
            noise_sigma_mm: 0.0,
            ground_distance_mm: 2515.0,
            seed: 0,
            bcs_map: BcsMap::default(),
        }
    }
}

impl SyntheticCowParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let p = |m| Err(SynthError::Params(m));
        if self.width == 0 || self.height == 0 || !(self.body_length_px > 0.0) || !(self.body_width_px > 0.0) {
            return p("dimensions must be positive");
        }
        if self.bulge_amplitude_mm.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return p("amplitudes must be finite and >= 0");
        }
        if !(self.bulge_width_px > 0.0) || !(self.noise_sigma_mm >= 0.0) || !(self.dome_height_mm >= 0.0) {
            return p("bulge width must be positive, noise and dome non-negative");
        }
        if !(self.layout.jitter >= 0.0 && self.layout.jitter < 0.5) {
            return p("layout jitter must be in [0, 0.5)");
        }
        let top = self.base_height_mm + self.dome_height_mm + self.bulge_amplitude_mm.iter().sum::<f64>();
        if !(self.base_height_mm > 0.0) || !(top < self.ground_distance_mm) {
            return p("surface must lie between ground and camera");
        }
        self.bcs_map.validate()?;
        let [cu, cv] = self.center();
        let (hs, hl) = (self.body_length_px / 2.0, self.body_width_px / 2.0);
        if cu - hs < 1.0 || cu + hs > self.width as f64 - 2.0 || cv - hl < 1.0 || cv + hl > self.height as f64 - 2.0 {
            return Err(SynthError::Layout);
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 2] {
        self.center.unwrap_or([(self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0])
    }

    pub fn mean_amplitude(&self) -> f64 {
        self.bulge_amplitude_mm.iter().sum::<f64>() / 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bulge {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub amplitude_mm: f64,
    pub width_px: f64,
}

impl Bulge {
    #[inline]
    fn height(&self, u: f64, v: f64) -> f64 {
        let (ex, ey) = (self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]);
        let (dx, dy) = (u - self.p0[0], v - self.p0[1]);
        let l2 = ex * ex + ey * ey;
        let t = (dx * ex + dy * ey) / l2;
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let d2 = (ex * dy - ey * dx) * (ex * dy - ey * dx) / l2;
        let w2 = self.width_px * self.width_px;
        if d2 >= w2 {
            return 0.0;
        }
        let c = 1.0 - d2 / w2;
        self.amplitude_mm * 4.0 * t * (1.0 - t) * c * c
    }
}

/// Closed-form surface of a synthetic cow, in pixel coordinates and
/// millimeters above ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDescriptor {
    pub ground_distance_mm: f64,
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub base_height_mm: f64,
    pub dome_height_mm: f64,
    pub bulges: Vec<Bulge>,
}

impl SurfaceDescriptor {
    #[inline]
    pub fn height(&self, u: f64, v: f64) -> f64 {
        let s = (u - self.center[0]) / self.semi_axes[0];
        let l = (v - self.center[1]) / self.semi_axes[1];
        let q = s * s + l * l;
        if q >= 1.0 {
            return 0.0;
        }
        let mut h = self.base_height_mm + self.dome_height_mm * (1.0 - q);
        for b in &self.bulges {
            h += b.height(u, v);
        }
        h
    }

    /// Closed-form maximum distance and area of the cap alone along
    /// `p0 -> p1` (both inside the body). The cap is quadratic, so its
    /// deviation from the chord is `k * t(1-t)`.
    pub fn base_line_deviation(&self, p0: [f64; 2], p1: [f64; 2]) -> (f64, f64) {
        let ds = (p1[0] - p0[0]) / self.semi_axes[0];
        let dl = (p1[1] - p0[1]) / self.semi_axes[1];
        let k = self.dome_height_mm * (ds * ds + dl * dl);
        let len = math::hypot(p1[0] - p0[0], p1[1] - p0[1]);
        (k / 4.0, k * len / 6.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCow {
    pub raster: DepthRaster,
    /// All nine landmarks at their exact (fractional) positions.
    pub landmarks: LandmarkSet,
    pub label: BcsLabel,
    pub surface: SurfaceDescriptor,
}

// Oracle-side line and triangle table, written out independently of the
// extractor's.
use LandmarkName::*;
const ORACLE_LINES: [(LandmarkName, LandmarkName); 10] = [
    (SpikeA, RightHook),
    (SpikeB, RightHook),
    (SpikeC, RightHook),
    (RightPin, RightHook),
    (SpikeB, RightPin),
    (SpikeB, LeftPin),
    (LeftHook, LeftPin),
    (LeftHook, SpikeC),
    (LeftHook, SpikeB),
    (LeftHook, SpikeA),
];
const ORACLE_TRIANGLES: [[LandmarkName; 3]; 4] = [
    [SpikeA, SpikeB, RightHook],
    [SpikeA, SpikeB, LeftHook],
    [SpikeB, SpikeC, RightHook],
    [SpikeB, SpikeC, LeftHook],
];

/// Oracle-side evaluator: the closed form with reciprocals precomputed and
/// the bulge list restrictable to a region.
#[derive(Debug, Clone)]
struct Compiled {
    center: [f64; 2],
    inv_axes: [f64; 2],
    base: f64,
    dome: f64,
    bulges: Vec<CompiledBulge>,
}

#[derive(Debug, Clone, Copy)]
struct CompiledBulge {
    p0: [f64; 2],
    e: [f64; 2],
    inv_l2: f64,
    inv_w2: f64,
    amp: f64,
    width: f64,
}

impl Compiled {
    fn new(desc: &SurfaceDescriptor) -> Self {
        let bulges = desc
            .bulges
            .iter()
            .map(|b| {
                let e = [b.p1[0] - b.p0[0], b.p1[1] - b.p0[1]];
                CompiledBulge {
                    p0: b.p0,
                    e,
                    inv_l2: 1.0 / (e[0] * e[0] + e[1] * e[1]),
                    inv_w2: 1.0 / (b.width_px * b.width_px),
                    amp: b.amplitude_mm,
                    width: b.width_px,
                }
            })
            .collect();
        Self {
            center: desc.center,
            inv_axes: [1.0 / desc.semi_axes[0], 1.0 / desc.semi_axes[1]],
            base: desc.base_height_mm,
            dome: desc.dome_height_mm,
            bulges,
        }
    }

    /// Copy keeping only the bulges whose support reaches the disc of
    /// `radius` around `center`.
    fn restricted(&self, center: [f64; 2], radius: f64) -> Self {
        let bulges = self
            .bulges
            .iter()
            .filter(|b| {
                let (dx, dy) = (center[0] - b.p0[0], center[1] - b.p0[1]);
                let t = ((dx * b.e[0] + dy * b.e[1]) * b.inv_l2).clamp(0.0, 1.0);
                let (ox, oy) = (dx - t * b.e[0], dy - t * b.e[1]);
                let reach = b.width + radius;
                ox * ox + oy * oy <= reach * reach
            })
            .copied()
            .collect();
        Self { bulges, ..self.clone() }
    }

    #[inline]
    fn height(&self, u: f64, v: f64) -> f64 {
        let s = (u - self.center[0]) * self.inv_axes[0];
        let l = (v - self.center[1]) * self.inv_axes[1];
        let q = s * s + l * l;
        if q >= 1.0 {
            return 0.0;
        }
        let mut h = self.base + self.dome * (1.0 - q);
        for b in &self.bulges {
            let (dx, dy) = (u - b.p0[0], v - b.p0[1]);
            let t = (dx * b.e[0] + dy * b.e[1]) * b.inv_l2;
            if t <= 0.0 || t >= 1.0 {
                continue;
            }
            let cross = b.e[0] * dy - b.e[1] * dx;
            let r = cross * cross * b.inv_l2 * b.inv_w2;
            if r >= 1.0 {
                continue;
            }
            let c = 1.0 - r;
            h += b.amp * 4.0 * t * (1.0 - t) * c * c;
        }
        h
    }
}

/// Center of `points` and the radius of the enclosing disc around it.
fn enclosing_disc(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    let k = points.len() as f64;
    let c = [points.iter().map(|p| p[0]).sum::<f64>() / k, points.iter().map(|p| p[1]).sum::<f64>() / k];
    let r = points.iter().map(|p| math::hypot(p[0] - c[0], p[1] - c[1])).fold(0.0, f64::max);
    (c, r)
}

/// Rounds both coordinates to integers with an even sum.
fn snap_pair(a: f64, b: f64) -> (f64, f64) {
    let (ra, mut rb) = (math::round_half_up(a), math::round_half_up(b));
    if (ra as i64 + rb as i64).rem_euclid(2) != 0 {
        rb += if b > rb { 1.0 } else { -1.0 };
    }
    (ra, rb)
}

/// Renders one cow. Landmark jitter and depth noise come from independent
/// streams of `params.seed`.
pub fn generate_cow(params: &SyntheticCowParams) -> Result<SyntheticCow, SynthError> {
    params.validate()?;
    let c = params.center();
    let (hs, hl) = (params.body_length_px / 2.0, params.body_width_px / 2.0);
    let mut jr = rng::stream(params.seed, 0);
    let lay = &params.layout;
    let mut place = |name: LandmarkName, sl: [f64; 2], side: f64| {
        let js = lay.jitter * (2.0 * rng::unit(&mut jr) - 1.0);
        let jl = lay.jitter * (2.0 * rng::unit(&mut jr) - 1.0);
        Landmark::new(name, c[0] + (sl[0] + js) * hs, c[1] + (side * sl[1] + jl) * hl)
    };
    let mut detected = [
        place(LeftShortRib, lay.short_rib, -1.0),
        place(RightShortRib, lay.short_rib, 1.0),
        place(LeftHook, lay.hook, -1.0),
        place(RightHook, lay.hook, 1.0),
        place(LeftPin, lay.pin, -1.0),
        place(RightPin, lay.pin, 1.0),
    ];
    // Bulges crease at their endpoints, so landmarks sit on pixel centers and
    // every spike midpoint does too.
    for pair in detected.chunks_mut(2) {
        let (u, v) = (snap_pair(pair[0].u, pair[1].u), snap_pair(pair[0].v, pair[1].v));
        (pair[0].u, pair[1].u, pair[0].v, pair[1].v) = (u.0, u.1, v.0, v.1);
    }
    for lm in &detected {
        let (ds, dl) = ((lm.u - c[0]) / hs, (lm.v - c[1]) / hl);
        let q = ds * ds + dl * dl;
        if q >= 1.0 {
            return Err(SynthError::Layout);
        }
    }
    let six = LandmarkSet::from_landmarks(detected).map_err(|_| SynthError::Layout)?;
    let landmarks = derive_spikes(&six).map_err(|_| SynthError::Layout)?;
    let at = |n: LandmarkName| landmarks.get(n).expect("nine landmarks").pixel();
    let bulges = ORACLE_LINES
        .iter()
        .zip(params.bulge_amplitude_mm)
        .filter(|(_, a)| *a > 0.0)
        .map(|(&(a, b), amp)| Bulge { p0: at(a), p1: at(b), amplitude_mm: amp, width_px: params.bulge_width_px })
        .collect();
    let surface = SurfaceDescriptor {
        ground_distance_mm: params.ground_distance_mm,
        center: c,
        semi_axes: [hs, hl],
        base_height_mm: params.base_height_mm,
        dome_height_mm: params.dome_height_mm,
        bulges,
    };

    let mut nr = rng::stream(params.seed, 1);
    let (w, h) = (params.width, params.height);
    let mut depths = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let z = surface.height(u as f64, v as f64);
            let noise = if z > 0.0 && params.noise_sigma_mm > 0.0 { params.noise_sigma_mm * rng::normal(&mut nr) } else { 0.0 };
            depths.push(params.ground_distance_mm - z - noise);
        }
    }
    let raster = DepthRaster::new(w, h, depths).expect("dimensions match");
    Ok(SyntheticCow { raster, landmarks, label: params.bcs_map.label(params.mean_amplitude()), surface })
}

/// Population of cows with a shared geometry template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub template: SyntheticCowParams,
    /// Range of the per-cow mean amplitude.
    pub amplitude_range_mm: [f64; 2],
    /// Relative per-line spread around the cow's mean amplitude.
    pub line_spread: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self { template: SyntheticCowParams::default(), amplitude_range_mm: [8.0, 28.0], line_spread: 0.1 }
    }
}

/// Parameters for cow `index` of a cohort; each cow draws from its own stream.
pub fn cohort_member(cfg: &CohortConfig, seed: u64, index: usize) -> SyntheticCowParams {
    let mut r = rng::stream(seed, index as u64);
    let [lo, hi] = cfg.amplitude_range_mm;
    let mean = lo + (hi - lo) * rng::unit(&mut r);
    let mut p = cfg.template.clone();
    for a in &mut p.bulge_amplitude_mm {
        *a = (mean * (1.0 + cfg.line_spread * (2.0 * rng::unit(&mut r) - 1.0))).max(0.0);
    }
    p.seed = rng::derive_seed(seed, index as u64 ^ 0x5EED_0000_0000_0000);
    p
}

/// Samples per oracle line (intervals); the oracle evaluates one more point.
pub const ORACLE_LINE_INTERVALS: usize = 1_000_000;
/// Subdivisions per triangle edge; the oracle evaluates `N^2` sub-triangles.
pub const ORACLE_TRIANGLE_SUBDIV: usize = 2_000;

/// Features by dense evaluation of the closed-form surface at the given
/// landmark pixels (depth-image units: px, mm).
pub fn oracle_features(desc: &SurfaceDescriptor, landmarks: &LandmarkSet) -> Result<FeatureVector, LandmarkError> {
    landmarks.require(&LandmarkName::ALL)?;
    let at = |n: LandmarkName| landmarks.get(n).expect("checked").pixel();
    let mut values = [0.0; N_FEATURES];
    for (i, &(a, b)) in ORACLE_LINES.iter().enumerate() {
        let (md, ar) = oracle_line(desc, at(a), at(b), ORACLE_LINE_INTERVALS);
        values[i] = md;
        values[10 + i] = ar;
    }
    for (i, tri) in ORACLE_TRIANGLES.iter().enumerate() {
        values[20 + i] = oracle_volume(desc, [at(tri[0]), at(tri[1]), at(tri[2])], ORACLE_TRIANGLE_SUBDIV);
    }
    Ok(FeatureVector { variant: Variant::DepthImage, values })
}

/// Points per bulge-restriction chunk along an oracle line.
const LINE_CHUNK: usize = 4096;

/// Maximum of `surface - chord` over `intervals + 1` evenly spaced points and
/// its Simpson integral over the planar length.
pub fn oracle_line(desc: &SurfaceDescriptor, p0: [f64; 2], p1: [f64; 2], intervals: usize) -> (f64, f64) {
    let n = intervals + intervals % 2;
    let full = Compiled::new(desc);
    let h0 = full.height(p0[0], p0[1]);
    let h1 = full.height(p1[0], p1[1]);
    let (dx, dy) = (p1[0] - p0[0], p1[1] - p0[1]);
    let step = 1.0 / n as f64;
    let at = |i: usize| {
        let t = i as f64 * step;
        (t, [p0[0] + t * dx, p0[1] + t * dy])
    };
    let mut best = f64::NEG_INFINITY;
    let mut simpson = 0.0;
    let mut start = 0;
    while start <= n {
        let end = (start + LINE_CHUNK).min(n + 1);
        let (c, r) = enclosing_disc(&[at(start).1, at(end - 1).1]);
        let local = full.restricted(c, r);
        for i in start..end {
            let (t, [x, y]) = at(i);
            let d = local.height(x, y) - (h0 + t * (h1 - h0));
            best = best.max(d);
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            simpson += w * d;
        }
        start = end;
    }
    let len = math::sqrt(dx * dx + dy * dy);
    (best, simpson / (3.0 * n as f64) * len)
}

/// Integral of `plane - surface` over the triangle, evaluated at the
/// centroids of its `subdiv^2` congruent sub-triangles. The plane passes
/// through the vertices at their surface heights.
pub fn oracle_volume(desc: &SurfaceDescriptor, tri: [[f64; 2]; 3], subdiv: usize) -> f64 {
    let full = Compiled::new(desc);
    let z = tri.map(|p| full.height(p[0], p[1]));
    plane_gap_integral(tri, z, subdiv, |c, r| {
        let local = full.restricted(c, r);
        move |x, y| local.height(x, y)
    })
}

/// Sub-triangle rows and columns per integrand block.
const TRIANGLE_BLOCK: usize = 64;

/// Integral over the triangle of `plane - f`, where the plane passes through
/// `(tri[k], z[k])`. The triangle is swept in blocks of sub-triangles;
/// `region` gets each block's enclosing disc and returns the integrand to use
/// inside it.
fn plane_gap_integral<F: Fn(f64, f64) -> f64>(
    tri: [[f64; 2]; 3],
    z: [f64; 3],
    subdiv: usize,
    mut region: impl FnMut([f64; 2], f64) -> F,
) -> f64 {
    let [a, b, c] = tri;
    let e1 = [b[0] - a[0], b[1] - a[1], z[1] - z[0]];
    let e2 = [c[0] - a[0], c[1] - a[1], z[2] - z[0]];
    // Normal n = e1 x e2; the plane is n . (p - a) = 0.
    let nx = e1[1] * e2[2] - e1[2] * e2[1];
    let ny = e1[2] * e2[0] - e1[0] * e2[2];
    let nz = e1[0] * e2[1] - e1[1] * e2[0];
    let (gx, gy) = (nx / nz, ny / nz);
    let plane = |x: f64, y: f64| z[0] - gx * (x - a[0]) - gy * (y - a[1]);
    let n = subdiv as f64;
    let (s1, s2) = ([e1[0] / n, e1[1] / n], [e2[0] / n, e2[1] / n]);
    let point = |fi: f64, fj: f64| [a[0] + fi * s1[0] + fj * s2[0], a[1] + fi * s1[1] + fj * s2[1]];
    let mut sum = 0.0;
    for bi in (0..subdiv).step_by(TRIANGLE_BLOCK) {
        for bj in (0..subdiv - bi).step_by(TRIANGLE_BLOCK) {
            let (i0, j0, k) = (bi as f64, bj as f64, TRIANGLE_BLOCK as f64);
            let (c, r) = enclosing_disc(&[point(i0, j0), point(i0 + k, j0), point(i0, j0 + k), point(i0 + k, j0 + k)]);
            let f = region(c, r);
            for i in bi..(bi + TRIANGLE_BLOCK).min(subdiv) {
                if bj >= subdiv - i {
                    break;
                }
                for j in bj..(bj + TRIANGLE_BLOCK).min(subdiv - i) {
                    // Upward sub-triangle, then the downward one sharing its hypotenuse.
                    let (fi, fj) = (i as f64, j as f64);
                    let [x, y] = point(fi + 1.0 / 3.0, fj + 1.0 / 3.0);
                    sum += plane(x, y) - f(x, y);
                    if i + j + 1 < subdiv {
                        let [x, y] = point(fi + 2.0 / 3.0, fj + 2.0 / 3.0);
                        sum += plane(x, y) - f(x, y);
                    }
                }
            }
        }
    }
    let area = 0.5 * nz.abs();
    sum * area / (n * n)
}
