//! Anatomical landmarks: the six detected keypoints, their refinement on the
//! height surface, the derived spikes, and 3D lifting.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{CameraConfig, DepthRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkName {
    LeftShortRib,
    RightShortRib,
    LeftHook,
    RightHook,
    LeftPin,
    RightPin,
    SpikeA,
    SpikeB,
    SpikeC,
}

impl LandmarkName {
    pub const ALL: [LandmarkName; 9] = [
        Self::LeftShortRib,
        Self::RightShortRib,
        Self::LeftHook,
        Self::RightHook,
        Self::LeftPin,
        Self::RightPin,
        Self::SpikeA,
        Self::SpikeB,
        Self::SpikeC,
    ];

    pub const DETECTED: [LandmarkName; 6] = [
        Self::LeftShortRib,
        Self::RightShortRib,
        Self::LeftHook,
        Self::RightHook,
        Self::LeftPin,
        Self::RightPin,
    ];

    pub const SPIKES: [LandmarkName; 3] = [Self::SpikeA, Self::SpikeB, Self::SpikeC];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LeftShortRib => "left_short_rib",
            Self::RightShortRib => "right_short_rib",
            Self::LeftHook => "left_hook",
            Self::RightHook => "right_hook",
            Self::LeftPin => "left_pin",
            Self::RightPin => "right_pin",
            Self::SpikeA => "spike_a",
            Self::SpikeB => "spike_b",
            Self::SpikeC => "spike_c",
        }
    }

    #[inline]
    fn slot(self) -> usize {
        self as usize
    }

    pub fn is_hook(self) -> bool {
        matches!(self, Self::LeftHook | Self::RightHook)
    }

    pub fn is_pin(self) -> bool {
        matches!(self, Self::LeftPin | Self::RightPin)
    }
}

impl fmt::Display for LandmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkName {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| LandmarkError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LandmarkError {
    #[error("unknown landmark name {0:?}")]
    UnknownName(String),
    #[error("missing landmark {0}")]
    Missing(LandmarkName),
    #[error("duplicate landmark {0}")]
    Duplicate(LandmarkName),
    #[error("landmark {name} at ({u}, {v}) is outside the {width}x{height} raster")]
    OutOfRange { name: LandmarkName, u: f64, v: f64, width: usize, height: usize },
    #[error("spikes already derived")]
    SpikesPresent,
    #[error("no valid pixel in the search window of {0}")]
    EmptyNeighborhood(LandmarkName),
    #[error("no valid depth around {0}")]
    Lift(LandmarkName),
    #[error("mask has {found} cells, raster has {expected}")]
    MaskShape { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: LandmarkName,
    pub u: f64,
    pub v: f64,
    pub refined: bool,
    pub xyz_mm: Option<[f64; 3]>,
}

impl Landmark {
    pub fn new(name: LandmarkName, u: f64, v: f64) -> Self {
        Self { name, u, v, refined: false, xyz_mm: None }
    }

    pub fn pixel(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

/// Up to nine named landmarks, at most one per name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkSet {
    slots: [Option<Landmark>; 9],
}

impl LandmarkSet {
    /// Validates a detected keypoint list: the six detected names exactly
    /// once each, inside `[0, width-1] x [0, height-1]`.
    pub fn from_detected<'a, I>(points: I, width: usize, height: usize) -> Result<Self, LandmarkError>
    where
        I: IntoIterator<Item = (&'a str, f64, f64)>,
    {
        let mut set = Self::default();
        for (name, u, v) in points {
            let name: LandmarkName = name.parse()?;
            if !LandmarkName::DETECTED.contains(&name) {
                return Err(LandmarkError::UnknownName(name.to_string()));
            }
            if set.get(name).is_some() {
                return Err(LandmarkError::Duplicate(name));
            }
            let inside = |x: f64, n: usize| x >= 0.0 && x <= (n as f64 - 1.0);
            if !inside(u, width) || !inside(v, height) {
                return Err(LandmarkError::OutOfRange { name, u, v, width, height });
            }
            set.slots[name.slot()] = Some(Landmark::new(name, u, v));
        }
        set.require(&LandmarkName::DETECTED)?;
        Ok(set)
    }

    pub fn from_landmarks(items: impl IntoIterator<Item = Landmark>) -> Result<Self, LandmarkError> {
        let mut set = Self::default();
        for l in items {
            if set.get(l.name).is_some() {
                return Err(LandmarkError::Duplicate(l.name));
            }
            set.slots[l.name.slot()] = Some(l);
        }
        Ok(set)
    }

    #[inline]
    pub fn get(&self, name: LandmarkName) -> Option<&Landmark> {
        self.slots[name.slot()].as_ref()
    }

    pub fn try_get(&self, name: LandmarkName) -> Result<&Landmark, LandmarkError> {
        self.get(name).ok_or(LandmarkError::Missing(name))
    }

    pub fn require(&self, names: &[LandmarkName]) -> Result<(), LandmarkError> {
        names.iter().try_for_each(|&n| self.try_get(n).map(|_| ()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Landmark> {
        self.slots.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn set(&mut self, l: Landmark) {
        self.slots[l.name.slot()] = Some(l);
    }

    /// Applies `f` to every landmark's pixel position.
    pub fn map_pixels(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut out = self.clone();
        for l in out.slots.iter_mut().flatten() {
            let (u, v) = f(l.u, l.v);
            l.u = u;
            l.v = v;
        }
        out
    }
}

/// Search radii for hook and pin refinement, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    #[serde(default = "default_hook_radius")]
    pub hook_radius: u32,
    #[serde(default = "default_pin_radius")]
    pub pin_radius: u32,
    /// Row-major body mask; `false` cells are never selected.
    #[serde(skip)]
    pub mask: Option<Vec<bool>>,
}

fn default_hook_radius() -> u32 {
    30
}

fn default_pin_radius() -> u32 {
    10
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self { hook_radius: default_hook_radius(), pin_radius: default_pin_radius(), mask: None }
    }
}

/// Moves each hook and pin to the highest valid, in-mask pixel within a
/// square (Chebyshev) window of its configured radius. Equal heights resolve
/// to the smallest `(v, u)`. Short ribs are left untouched; a radius of 0
/// disables refinement for that landmark kind.
pub fn refine_keypoints(
    l: &LandmarkSet,
    r: &DepthRaster,
    cam: &CameraConfig,
    cfg: &RefinementConfig,
) -> Result<LandmarkSet, LandmarkError> {
    l.require(&LandmarkName::DETECTED)?;
    if let Some(mask) = &cfg.mask {
        if mask.len() != r.width() * r.height() {
            return Err(LandmarkError::MaskShape { expected: r.width() * r.height(), found: mask.len() });
        }
    }
    let mut out = l.clone();
    for lm in l.iter() {
        let radius = if lm.name.is_hook() {
            cfg.hook_radius
        } else if lm.name.is_pin() {
            cfg.pin_radius
        } else {
            continue;
        };
        if radius == 0 {
            continue;
        }
        let (u, v) = highest_in_window(lm, radius as f64, r, cam, cfg.mask.as_deref())?;
        if (u, v) != (lm.u, lm.v) {
            out.set(Landmark { u, v, refined: true, xyz_mm: None, ..*lm });
        }
    }
    Ok(out)
}

fn highest_in_window(
    lm: &Landmark,
    radius: f64,
    r: &DepthRaster,
    cam: &CameraConfig,
    mask: Option<&[bool]>,
) -> Result<(f64, f64), LandmarkError> {
    let range = |c: f64, n: usize| {
        let lo = libm::ceil(c - radius).max(0.0);
        let hi = libm::floor(c + radius).min(n as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let (Some((u0, u1)), Some((v0, v1))) = (range(lm.u, r.width()), range(lm.v, r.height())) else {
        return Err(LandmarkError::EmptyNeighborhood(lm.name));
    };
    let mut best: Option<(f64, usize, usize)> = None;
    for v in v0..=v1 {
        for u in u0..=u1 {
            if mask.is_some_and(|m| !m[r.index(u, v)]) {
                continue;
            }
            let Some(d) = r.depth(u, v) else { continue };
            let h = cam.height_of(d);
            if best.is_none_or(|(bh, _, _)| h > bh) {
                best = Some((h, u, v));
            }
        }
    }
    best.map(|(_, u, v)| (u as f64, v as f64)).ok_or(LandmarkError::EmptyNeighborhood(lm.name))
}

fn midpoint(name: LandmarkName, a: &Landmark, b: &Landmark) -> Landmark {
    Landmark::new(name, (a.u + b.u) / 2.0, (a.v + b.v) / 2.0)
}

/// Adds spike A (short ribs), spike B (hooks) and spike C (pins) as exact
/// pixel midpoints. Must be called once, after refinement.
pub fn derive_spikes(l: &LandmarkSet) -> Result<LandmarkSet, LandmarkError> {
    if LandmarkName::SPIKES.iter().any(|&n| l.get(n).is_some()) {
        return Err(LandmarkError::SpikesPresent);
    }
    l.require(&LandmarkName::DETECTED)?;
    let g = |n| l.get(n).expect("checked above");
    use LandmarkName::*;
    let mut out = l.clone();
    out.set(midpoint(SpikeA, g(LeftShortRib), g(RightShortRib)));
    out.set(midpoint(SpikeB, g(LeftHook), g(RightHook)));
    out.set(midpoint(SpikeC, g(LeftPin), g(RightPin)));
    Ok(out)
}

/// Attaches camera-frame coordinates to every landmark, using the
/// valid-neighbor bilinear depth at its (possibly fractional) pixel.
pub fn landmarks_to_3d(
    l: &LandmarkSet,
    r: &DepthRaster,
    cam: &CameraConfig,
) -> Result<LandmarkSet, LandmarkError> {
    l.require(&LandmarkName::ALL)?;
    let mut out = l.clone();
    for lm in out.slots.iter_mut().flatten() {
        let d = r.bilinear_depth(lm.u, lm.v).ok_or(LandmarkError::Lift(lm.name))?;
        lm.xyz_mm = Some(cam.unproject(lm.u, lm.v, d));
    }
    Ok(out)
}
