//! Keypoint JSON: `{"image": "...", "points": [{"name", "u", "v"}]}`.

use bovigeom_core::{LandmarkError, LandmarkName, LandmarkSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub image: String,
    pub points: Vec<KeypointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointEntry {
    pub name: String,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Error)]
pub enum KeypointError {
    #[error("invalid keypoint JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
}

/// Parses and validates the six detected landmarks against a raster size.
pub fn parse_keypoints(text: &str, width: usize, height: usize) -> Result<(String, LandmarkSet), KeypointError> {
    let f: KeypointFile = serde_json::from_str(text)?;
    let set = LandmarkSet::from_detected(f.points.iter().map(|p| (p.name.as_str(), p.u, p.v)), width, height)?;
    Ok((f.image, set))
}

/// The detected landmarks of `set`, in canonical order.
pub fn keypoint_file(image: &str, set: &LandmarkSet) -> KeypointFile {
    let points = LandmarkName::DETECTED
        .iter()
        .filter_map(|&n| set.get(n))
        .map(|l| KeypointEntry { name: l.name.as_str().to_string(), u: l.u, v: l.v })
        .collect();
    KeypointFile { image: image.to_string(), points }
}

pub fn encode_keypoints(f: &KeypointFile) -> String {
    let mut s = serde_json::to_string_pretty(f).expect("keypoints serialize");
    s.push('\n');
    s
}
