//! File formats.

pub mod keypoints;
pub mod manifest;
pub mod pgm;
pub mod ply;
pub mod table;

use std::io::Write;

use bovigeom_core::{DepthRaster, ForestModel};

pub use keypoints::{parse_keypoints, KeypointFile};
pub use manifest::{read_manifest, write_manifest, ManifestRow};
pub use pgm::{decode_pgm, encode_pgm, PgmImage};
pub use ply::{encode_ply, read_ply, write_ply, PlyError};
pub use table::{read_features, write_features, FeatureRow, PredictionRow};

/// Depth CSV with millimeter values; invalid cells are left empty.
pub fn encode_depth_csv(r: &DepthRaster, decimals: usize) -> String {
    let mut s = String::with_capacity(r.width() * r.height() * 8);
    for v in 0..r.height() {
        for u in 0..r.width() {
            if u > 0 {
                s.push(',');
            }
            if let Some(d) = r.depth(u, v) {
                s.push_str(&format!("{d:.decimals$}"));
            }
        }
        s.push('\n');
    }
    s
}

pub fn encode_model(m: &ForestModel) -> Vec<u8> {
    let mut out = serde_json::to_vec(m).expect("model serializes");
    out.push(b'\n');
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ForestModel, String> {
    let m: ForestModel = serde_json::from_slice(bytes).map_err(|e| format!("invalid model JSON: {e}"))?;
    m.check_version().map_err(|e| e.to_string())?;
    Ok(m)
}

pub fn write_all(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(bytes)?;
    f.flush()
}
