//! Per-image loading and feature extraction for manifests and directories.

use std::path::{Path, PathBuf};

use bovigeom_core::evaluation::Sample;
use bovigeom_core::features::features_from_raster;
use bovigeom_core::{
    parse_depth_raster, BcsLabel, CameraConfig, DepthRaster, Executor, FeatureParams, FeatureVector, LandmarkSet,
    RefinementConfig, Variant,
};

use crate::error::{self, Error, Result};
use crate::io::{keypoints, manifest::ManifestRow, pgm};

/// One image to process.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pub cow_id: String,
    pub image_id: String,
    pub label: Option<BcsLabel>,
    pub depth: PathBuf,
    pub keypoints: PathBuf,
    pub mask: Option<PathBuf>,
}

impl From<&ManifestRow> for ImageInput {
    fn from(r: &ManifestRow) -> Self {
        Self {
            cow_id: r.cow_id.clone(),
            image_id: r.image_id.clone(),
            label: Some(r.true_bcs),
            depth: r.depth_csv_path.clone(),
            keypoints: r.keypoint_json_path.clone(),
            mask: r.mask_path.clone(),
        }
    }
}

pub fn load_raster(path: &Path) -> Result<DepthRaster> {
    parse_depth_raster(&error::read_text(path)?).map_err(|e| Error::data(path, e))
}

/// Loads the raster (masked when a mask is given) and its detected landmarks.
pub fn load_image(inp: &ImageInput) -> Result<(DepthRaster, LandmarkSet)> {
    let mut raster = load_raster(&inp.depth)?;
    if let Some(mp) = &inp.mask {
        let (w, h, mask) = pgm::decode_mask(&error::read(mp)?).map_err(|e| Error::data(mp, e))?;
        if (w, h) != (raster.width(), raster.height()) {
            return Err(Error::data(mp, format!("mask is {w}x{h}, raster is {}x{}", raster.width(), raster.height())));
        }
        raster = DepthRaster::with_mask(w, h, raster.depths().to_vec(), mask).map_err(|e| Error::data(mp, e))?;
    }
    let text = error::read_text(&inp.keypoints)?;
    let (_, set) = keypoints::parse_keypoints(&text, raster.width(), raster.height()).map_err(|e| Error::data(&inp.keypoints, e))?;
    Ok((raster, set))
}

/// Settings shared by every image of a run.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub camera: CameraConfig,
    pub refinement: RefinementConfig,
    pub features: FeatureParams,
}

/// Features of one image for each requested variant, in the given order.
pub fn image_features(inp: &ImageInput, x: &Extraction, variants: &[Variant]) -> Result<Vec<FeatureVector>> {
    let (raster, detected) = load_image(inp)?;
    variants
        .iter()
        .map(|&v| {
            features_from_raster(&raster, &detected, &x.camera, &x.refinement, &x.features, v)
                .map(|(fv, _)| fv)
                .map_err(|e| Error::data(&inp.depth, format!("{} features: {e}", v.as_str())))
        })
        .collect()
}

/// Processes every image through `exec`; results keep input order.
pub fn extract_all<E: Executor>(
    inputs: &[ImageInput],
    x: &Extraction,
    variants: &[Variant],
    exec: &E,
) -> Vec<Result<Vec<FeatureVector>>> {
    exec.map(inputs.iter().collect(), |inp| image_features(inp, x, variants))
}

/// An image-level evaluation sample carrying one vector per variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub cow_id: String,
    pub image_id: String,
    pub label: BcsLabel,
    pub vectors: Vec<FeatureVector>,
}

impl Sample for ImageSample {
    fn cow_id(&self) -> &str {
        &self.cow_id
    }

    fn true_bcs(&self) -> BcsLabel {
        self.label
    }

    fn features(&self, variant: Variant) -> Option<&FeatureVector> {
        self.vectors.iter().find(|v| v.variant == variant)
    }
}
