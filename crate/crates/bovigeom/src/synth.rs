//! Synthetic datasets on disk.

use std::path::{Path, PathBuf};

use bovigeom_core::rng::derive_seed;
use bovigeom_core::synthetic::{cohort_member, generate_cow, oracle_features, CohortConfig, SyntheticCow};
use bovigeom_core::{CameraConfig, Executor};

use crate::error::{self, Error, Result};
use crate::io::{self, keypoints, manifest::ManifestRow, table::FeatureRow};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub count: usize,
    pub seed: u64,
    pub images_per_cow: usize,
    pub noise_sigma_mm: f64,
    pub cohort: CohortConfig,
    /// Also write dense-integration oracle features for every image.
    pub oracle: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { count: 10, seed: 0, images_per_cow: 2, noise_sigma_mm: 3.0, cohort: CohortConfig::default(), oracle: true }
    }
}

impl SynthOptions {
    pub fn cow_id(&self, cow: usize) -> String {
        let w = self.count.saturating_sub(1).to_string().len().max(4);
        format!("cow{cow:0w$}")
    }

    pub fn image_id(&self, cow: usize, image: usize) -> String {
        format!("{}_{image}", self.cow_id(cow))
    }

    /// Renders image `image` of cow `cow`. Images of one cow share the body
    /// and bulges; landmark jitter and noise differ.
    pub fn render(&self, cow: usize, image: usize) -> Result<SyntheticCow> {
        let mut p = cohort_member(&self.cohort, self.seed, cow);
        p.noise_sigma_mm = self.noise_sigma_mm;
        p.seed = derive_seed(p.seed, image as u64);
        generate_cow(&p).map_err(Error::config)
    }

    /// A pinhole camera centered on the raster.
    pub fn camera(&self) -> CameraConfig {
        let t = &self.cohort.template;
        CameraConfig {
            ground_distance_mm: t.ground_distance_mm,
            ..CameraConfig::new(575.0, 575.0, (t.width as f64 - 1.0) / 2.0, (t.height as f64 - 1.0) / 2.0)
        }
    }

    pub fn images(&self) -> Vec<(usize, usize)> {
        (0..self.count).flat_map(|c| (0..self.images_per_cow).map(move |i| (c, i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub images: usize,
}

/// Writes `depth/`, `keypoints/`, `manifest.csv`, `camera.toml` and, when
/// enabled, `oracle_features.csv` under `out`.
pub fn write_dataset<E: Executor>(out: &Path, opts: &SynthOptions, exec: &E) -> Result<SynthSummary> {
    if opts.count == 0 || opts.images_per_cow == 0 {
        return Err(Error::config("--count and --images-per-cow must be positive"));
    }
    if !(opts.noise_sigma_mm >= 0.0 && opts.noise_sigma_mm.is_finite()) {
        return Err(Error::config("--noise must be a non-negative number"));
    }
    // Fail on bad parameters before touching the file system.
    opts.render(0, 0)?;
    for d in ["depth", "keypoints"] {
        error::create_dir(&out.join(d))?;
    }

    type Rendered = Result<(ManifestRow, Option<FeatureRow>)>;
    let rows: Vec<Rendered> = exec.map(opts.images(), |(c, i)| {
        let cow = opts.render(c, i)?;
        let (cow_id, image_id) = (opts.cow_id(c), opts.image_id(c, i));
        let depth_rel = PathBuf::from(format!("depth/{image_id}.csv"));
        let kp_rel = PathBuf::from(format!("keypoints/{image_id}.json"));
        error::write(&out.join(&depth_rel), io::encode_depth_csv(&cow.raster, 3).as_bytes())?;
        let detected = keypoints::keypoint_file(&image_id, &cow.landmarks);
        error::write(&out.join(&kp_rel), keypoints::encode_keypoints(&detected).as_bytes())?;
        let oracle = if opts.oracle {
            let fv = oracle_features(&cow.surface, &cow.landmarks).map_err(Error::config)?;
            Some(FeatureRow { cow_id: cow_id.clone(), image_id: image_id.clone(), features: fv, label: Some(cow.label) })
        } else {
            None
        };
        let row = ManifestRow {
            cow_id,
            image_id,
            true_bcs: cow.label,
            depth_csv_path: depth_rel,
            keypoint_json_path: kp_rel,
            mask_path: None,
            year: None,
        };
        Ok((row, oracle))
    });
    let rows: Vec<_> = rows.into_iter().collect::<Result<_>>()?;

    let manifest = out.join("manifest.csv");
    let mut buf = Vec::new();
    let entries: Vec<ManifestRow> = rows.iter().map(|r| r.0.clone()).collect();
    io::manifest::write_manifest(&mut buf, &entries).map_err(|e| Error::data(&manifest, e))?;
    error::write(&manifest, &buf)?;
    if opts.oracle {
        let oracle: Vec<FeatureRow> = rows.into_iter().filter_map(|r| r.1).collect();
        error::write(&out.join("oracle_features.csv"), &io::table::encode_features(&oracle))?;
    }
    let cam = toml::to_string(&opts.camera()).expect("camera serializes");
    error::write(&out.join("camera.toml"), cam.as_bytes())?;
    Ok(SynthSummary { manifest, images: entries.len() })
}

