//! # bovigeom-core
//!
//! Allocation-only (`no_std` + `alloc`) algorithms for body condition scoring of
//! dairy cows from top-view depth rasters:
//!
//! - [`depth`]: depth CSV parsing, 8-bit height maps, center padding
//! - [`pointcloud`]: pinhole back-projection, voxel downsampling, unit-sphere
//!   normalization, seeded subsampling and augmentation
//! - [`landmarks`]: hook/pin refinement, spike A/B/C derivation, 3D lifting
//! - [`features`]: the 24 handcrafted geometric features (10 max-distances,
//!   10 areas, 4 volumes) for the depth-image and point-cloud variants
//! - [`forest`]: CART/Gini random forest with impurity importances and grid search
//! - [`evaluation`]: cow-level stratified splits, majority voting, tolerance
//!   accuracy, keypoint metrics, Welch t-tests and the repeated CV driver
//! - [`synthetic`]: parametric cow-back generator plus an independent
//!   dense-integration feature oracle
//!
//! File formats, configuration loading and the command line live in the
//! `bovigeom` companion crate.
//!
//! Every randomized operation takes an explicit seed and draws from
//! [`rng::Rng`] (PCG XSL RR 128/64), so results are bit-reproducible across
//! platforms and across serial/parallel execution.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod depth;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod forest;
pub mod landmarks;
mod math;
pub mod pointcloud;
pub mod rng;
pub mod synthetic;

pub use depth::{
    pad_center, parse_depth_raster, raster_to_heightmap, CameraConfig, DepthError, DepthRaster,
    HeightMap,
};
pub use evaluation::{
    cow_level_split, keypoint_rmse, majority_vote, pck, run_cv, tolerance_accuracy,
    two_sided_ttest, CowRecord, EvalError, EvalReport, Partition, Pipeline, Sample, SplitPlan,
    TTest, TOLERANCES,
};
pub use exec::{Executor, Serial};
pub use features::{
    extract_features, FeatureError, FeatureParams, FeatureVector, Variant, FEATURE_NAMES,
};
pub use forest::{
    grid_search, train_forest, BcsLabel, ForestError, ForestGrid, ForestHyperparams, ForestModel,
    N_CLASSES,
};
pub use landmarks::{
    derive_spikes, landmarks_to_3d, refine_keypoints, Landmark, LandmarkError, LandmarkName,
    LandmarkSet, RefinementConfig,
};
pub use pointcloud::{backproject, PointCloud, VoxelGridSpec};
