//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use bovigeom_core::evaluation::{run_cv, ForestPipeline, Pipeline};
use bovigeom_core::forest::{grid_search, Dataset};
use bovigeom_core::pointcloud::{augment, normalize_unit_sphere, subsample, voxel_downsample};
use bovigeom_core::rng::derive_seed;
use bovigeom_core::{
    backproject, cow_level_split, pad_center, raster_to_heightmap, CameraConfig, CowRecord, Executor, Partition,
    VoxelGridSpec, Variant, FEATURE_NAMES,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_camera, GridChoice, PipelineConfig};
use crate::dataset::{self, Extraction, ImageInput, ImageSample};
use crate::error::{self, Error, Result};
use crate::exec::{fnv1a, with_pool, Parallel};
use crate::io::{self, manifest, table};
use crate::logging::{self, LogFormat};
use crate::synth::{self, SynthOptions};
use crate::{stats, VERSION};

#[derive(Debug, Parser)]
#[command(name = "bovigeom", version = VERSION, about = "Body condition scoring from top-view depth rasters")]
pub struct Cli {
    /// Log format on stderr.
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    pub log: LogFormat,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Pipeline configuration TOML.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More output; repeat for debug logs.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Depth,
    Cloud,
    Both,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::Depth => vec![Variant::DepthImage],
            VariantArg::Cloud => vec![Variant::PointCloud],
            VariantArg::Both => vec![Variant::DepthImage, Variant::PointCloud],
        }
    }
}

#[derive(Debug, Args)]
pub struct CameraArg {
    /// Camera TOML (falls back to `[camera]` in --config).
    #[arg(long)]
    pub camera: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Depth CSVs to 8-bit PGM height maps.
    Convert {
        #[command(flatten)]
        camera: CameraArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Center-pad every map to WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_size)]
        pad: Option<(usize, usize)>,
        /// Gray level of the padding.
        #[arg(long, default_value_t = 0)]
        fill: u8,
    },
    /// Depth CSVs to PLY point clouds.
    Cloud {
        #[command(flatten)]
        camera: CameraArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Voxel size in millimeters.
        #[arg(long)]
        voxel: Option<f64>,
        /// Fixed point count after subsampling.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Normalize to the unit sphere.
        #[arg(long)]
        normalize: bool,
    },
    /// Handcrafted features for a manifest or a directory of rasters.
    Features {
        #[command(flatten)]
        camera: CameraArg,
        #[arg(long, conflicts_with_all = ["input", "keypoints"])]
        manifest: Option<PathBuf>,
        /// Directory of depth CSVs (with --keypoints).
        #[arg(long = "in", requires = "keypoints")]
        input: Option<PathBuf>,
        /// Directory of `<stem>.json` keypoint files.
        #[arg(long, requires = "input")]
        keypoints: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = VariantArg::Depth)]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search and train a random forest on a feature CSV.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        grid: Option<GridChoice>,
        /// Only rows of this variant (required when the CSV mixes variants).
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a trained model to a feature CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated cow-level cross-validation.
    Eval {
        #[command(flatten)]
        camera: CameraArg,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = VariantArg::Depth)]
        variant: VariantArg,
        #[arg(long, value_enum)]
        grid: Option<GridChoice>,
        /// Report JSON; the text table goes next to it with a `.txt` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        images_per_cow: usize,
        /// Depth noise sigma in millimeters.
        #[arg(long, default_value_t = 3.0)]
        noise: f64,
        /// Skip the oracle features.
        #[arg(long)]
        no_oracle: bool,
    },
    /// BCS histogram per year.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    Ok((w.parse().map_err(|_| "bad width")?, h.parse().map_err(|_| "bad height")?))
}

/// Per-item failures of a batch command.
#[derive(Debug, Default)]
pub struct Batch {
    pub total: usize,
    pub failures: Vec<Error>,
}

impl Batch {
    fn record(&mut self, e: Error) {
        log::error!("{e}");
        self.failures.push(e);
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    logging::init(cli.log, level);
    if cli.jobs == Some(0) {
        log::error!("--jobs must be at least 1");
        return 1;
    }
    let result = with_pool(cli.jobs, || execute(&cli)).unwrap_or_else(|e| Err(Error::config(e)));
    match result {
        Ok(b) if b.failures.is_empty() => 0,
        Ok(b) => {
            log::error!("{} of {} items failed", b.failures.len(), b.total);
            2
        }
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

fn camera(arg: &CameraArg, cfg: &PipelineConfig) -> Result<CameraConfig> {
    match (&arg.camera, cfg.camera) {
        (Some(p), _) => load_camera(p),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(Error::config("missing required flag --camera")),
    }
}

/// `*.csv` files directly inside `dir`, sorted by name.
fn list_csv(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::data(dir, e))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn execute(cli: &Cli) -> Result<Batch> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let exec = Parallel;
    match &cli.command {
        Command::Convert { camera: c, input, out, pad, fill } => {
            let cam = camera(c, &cfg)?;
            convert(&cam, input, out, *pad, *fill, &exec)
        }
        Command::Cloud { camera: c, input, out, voxel, points, seed, normalize } => {
            let cam = camera(c, &cfg)?;
            let mut cc = cfg.cloud.clone();
            cc.voxel_mm = voxel.or(cc.voxel_mm);
            cc.points = points.or(cc.points);
            cc.normalize |= normalize;
            if cc.voxel_mm.is_some_and(|v| !(v > 0.0)) || cc.points == Some(0) {
                return Err(Error::config("--voxel and --points must be positive"));
            }
            cloud(&cam, &cc, input, out, *seed, &exec)
        }
        Command::Features { camera: c, manifest, input, keypoints, variant, out } => {
            let x = Extraction { camera: camera(c, &cfg)?, refinement: cfg.refinement.clone(), features: cfg.features.clone() };
            let inputs = match (manifest, input, keypoints) {
                (Some(m), _, _) => manifest_inputs(m)?,
                (None, Some(i), Some(k)) => dir_inputs(i, k)?,
                _ => return Err(Error::config("missing required flag --manifest (or --in with --keypoints)")),
            };
            features(&inputs, &x, &variant.variants(), out, &exec)
        }
        Command::Train { features, grid, variant, seed, out } => {
            let grid = cfg.forest.resolve(*grid)?;
            train(features, &grid, variant.map(|v| v.variants()), seed.unwrap_or(cfg.evaluation.seed), cfg.evaluation.validation_fraction, out, &exec)
        }
        Command::Predict { model, features, out } => predict(model, features, out),
        Command::Eval { camera: c, manifest, repeats, seed, variant, grid, out } => {
            let x = Extraction { camera: camera(c, &cfg)?, refinement: cfg.refinement.clone(), features: cfg.features.clone() };
            let grid = cfg.forest.resolve(*grid)?;
            let repeats = repeats.unwrap_or(cfg.evaluation.repeats);
            if repeats == 0 {
                return Err(Error::config("--repeats must be at least 1"));
            }
            let inputs = manifest_inputs(manifest)?;
            let seed = seed.unwrap_or(cfg.evaluation.seed);
            eval(&inputs, &x, &variant.variants(), &grid, repeats, seed, cfg.evaluation.ratios, out, &exec)
        }
        Command::Synth { count, seed, out, images_per_cow, noise, no_oracle } => {
            let opts = SynthOptions {
                count: *count,
                seed: *seed,
                images_per_cow: *images_per_cow,
                noise_sigma_mm: *noise,
                oracle: !no_oracle,
                ..Default::default()
            };
            let s = synth::write_dataset(out, &opts, &exec)?;
            log::info!("wrote {} images, manifest {}", s.images, s.manifest.display());
            Ok(Batch { total: s.images, failures: Vec::new() })
        }
        Command::Stats { manifest: m, out } => {
            let rows = read_manifest(m)?;
            let text = stats::render(&stats::bcs_histograms(&rows));
            match out {
                Some(p) => error::write(p, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(Batch { total: rows.len(), failures: Vec::new() })
        }
    }
}

fn convert<E: Executor>(cam: &CameraConfig, input: &Path, out: &Path, pad: Option<(usize, usize)>, fill: u8, exec: &E) -> Result<Batch> {
    let files = list_csv(input)?;
    error::create_dir(out)?;
    let encoded = exec.map(files.iter().collect(), |f| -> Result<Vec<u8>> {
        let r = dataset::load_raster(f)?;
        let h = raster_to_heightmap(&r, cam).map_err(Error::config)?;
        Ok(match pad {
            Some((w, ht)) => {
                let (p, off) = pad_center(&h, w, ht, fill).map_err(|e| Error::data(f, e))?;
                io::encode_pgm(&p, Some(off))
            }
            None => io::encode_pgm(&h, None),
        })
    });
    let mut batch = Batch { total: files.len(), ..Default::default() };
    for (f, res) in files.iter().zip(encoded) {
        match res.and_then(|b| error::write(&out.join(format!("{}.pgm", stem(f))), &b)) {
            Ok(()) => log::debug!("converted {}", f.display()),
            Err(e) => batch.record(e),
        }
    }
    log::info!("converted {} of {} rasters", files.len() - batch.failures.len(), files.len());
    Ok(batch)
}

fn cloud<E: Executor>(cam: &CameraConfig, cc: &crate::config::CloudConfig, input: &Path, out: &Path, seed: u64, exec: &E) -> Result<Batch> {
    let files = list_csv(input)?;
    error::create_dir(out)?;
    let encoded = exec.map(files.iter().collect(), |f| -> Result<Vec<u8>> {
        let item = derive_seed(seed, fnv1a(&stem(f)));
        let fail = |e: bovigeom_core::pointcloud::CloudError| Error::data(f, e);
        let r = dataset::load_raster(f)?;
        let mut c = backproject(&r, cam).map_err(fail)?;
        if let Some(v) = cc.voxel_mm {
            c = voxel_downsample(&c, &VoxelGridSpec::new(v)).map_err(fail)?;
        }
        if cc.normalize {
            c = normalize_unit_sphere(&c).map_err(fail)?;
        }
        if let Some(n) = cc.points {
            c = subsample(&c, n, derive_seed(item, 0)).map_err(fail)?;
        }
        if let Some(a) = &cc.augment {
            c = augment(&c, a, derive_seed(item, 1)).map_err(fail)?;
        }
        Ok(io::encode_ply(&c))
    });
    let mut batch = Batch { total: files.len(), ..Default::default() };
    for (f, res) in files.iter().zip(encoded) {
        if let Err(e) = res.and_then(|b| error::write(&out.join(format!("{}.ply", stem(f))), &b)) {
            batch.record(e);
        }
    }
    log::info!("wrote {} of {} clouds", files.len() - batch.failures.len(), files.len());
    Ok(batch)
}

fn read_manifest(path: &Path) -> Result<Vec<manifest::ManifestRow>> {
    let bytes = error::read(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    manifest::read_manifest(bytes.as_slice(), base).map_err(|e| Error::data(path, e))
}

fn manifest_inputs(path: &Path) -> Result<Vec<ImageInput>> {
    Ok(read_manifest(path)?.iter().map(ImageInput::from).collect())
}

fn dir_inputs(depth: &Path, keypoints: &Path) -> Result<Vec<ImageInput>> {
    Ok(list_csv(depth)?
        .into_iter()
        .map(|f| {
            let s = stem(&f);
            ImageInput { cow_id: s.clone(), image_id: s.clone(), label: None, keypoints: keypoints.join(format!("{s}.json")), depth: f, mask: None }
        })
        .collect())
}

fn features<E: Executor>(inputs: &[ImageInput], x: &Extraction, variants: &[Variant], out: &Path, exec: &E) -> Result<Batch> {
    let results = dataset::extract_all(inputs, x, variants, exec);
    let mut batch = Batch { total: inputs.len(), ..Default::default() };
    let mut rows = Vec::new();
    for (inp, res) in inputs.iter().zip(results) {
        match res {
            Ok(vs) => rows.extend(vs.into_iter().map(|fv| table::FeatureRow {
                cow_id: inp.cow_id.clone(),
                image_id: inp.image_id.clone(),
                features: fv,
                label: inp.label,
            })),
            Err(e) => batch.record(e),
        }
    }
    error::write(out, &table::encode_features(&rows))?;
    log::info!("extracted features for {} of {} images", inputs.len() - batch.failures.len(), inputs.len());
    Ok(batch)
}

fn read_feature_rows(path: &Path) -> Result<Vec<table::FeatureRow>> {
    table::read_features(error::read(path)?.as_slice()).map_err(|e| Error::data(path, e))
}

fn train<E: Executor>(
    path: &Path,
    grid: &bovigeom_core::ForestGrid,
    variants: Option<Vec<Variant>>,
    seed: u64,
    validation_fraction: f64,
    out: &Path,
    exec: &E,
) -> Result<Batch> {
    let mut rows = read_feature_rows(path)?;
    if let Some(vs) = &variants {
        if vs.len() != 1 {
            return Err(Error::config("train needs a single --variant"));
        }
        rows.retain(|r| r.features.variant == vs[0]);
    }
    let mut kinds: Vec<Variant> = rows.iter().map(|r| r.features.variant).collect();
    kinds.sort();
    kinds.dedup();
    if kinds.len() > 1 {
        return Err(Error::config("feature CSV mixes variants; pass --variant"));
    }
    if let Some(r) = rows.iter().find(|r| r.label.is_none()) {
        return Err(Error::data(path, format!("image {}/{} has no label", r.cow_id, r.image_id)));
    }
    let mut cows: std::collections::BTreeMap<&str, CowRecord> = std::collections::BTreeMap::new();
    for r in &rows {
        let label = r.label.expect("checked");
        let e = cows.entry(&r.cow_id).or_insert_with(|| CowRecord { cow_id: r.cow_id.clone(), image_ids: Vec::new(), true_bcs: label });
        if e.true_bcs != label {
            return Err(Error::data(path, format!("cow {} has images with different labels", r.cow_id)));
        }
        e.image_ids.push(r.image_id.clone());
    }
    let records: Vec<CowRecord> = cows.into_values().collect();
    let plan = cow_level_split(&records, [1.0 - validation_fraction, validation_fraction, 0.0], seed).map_err(|e| Error::data(path, e))?;
    let (mut tr, mut va) = (Dataset::default(), Dataset::default());
    let ids: std::collections::BTreeMap<&str, u64> = records.iter().enumerate().map(|(i, r)| (r.cow_id.as_str(), i as u64)).collect();
    for r in &rows {
        let d = match plan.partition_of(&r.cow_id) {
            Some(Partition::Val) => &mut va,
            _ => &mut tr,
        };
        d.push(r.features.values, r.label.expect("checked"), ids[r.cow_id.as_str()]);
    }
    log::info!("training on {} images, validating on {} ({} configurations)", tr.len(), va.len(), grid.len());
    let outcome = grid_search(&tr, &va, grid, seed, exec).map_err(|e| Error::data(path, e))?;
    let best = outcome.table.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    log::info!("best validation accuracy {best:.4} with {:?}", outcome.best);
    error::write(out, &io::encode_model(&outcome.model))?;
    Ok(Batch { total: 1, failures: Vec::new() })
}

fn predict(model: &Path, features: &Path, out: &Path) -> Result<Batch> {
    let m = io::decode_model(&error::read(model)?).map_err(|e| Error::data(model, e))?;
    m.check_schema(&FEATURE_NAMES).map_err(|e| Error::data(model, e))?;
    let rows = read_feature_rows(features)?;
    let mut preds = Vec::with_capacity(rows.len());
    for r in &rows {
        let (predicted, proba) = m.predict_vector(&r.features).map_err(|e| Error::data(features, e))?;
        preds.push(table::PredictionRow {
            cow_id: r.cow_id.clone(),
            image_id: r.image_id.clone(),
            variant: r.features.variant,
            predicted,
            label: r.label,
            proba,
        });
    }
    let mut buf = Vec::new();
    table::write_predictions(&mut buf, &preds).map_err(|e| Error::data(out, e))?;
    error::write(out, &buf)?;
    Ok(Batch { total: rows.len(), failures: Vec::new() })
}

#[allow(clippy::too_many_arguments)]
fn eval<E: Executor>(
    inputs: &[ImageInput],
    x: &Extraction,
    variants: &[Variant],
    grid: &bovigeom_core::ForestGrid,
    repeats: usize,
    seed: u64,
    ratios: [f64; 3],
    out: &Path,
    exec: &E,
) -> Result<Batch> {
    let results = dataset::extract_all(inputs, x, variants, exec);
    let mut batch = Batch { total: inputs.len(), ..Default::default() };
    let mut samples = Vec::new();
    for (inp, res) in inputs.iter().zip(results) {
        match res {
            Ok(vectors) => samples.push(ImageSample {
                cow_id: inp.cow_id.clone(),
                image_id: inp.image_id.clone(),
                label: inp.label.expect("manifest rows are labeled"),
                vectors,
            }),
            Err(e) => batch.record(e),
        }
    }
    let pipelines: Vec<ForestPipeline<'_, E>> = variants
        .iter()
        .map(|&v| ForestPipeline { name: format!("rf_{}", v.as_str()), variant: v, grid: grid.clone(), exec })
        .collect();
    let dyn_pipelines: Vec<&dyn Pipeline<ImageSample>> = pipelines.iter().map(|p| p as &dyn Pipeline<ImageSample>).collect();
    log::info!("evaluating {} images over {repeats} repeats", samples.len());
    let report = run_cv(&samples, &dyn_pipelines, repeats, seed, ratios, exec).map_err(|e| Error::data(out, e))?;
    for f in &report.failures {
        log::warn!("repeat {} failed: {}", f.repeat, f.message);
    }
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    error::write(out, &json)?;
    let table = report.to_table();
    error::write(&out.with_extension("txt"), table.as_bytes())?;
    print!("{table}");
    Ok(batch)
}
