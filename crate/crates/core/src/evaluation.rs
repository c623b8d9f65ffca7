//! Cow-level evaluation: stratified splits, majority voting, tolerance
//! accuracy, keypoint metrics, Welch t-tests and the repeated CV driver.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Executor;
use crate::features::{FeatureVector, Variant};
use crate::forest::{grid_search, BcsLabel, Dataset, ForestGrid, N_CLASSES};
use crate::landmarks::{LandmarkName, LandmarkSet};
use crate::math;
use crate::rng;

/// Accuracy tolerances in BCS units.
pub const TOLERANCES: [f64; 3] = [0.0, 0.25, 0.5];
pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least 3 cows to split, got {0}")]
    TooFewCows(usize),
    #[error("split ratios must be non-negative and sum to 1")]
    Ratios,
    #[error("cow {0} listed more than once")]
    DuplicateCow(String),
    #[error("cow {0} has images with different labels")]
    InconsistentLabel(String),
    #[error("cow {0} has no images")]
    NoImages(String),
    #[error("leakage: cow {0} appears in more than one partition")]
    Leakage(String),
    #[error("split plan does not cover cow {0}")]
    Unassigned(String),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("landmark sets differ at image {image}: {name}")]
    LandmarkMismatch { image: usize, name: LandmarkName },
    #[error("need at least 2 values per group")]
    TooFewValues,
    #[error("both groups have zero variance with different means")]
    DegenerateVariance,
    #[error("no repeat completed")]
    NoRepeats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CowRecord {
    pub cow_id: String,
    pub image_ids: Vec<String>,
    pub true_bcs: BcsLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub repeat_index: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, Partition>,
}

impl SplitPlan {
    pub fn partition_of(&self, cow_id: &str) -> Option<Partition> {
        self.assignment.get(cow_id).copied()
    }

    pub fn cows(&self, p: Partition) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &q)| q == p).map(|(c, _)| c.as_str()).collect()
    }

    /// Checks that every record's cow is assigned and that the three
    /// partitions are pairwise disjoint.
    pub fn audit(&self, records: &[CowRecord]) -> Result<(), EvalError> {
        let mut sets: [BTreeSet<&str>; 3] = Default::default();
        for (cow, p) in &self.assignment {
            sets[p.index()].insert(cow.as_str());
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if let Some(c) = sets[i].intersection(&sets[j]).next() {
                    return Err(EvalError::Leakage(c.to_string()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for r in records {
            if !seen.insert(r.cow_id.as_str()) {
                return Err(EvalError::DuplicateCow(r.cow_id.clone()));
            }
            if !sets.iter().any(|s| s.contains(r.cow_id.as_str())) {
                return Err(EvalError::Unassigned(r.cow_id.clone()));
            }
        }
        Ok(())
    }
}

/// Stratified cow-level split. Within each BCS class (in label order) cows are
/// sorted by id and shuffled. Each partition takes `floor(ratio * n)` of them;
/// the leftovers go, at most one per partition, to the partitions furthest
/// behind their running overall target (ties: larger fractional remainder,
/// then earlier partition). Cows are dealt out in shuffled order.
pub fn cow_level_split(records: &[CowRecord], ratios: [f64; 3], seed: u64) -> Result<SplitPlan, EvalError> {
    if records.len() < 3 {
        return Err(EvalError::TooFewCows(records.len()));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(EvalError::Ratios);
    }
    let mut by_class: BTreeMap<BcsLabel, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.cow_id.as_str()) {
            return Err(EvalError::DuplicateCow(r.cow_id.clone()));
        }
        by_class.entry(r.true_bcs).or_default().push(&r.cow_id);
    }
    let mut global = [0usize; 3];
    let mut seen_total = 0usize;
    let mut rng = rng::seeded(seed);
    let mut assignment = BTreeMap::new();
    for cows in by_class.values_mut() {
        cows.sort_unstable();
        rng::shuffle(&mut rng, cows);
        let n = cows.len();
        seen_total += n;
        let mut quota = [0usize; 3];
        for p in 0..3 {
            quota[p] = libm::floor(ratios[p] * n as f64 + EPS) as usize;
        }
        // Leftover cows go to the partitions furthest behind their running target.
        let mut extra = n - quota.iter().sum::<usize>();
        let mut bumped = [false; 3];
        while extra > 0 {
            let deficit = |p: usize| ratios[p] * seen_total as f64 - (global[p] + quota[p]) as f64;
            let frac = |p: usize| ratios[p] * n as f64 - quota[p] as f64;
            let mut best: Option<usize> = None;
            for p in 0..3 {
                if bumped[p] || ratios[p] == 0.0 {
                    continue;
                }
                best = match best {
                    None => Some(p),
                    Some(q) => {
                        let (dp, dq) = (deficit(p), deficit(q));
                        if dp > dq + EPS || ((dp - dq).abs() <= EPS && frac(p) > frac(q) + EPS) {
                            Some(p)
                        } else {
                            Some(q)
                        }
                    }
                };
            }
            let p = best.expect("fewer leftovers than partitions");
            quota[p] += 1;
            bumped[p] = true;
            extra -= 1;
        }
        let mut it = cows.iter();
        for p in 0..3 {
            for cow in it.by_ref().take(quota[p]) {
                assignment.insert(cow.to_string(), Partition::ALL[p]);
            }
            global[p] += quota[p];
        }
    }
    Ok(SplitPlan { repeat_index: 0, seed, assignment })
}

/// Most frequent label; ties go to the lowest BCS.
pub fn majority_vote(preds: &[BcsLabel]) -> Result<BcsLabel, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = [0usize; N_CLASSES];
    for p in preds {
        counts[p.index()] += 1;
    }
    let mut best = 0;
    for k in 1..N_CLASSES {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    Ok(BcsLabel::from_index(best).unwrap())
}

/// Fraction of predictions within `tol` BCS units of the truth.
pub fn tolerance_accuracy(pred: &[BcsLabel], truth: &[BcsLabel], tol: f64) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| (p.value() - t.value()).abs() <= tol + EPS).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Per-keypoint pixel errors, checking that each image pair carries the same
/// landmarks.
fn keypoint_errors(pred: &[LandmarkSet], truth: &[LandmarkSet]) -> Result<Vec<(LandmarkName, f64)>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut out = Vec::new();
    for (image, (p, t)) in pred.iter().zip(truth).enumerate() {
        for name in LandmarkName::ALL {
            match (p.get(name), t.get(name)) {
                (Some(a), Some(b)) => out.push((name, math::hypot(a.u - b.u, a.v - b.v))),
                (None, None) => {}
                _ => return Err(EvalError::LandmarkMismatch { image, name }),
            }
        }
    }
    if out.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(out)
}

/// Percentage of correct keypoints: fraction with pixel error `<= k`.
pub fn pck(pred: &[LandmarkSet], truth: &[LandmarkSet], k: f64) -> Result<f64, EvalError> {
    let errs = keypoint_errors(pred, truth)?;
    Ok(errs.iter().filter(|(_, e)| *e <= k).count() as f64 / errs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointRmse {
    pub overall: f64,
    pub per_landmark: BTreeMap<LandmarkName, f64>,
}

pub fn keypoint_rmse(pred: &[LandmarkSet], truth: &[LandmarkSet]) -> Result<KeypointRmse, EvalError> {
    let errs = keypoint_errors(pred, truth)?;
    let mut acc: BTreeMap<LandmarkName, (f64, usize)> = BTreeMap::new();
    for (name, e) in &errs {
        let a = acc.entry(*name).or_default();
        a.0 += e * e;
        a.1 += 1;
    }
    let total: f64 = errs.iter().map(|(_, e)| e * e).sum();
    Ok(KeypointRmse {
        overall: math::sqrt(total / errs.len() as f64),
        per_landmark: acc.into_iter().map(|(n, (s, c))| (n, math::sqrt(s / c as f64))).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn two_sided_ttest(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::TooFewValues);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Ok(TTest { t: 0.0, df: na + nb - 2.0, p: 1.0 });
        }
        return Err(EvalError::DegenerateVariance);
    }
    let t = (ma - mb) / math::sqrt(se2);
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest { t, df, p: student_t_two_sided(t, df) })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction.
fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::ln_gamma(a + b) - math::ln_gamma(a) - math::ln_gamma(b)
        + a * math::ln(x)
        + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// An image-level sample with its cow and label.
pub trait Sample {
    fn cow_id(&self) -> &str;
    fn true_bcs(&self) -> BcsLabel;
    fn features(&self, _variant: Variant) -> Option<&FeatureVector> {
        None
    }
}

/// A model trained and applied within one split.
pub trait Pipeline<S>: Sync {
    fn name(&self) -> &str;

    /// Returns one prediction per `test` sample.
    fn fit_predict(&self, train: &[&S], val: &[&S], test: &[&S], seed: u64) -> Result<Vec<BcsLabel>, String>;
}

/// Features, grid search on train/val, retraining on train+val, prediction.
pub struct ForestPipeline<'e, E: Executor> {
    pub name: String,
    pub variant: Variant,
    pub grid: ForestGrid,
    pub exec: &'e E,
}

fn to_dataset<S: Sample>(samples: &[&S], variant: Variant) -> Result<Dataset, String> {
    let mut ids: BTreeMap<&str, u64> = BTreeMap::new();
    let mut d = Dataset::default();
    for s in samples {
        let fv = s.features(variant).ok_or_else(|| format!("cow {}: no {variant} features", s.cow_id()))?;
        let next = ids.len() as u64;
        let g = *ids.entry(s.cow_id()).or_insert(next);
        d.push(fv.values, s.true_bcs(), g);
    }
    Ok(d)
}

impl<S: Sample, E: Executor> Pipeline<S> for ForestPipeline<'_, E> {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit_predict(&self, train: &[&S], val: &[&S], test: &[&S], seed: u64) -> Result<Vec<BcsLabel>, String> {
        let tr = to_dataset(train, self.variant)?;
        let va = to_dataset(val, self.variant)?;
        let te = to_dataset(test, self.variant)?;
        let out = grid_search(&tr, &va, &self.grid, seed, self.exec).map_err(|e| e.to_string())?;
        te.x.iter().map(|x| out.model.predict(x).map(|p| p.0).map_err(|e| e.to_string())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub n_test_cows: usize,
    /// Cow-level accuracy at each of [`TOLERANCES`].
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub name: String,
    pub repeats: Vec<RepeatResult>,
    pub mean: Vec<f64>,
    /// Standard error of the mean across repeats (sample SD / sqrt(n)).
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub tolerance: f64,
    pub test: Option<TTest>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub pipeline: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub repeat: usize,
    pub seed: u64,
    pub cows: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub base_seed: u64,
    pub tolerances: Vec<f64>,
    pub splits: Vec<SplitSummary>,
    pub pipelines: Vec<PipelineSummary>,
    pub comparisons: Vec<Comparison>,
    pub failures: Vec<RepeatFailure>,
}

impl EvalReport {
    /// Aligned text table: one row per pipeline, mean and SE per tolerance.
    pub fn to_table(&self) -> String {
        let name_w = self.pipelines.iter().map(|p| p.name.len()).max().unwrap_or(0).max(8);
        let mut s = String::new();
        let _ = write!(s, "{:<name_w$}", "model");
        for t in &self.tolerances {
            let _ = write!(s, " | {:>15}", format!("tol {t:.2}"));
        }
        s.push('\n');
        let _ = write!(s, "{:<name_w$}", "");
        for _ in &self.tolerances {
            let _ = write!(s, " | {:>7} {:>7}", "mean", "SE");
        }
        s.push('\n');
        for p in &self.pipelines {
            let _ = write!(s, "{:<name_w$}", p.name);
            for (m, e) in p.mean.iter().zip(&p.se) {
                let _ = write!(s, " | {m:>7.4} {e:>7.4}");
            }
            s.push('\n');
        }
        for c in &self.comparisons {
            match c.test {
                Some(t) => {
                    let _ = writeln!(s, "{} vs {} @ {:.2}: t = {:.4}, df = {:.2}, p = {:.4e}", c.a, c.b, c.tolerance, t.t, t.df, t.p);
                }
                None => {
                    let _ = writeln!(s, "{} vs {} @ {:.2}: {}", c.a, c.b, c.tolerance, c.note.as_deref().unwrap_or("n/a"));
                }
            }
        }
        for f in &self.failures {
            let who = f.pipeline.as_deref().unwrap_or("split");
            let _ = writeln!(s, "repeat {} failed ({who}): {}", f.repeat, f.message);
        }
        s
    }
}

/// Groups samples into cow records, checking label consistency.
pub fn cow_records<S: Sample>(samples: &[S]) -> Result<Vec<CowRecord>, EvalError> {
    let mut by_cow: BTreeMap<&str, (BcsLabel, usize)> = BTreeMap::new();
    for s in samples {
        let e = by_cow.entry(s.cow_id()).or_insert((s.true_bcs(), 0));
        if e.0 != s.true_bcs() {
            return Err(EvalError::InconsistentLabel(s.cow_id().to_string()));
        }
        e.1 += 1;
    }
    Ok(by_cow
        .into_iter()
        .map(|(cow, (label, n))| CowRecord {
            cow_id: cow.to_string(),
            image_ids: (0..n).map(|i| format!("{cow}#{i}")).collect(),
            true_bcs: label,
        })
        .collect())
}

fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return (lo, 0.0);
    }
    let mean = (values.iter().sum::<f64>() / n).clamp(lo, hi);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var / n))
}

/// Repeated cow-level subsampling CV. Repeat `r` splits with seed
/// `base_seed + r`; every pipeline sees the same split and seed. A failing
/// pipeline is recorded against its repeat and excluded from that repeat's
/// statistics.
pub fn run_cv<S, E>(
    samples: &[S],
    pipelines: &[&dyn Pipeline<S>],
    repeats: usize,
    base_seed: u64,
    ratios: [f64; 3],
    exec: &E,
) -> Result<EvalReport, EvalError>
where
    S: Sample + Sync,
    E: Executor,
{
    let records = cow_records(samples)?;
    let labels: BTreeMap<&str, BcsLabel> = records.iter().map(|r| (r.cow_id.as_str(), r.true_bcs)).collect();

    type RepeatOut = Result<(SplitSummary, Vec<Result<RepeatResult, String>>), String>;
    let outs: Vec<RepeatOut> = exec.map((0..repeats).collect(), |r| {
        let seed = base_seed.wrapping_add(r as u64);
        let mut plan = cow_level_split(&records, ratios, seed).map_err(|e| e.to_string())?;
        plan.repeat_index = r;
        plan.audit(&records).map_err(|e| e.to_string())?;
        let mut parts: [Vec<&S>; 3] = Default::default();
        for s in samples {
            let p = plan.partition_of(s.cow_id()).expect("audited plan covers every cow");
            parts[p.index()].push(s);
        }
        let counts = Partition::ALL.map(|p| plan.cows(p).len());
        let results = pipelines
            .iter()
            .map(|pl| {
                let preds = pl.fit_predict(&parts[0], &parts[1], &parts[2], seed)?;
                if preds.len() != parts[2].len() {
                    return Err(format!("{} predictions for {} test images", preds.len(), parts[2].len()));
                }
                let mut per_cow: BTreeMap<&str, Vec<BcsLabel>> = BTreeMap::new();
                for (s, p) in parts[2].iter().zip(preds) {
                    per_cow.entry(s.cow_id()).or_default().push(p);
                }
                let mut voted = Vec::with_capacity(per_cow.len());
                let mut truth = Vec::with_capacity(per_cow.len());
                for (cow, preds) in &per_cow {
                    voted.push(majority_vote(preds).map_err(|e| e.to_string())?);
                    truth.push(labels[cow]);
                }
                let accuracy = TOLERANCES
                    .iter()
                    .map(|&t| tolerance_accuracy(&voted, &truth, t))
                    .collect::<Result<Vec<f64>, _>>()
                    .map_err(|e| e.to_string())?;
                Ok(RepeatResult { repeat: r, seed, n_test_cows: voted.len(), accuracy })
            })
            .collect();
        Ok((SplitSummary { repeat: r, seed, cows: counts }, results))
    });

    let mut splits = Vec::new();
    let mut failures = Vec::new();
    let mut per_pipeline: Vec<Vec<RepeatResult>> = pipelines.iter().map(|_| Vec::new()).collect();
    for (r, out) in outs.into_iter().enumerate() {
        match out {
            Err(message) => failures.push(RepeatFailure { repeat: r, pipeline: None, message }),
            Ok((split, results)) => {
                splits.push(split);
                for (i, res) in results.into_iter().enumerate() {
                    match res {
                        Ok(rr) => per_pipeline[i].push(rr),
                        Err(message) => failures.push(RepeatFailure {
                            repeat: r,
                            pipeline: Some(pipelines[i].name().to_string()),
                            message,
                        }),
                    }
                }
            }
        }
    }
    if per_pipeline.iter().all(|v| v.is_empty()) {
        return Err(EvalError::NoRepeats);
    }

    let summaries: Vec<PipelineSummary> = pipelines
        .iter()
        .zip(per_pipeline)
        .map(|(pl, reps)| {
            let (mut mean, mut se) = (Vec::new(), Vec::new());
            for k in 0..TOLERANCES.len() {
                let vals: Vec<f64> = reps.iter().map(|r| r.accuracy[k]).collect();
                let (m, e) = if vals.is_empty() { (f64::NAN, f64::NAN) } else { summarize(&vals) };
                mean.push(m);
                se.push(e);
            }
            PipelineSummary { name: pl.name().to_string(), repeats: reps, mean, se }
        })
        .collect();

    let mut comparisons = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            for (k, &tol) in TOLERANCES.iter().enumerate() {
                let a: Vec<f64> = summaries[i].repeats.iter().map(|r| r.accuracy[k]).collect();
                let b: Vec<f64> = summaries[j].repeats.iter().map(|r| r.accuracy[k]).collect();
                let (test, note) = match two_sided_ttest(&a, &b) {
                    Ok(t) => (Some(t), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                comparisons.push(Comparison {
                    a: summaries[i].name.clone(),
                    b: summaries[j].name.clone(),
                    tolerance: tol,
                    test,
                    note,
                });
            }
        }
    }

    Ok(EvalReport {
        base_seed,
        tolerances: TOLERANCES.to_vec(),
        splits,
        pipelines: summaries,
        comparisons,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use crate::landmarks::Landmark;
    use alloc::vec;
    use proptest::prelude::*;

    fn l(v: f64) -> BcsLabel {
        BcsLabel::from_value(v).unwrap()
    }

    fn cows(n: usize, classes: usize) -> Vec<CowRecord> {
        (0..n)
            .map(|i| CowRecord {
                cow_id: format!("cow{i:04}"),
                image_ids: vec![format!("img{i}")],
                true_bcs: BcsLabel::from_index(i % classes).unwrap(),
            })
            .collect()
    }

    #[test]
    fn ten_cow_split() {
        let plan = cow_level_split(&cows(10, 1), DEFAULT_RATIOS, 1).unwrap();
        let n = Partition::ALL.map(|p| plan.cows(p).len());
        assert_eq!(n, [7, 2, 1]);
        plan.audit(&cows(10, 1)).unwrap();
        assert_eq!(cow_level_split(&cows(2, 1), DEFAULT_RATIOS, 1), Err(EvalError::TooFewCows(2)));
        assert_eq!(cow_level_split(&cows(5, 1), [0.5, 0.5, 0.5], 1), Err(EvalError::Ratios));
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        let r = cows(60, 3);
        assert_eq!(cow_level_split(&r, DEFAULT_RATIOS, 5), cow_level_split(&r, DEFAULT_RATIOS, 5));
        assert_ne!(cow_level_split(&r, DEFAULT_RATIOS, 5).unwrap().assignment, cow_level_split(&r, DEFAULT_RATIOS, 6).unwrap().assignment);
    }

    #[test]
    fn thousand_cows_per_class_within_one() {
        let r = cows(1000, 10);
        let plan = cow_level_split(&r, DEFAULT_RATIOS, 42).unwrap();
        plan.audit(&r).unwrap();
        for class in 0..10 {
            let members: Vec<&CowRecord> = r.iter().filter(|c| c.true_bcs.index() == class).collect();
            for (k, p) in Partition::ALL.iter().enumerate() {
                let got = members.iter().filter(|c| plan.partition_of(&c.cow_id) == Some(*p)).count() as f64;
                assert!((got - DEFAULT_RATIOS[k] * members.len() as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn audit_catches_problems() {
        let r = cows(5, 1);
        let mut plan = cow_level_split(&r, DEFAULT_RATIOS, 0).unwrap();
        plan.assignment.remove("cow0002");
        assert_eq!(plan.audit(&r), Err(EvalError::Unassigned("cow0002".into())));
        let mut dup = r.clone();
        dup.push(r[0].clone());
        assert!(matches!(cow_level_split(&dup, DEFAULT_RATIOS, 0), Err(EvalError::DuplicateCow(_))));
    }

    #[test]
    fn voting() {
        assert_eq!(majority_vote(&[l(3.0), l(3.0), l(3.25)]), Ok(l(3.0)));
        assert_eq!(majority_vote(&[l(3.25), l(3.0)]), Ok(l(3.0)));
        assert_eq!(majority_vote(&[l(4.25)]), Ok(l(4.25)));
        assert_eq!(majority_vote(&[]), Err(EvalError::Empty));
    }

    #[test]
    fn tolerance_examples() {
        let truth = [l(3.0), l(3.5), l(2.5), l(4.0)];
        for t in TOLERANCES {
            assert_eq!(tolerance_accuracy(&truth, &truth, t), Ok(1.0));
        }
        let off = [l(3.25), l(3.25), l(2.75), l(4.25)];
        assert_eq!(tolerance_accuracy(&off, &truth, 0.0), Ok(0.0));
        assert_eq!(tolerance_accuracy(&off, &truth, 0.25), Ok(1.0));
        assert_eq!(tolerance_accuracy(&off, &truth, 0.5), Ok(1.0));
        let half = [l(3.0), l(3.5), l(3.0), l(3.5)];
        assert_eq!(tolerance_accuracy(&half, &truth, 0.0), Ok(0.5));
        assert_eq!(tolerance_accuracy(&half, &truth, 0.25), Ok(0.5));
        assert_eq!(tolerance_accuracy(&half, &truth, 0.5), Ok(1.0));
        assert_eq!(tolerance_accuracy(&half[..1], &truth, 0.5), Err(EvalError::LengthMismatch(1, 4)));
    }

    fn six(offset_first: (f64, f64), offset_all: (f64, f64)) -> LandmarkSet {
        LandmarkSet::from_landmarks(LandmarkName::DETECTED.iter().enumerate().map(|(i, &n)| {
            let (du, dv) = if i == 0 { offset_first } else { (0.0, 0.0) };
            Landmark::new(n, 10.0 * i as f64 + du + offset_all.0, 20.0 + dv + offset_all.1)
        }))
        .unwrap()
    }

    #[test]
    fn keypoint_metrics() {
        let truth = [six((0.0, 0.0), (0.0, 0.0))];
        assert_eq!(pck(&truth, &truth, 0.1), Ok(1.0));
        let one_off = [six((3.0, 4.0), (0.0, 0.0))];
        assert_eq!(pck(&one_off, &truth, 5.0), Ok(1.0));
        assert_eq!(pck(&one_off, &truth, 4.9), Ok(5.0 / 6.0));
        let all_off = [six((0.0, 0.0), (6.0, 0.0))];
        assert_eq!(pck(&all_off, &truth, 5.0), Ok(0.0));

        assert_eq!(keypoint_rmse(&truth, &truth).unwrap().overall, 0.0);
        let single = LandmarkSet::from_landmarks([Landmark::new(LandmarkName::LeftHook, 0.0, 0.0)]).unwrap();
        let moved = LandmarkSet::from_landmarks([Landmark::new(LandmarkName::LeftHook, 3.0, 4.0)]).unwrap();
        assert_eq!(keypoint_rmse(&[moved.clone()], &[single.clone()]).unwrap().overall, 5.0);
        let r = keypoint_rmse(&[single.clone(), moved], &[single.clone(), single.clone()]).unwrap();
        assert!((r.per_landmark[&LandmarkName::LeftHook] - libm::sqrt(12.5)).abs() < 1e-15);
        assert!(matches!(pck(&[single], &truth, 1.0), Err(EvalError::LandmarkMismatch { .. })));
    }

    #[test]
    fn ttest_examples() {
        let a = [0.5, 0.5, 0.6];
        assert_eq!(two_sided_ttest(&a, &a).map(|t| (t.t, t.p)), Ok((0.0, 1.0)));
        assert_eq!(two_sided_ttest(&[0.0; 5], &[1.0; 5]), Err(EvalError::DegenerateVariance));
        assert_eq!(two_sided_ttest(&[0.0], &[1.0, 2.0]), Err(EvalError::TooFewValues));
        assert_eq!(two_sided_ttest(&[0.7; 5], &[0.7; 5]).map(|t| t.p), Ok(1.0));
    }

    /// Two-sided tail of Student's t by composite Simpson integration of the
    /// density over [0, |t|].
    fn t_tail_by_quadrature(t: f64, df: f64) -> f64 {
        let c = libm::exp(libm::lgamma(0.5 * (df + 1.0)) - libm::lgamma(0.5 * df)) / libm::sqrt(df * core::f64::consts::PI);
        let f = |s: f64| c * libm::pow(1.0 + s * s / df, -0.5 * (df + 1.0));
        let n = 200_000;
        let h = t.abs() / n as f64;
        let mut s = f(0.0) + f(t.abs());
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn ttest_matches_quadrature() {
        let a = [0.40, 0.42, 0.44, 0.41, 0.43];
        let b = [0.30, 0.32, 0.31, 0.29, 0.33];
        let r = two_sided_ttest(&a, &b).unwrap();
        assert!((r.t - 11.0).abs() < 1e-9);
        assert!((r.df - 8.0).abs() < 1e-9);
        assert!(r.p < 0.001);
        assert!((r.p - t_tail_by_quadrature(r.t, r.df)).abs() < 1e-6);
        for (t, df) in [(0.5, 3.0), (2.1, 7.3), (1.0, 1.0), (3.7, 15.5)] {
            assert!((student_t_two_sided(t, df) - t_tail_by_quadrature(t, df)).abs() < 1e-9, "{t} {df}");
        }
    }

    struct Img {
        cow: String,
        label: BcsLabel,
    }

    impl Sample for Img {
        fn cow_id(&self) -> &str {
            &self.cow
        }
        fn true_bcs(&self) -> BcsLabel {
            self.label
        }
    }

    struct Oracle;
    impl Pipeline<Img> for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }
        fn fit_predict(&self, _: &[&Img], _: &[&Img], test: &[&Img], _: u64) -> Result<Vec<BcsLabel>, String> {
            Ok(test.iter().map(|s| s.label).collect())
        }
    }

    struct Constant;
    impl Pipeline<Img> for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn fit_predict(&self, _: &[&Img], _: &[&Img], test: &[&Img], _: u64) -> Result<Vec<BcsLabel>, String> {
            Ok(vec![l(3.0); test.len()])
        }
    }

    struct Flaky;
    impl Pipeline<Img> for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn fit_predict(&self, _: &[&Img], _: &[&Img], test: &[&Img], seed: u64) -> Result<Vec<BcsLabel>, String> {
            if seed == 101 { Err("boom".into()) } else { Ok(vec![l(2.0); test.len()]) }
        }
    }

    fn images(n_cows: usize) -> Vec<Img> {
        (0..n_cows)
            .flat_map(|i| {
                let label = BcsLabel::from_index(2 + i % 5).unwrap();
                (0..2).map(move |_| Img { cow: format!("c{i:03}"), label })
            })
            .collect()
    }

    #[test]
    fn cv_oracle_constant_and_failures() {
        let data = images(100);
        let pls: [&dyn Pipeline<Img>; 3] = [&Oracle, &Constant, &Flaky];
        let rep = run_cv(&data, &pls, 5, 100, DEFAULT_RATIOS, &Serial).unwrap();
        assert_eq!(rep.pipelines[0].mean, vec![1.0; 3]);
        assert_eq!(rep.pipelines[0].se, vec![0.0; 3]);
        for rr in &rep.pipelines[1].repeats {
            // Expected mass from the labels of this repeat's test cows.
            let plan = cow_level_split(&cow_records(&data).unwrap(), DEFAULT_RATIOS, rr.seed).unwrap();
            let test: Vec<BcsLabel> = cow_records(&data)
                .unwrap()
                .into_iter()
                .filter(|c| plan.partition_of(&c.cow_id) == Some(Partition::Test))
                .map(|c| c.true_bcs)
                .collect();
            for (k, tol) in TOLERANCES.iter().enumerate() {
                let mass = test.iter().filter(|t| (t.value() - 3.0).abs() <= tol + 1e-9).count() as f64 / test.len() as f64;
                assert_eq!(rr.accuracy[k], mass);
            }
            assert!(rr.accuracy.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(rep.pipelines[2].repeats.len(), 4);
        assert_eq!(rep.failures.len(), 1);
        assert_eq!((rep.failures[0].repeat, rep.failures[0].message.as_str()), (1, "boom"));
        assert_eq!(rep.comparisons.len(), 9);
        assert!(rep.to_table().contains("oracle"));
    }

    #[test]
    fn inconsistent_labels_rejected() {
        let data = vec![Img { cow: "a".into(), label: l(3.0) }, Img { cow: "a".into(), label: l(3.25) }];
        assert!(matches!(cow_records(&data), Err(EvalError::InconsistentLabel(_))));
    }

    proptest! {
        #[test]
        fn split_exclusive_and_balanced(n in 3usize..300, classes in 1usize..10, seed in any::<u64>()) {
            let r = cows(n, classes);
            let plan = cow_level_split(&r, DEFAULT_RATIOS, seed).unwrap();
            prop_assert!(plan.audit(&r).is_ok());
            prop_assert_eq!(plan.assignment.len(), n);
            for (k, p) in Partition::ALL.iter().enumerate() {
                let got = plan.cows(*p).len() as f64;
                prop_assert!((got - DEFAULT_RATIOS[k] * n as f64).abs() <= 2.0 + 1e-9);
            }
        }

        #[test]
        fn vote_permutation_invariant(v in proptest::collection::vec(0usize..10, 1..30), seed in any::<u64>()) {
            let labels: Vec<BcsLabel> = v.iter().map(|&i| BcsLabel::from_index(i).unwrap()).collect();
            let mut shuffled = labels.clone();
            rng::shuffle(&mut rng::seeded(seed), &mut shuffled);
            prop_assert_eq!(majority_vote(&labels), majority_vote(&shuffled));
        }

        #[test]
        fn tolerance_monotone(p in proptest::collection::vec(0usize..10, 1..40), seed in any::<u64>()) {
            let pred: Vec<BcsLabel> = p.iter().map(|&i| BcsLabel::from_index(i).unwrap()).collect();
            let mut truth = pred.clone();
            rng::shuffle(&mut rng::seeded(seed), &mut truth);
            let acc: Vec<f64> = TOLERANCES.iter().map(|&t| tolerance_accuracy(&pred, &truth, t).unwrap()).collect();
            prop_assert!(acc.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn pck_monotone(du in proptest::collection::vec(-20.0f64..20.0, 6), k1 in 0.0f64..30.0, k2 in 0.0f64..30.0) {
            let truth = six((0.0, 0.0), (0.0, 0.0));
            let pred = LandmarkSet::from_landmarks(truth.iter().zip(&du).map(|(lm, d)| Landmark::new(lm.name, lm.u + d, lm.v - d))).unwrap();
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            prop_assert!(pck(&[pred.clone()], &[truth.clone()], lo).unwrap() <= pck(&[pred.clone()], &[truth.clone()], hi).unwrap());
            prop_assert_eq!(pck(&[pred], &[truth], f64::INFINITY).unwrap(), 1.0);
        }

        #[test]
        fn summary_bounds(v in proptest::collection::vec(0.0f64..1.0, 2..10)) {
            let (m, se) = summarize(&v);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= m && m <= hi);
            prop_assert_eq!(se == 0.0, lo == hi);
        }
    }
}
