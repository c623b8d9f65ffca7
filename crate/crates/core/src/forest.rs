//! Random forest classifier over the 24 geometric features.
//!
//! CART trees with Gini impurity, bootstrap resampling (row multiplicities act
//! as sample weights), per-node feature subsampling and impurity-decrease
//! importances.
//!
//! Each node draws its candidate features from an RNG seeded by its path from
//! the root, so a tree grown with looser stopping rules (`max_depth`,
//! `min_samples_split`) contains the tighter tree as a prefix. Grid search uses
//! this to evaluate every depth/split setting, and every `n_estimators` prefix,
//! from a single grown forest per remaining configuration.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::majority_vote;
use crate::exec::{Executor, Serial};
use crate::features::{FeatureVector, FEATURE_NAMES, N_FEATURES};
use crate::math;
use crate::rng;

pub const N_CLASSES: usize = 10;
pub const MODEL_VERSION: u32 = 1;

/// Body condition score on the 2.00..=4.25 range in 0.25 steps.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BcsLabel(u8);

impl BcsLabel {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < N_CLASSES).then_some(Self(index as u8))
    }

    /// Accepts values within 1e-6 of a grid point.
    pub fn from_value(value: f64) -> Option<Self> {
        let i = math::round_half_up((value - 2.0) / 0.25);
        if !(0.0..N_CLASSES as f64).contains(&i) {
            return None;
        }
        let l = Self(i as u8);
        ((l.value() - value).abs() <= 1e-6).then_some(l)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn value(self) -> f64 {
        2.0 + 0.25 * self.0 as f64
    }

    pub fn all() -> impl Iterator<Item = BcsLabel> {
        (0..N_CLASSES as u8).map(BcsLabel)
    }
}

impl fmt::Debug for BcsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BcsLabel({:.2})", self.value())
    }
}

impl fmt::Display for BcsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.value())
    }
}

impl TryFrom<f64> for BcsLabel {
    type Error = String;
    fn try_from(v: f64) -> Result<Self, String> {
        BcsLabel::from_value(v).ok_or_else(|| alloc::format!("{v} is not a BCS value in 2.00..=4.25 step 0.25"))
    }
}

impl From<BcsLabel> for f64 {
    fn from(l: BcsLabel) -> f64 {
        l.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => math::sqrt(n),
            MaxFeatures::Log2 => math::log2(n),
            MaxFeatures::Fraction(f) => f * n,
        };
        (k as usize).clamp(1, n_features)
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::Log2 => f.write_str("log2"),
            MaxFeatures::Fraction(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// `n / (n_classes_present * n_c)`, which has mean 1 over the samples.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestHyperparams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub class_weight: ClassWeight,
    #[serde(default = "yes")]
    pub bootstrap: bool,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            class_weight: ClassWeight::None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m| Err(ForestError::Hyperparams(m));
        if self.n_estimators == 0 {
            return bad("n_estimators must be >= 1");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be >= 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be >= 2");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return bad("max_features fraction must be in (0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{0} rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(&'static str),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("feature schema mismatch: expected {expected} features, found {found}")]
    Schema { expected: usize, found: usize },
    #[error("unsupported model version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Distinct training rows reaching the node.
    pub n_samples: u32,
    /// Weighted class distribution of the node's training rows.
    pub value: [f64; N_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Stopping rules applied at prediction time to a tree grown with looser ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Caps {
    max_depth: Option<usize>,
    min_split: usize,
}

impl Tree {
    #[inline]
    fn leaf_capped(&self, x: &[f64], caps: Caps) -> &[f64; N_CLASSES] {
        let (mut i, mut depth) = (0usize, 0usize);
        loop {
            let n = &self.nodes[i];
            match n.split {
                Some(s)
                    if caps.max_depth.is_none_or(|d| depth < d) && n.n_samples as usize >= caps.min_split =>
                {
                    i = if x[s.feature as usize] <= s.threshold { s.left } else { s.right } as usize;
                    depth += 1;
                }
                _ => return &n.value,
            }
        }
    }

    pub fn leaf_value(&self, x: &[f64]) -> &[f64; N_CLASSES] {
        self.leaf_capped(x, Caps { max_depth: None, min_split: 0 })
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            t.nodes[i].split.map_or(0, |s| 1 + go(t, s.left as usize).max(go(t, s.right as usize)))
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub hyperparams: ForestHyperparams,
    pub importances: Vec<f64>,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub oob_accuracy: Option<f64>,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn check_schema(&self, names: &[&str]) -> Result<(), ForestError> {
        if names.len() != self.feature_names.len() || names.iter().zip(&self.feature_names).any(|(a, b)| a != b) {
            return Err(ForestError::Schema { expected: self.feature_names.len(), found: names.len() });
        }
        Ok(())
    }

    pub fn check_version(&self) -> Result<(), ForestError> {
        if self.version != MODEL_VERSION {
            return Err(ForestError::Version(self.version));
        }
        Ok(())
    }

    /// Label (argmax, ties to the lower index) and mean class distribution.
    pub fn predict(&self, x: &[f64]) -> Result<(BcsLabel, [f64; N_CLASSES]), ForestError> {
        if x.len() != self.feature_names.len() {
            return Err(ForestError::Schema { expected: self.feature_names.len(), found: x.len() });
        }
        let mut sum = [0.0; N_CLASSES];
        for t in &self.trees {
            add(&mut sum, t.leaf_value(x));
        }
        let label = argmax(&sum);
        let n = self.trees.len() as f64;
        Ok((label, sum.map(|s| s / n)))
    }

    pub fn predict_vector(&self, fv: &FeatureVector) -> Result<(BcsLabel, [f64; N_CLASSES]), ForestError> {
        self.predict(&fv.values)
    }

    #[cfg(test)]
    fn predict_capped(&self, x: &[f64], n_trees: usize, caps: Caps) -> BcsLabel {
        let mut sum = [0.0; N_CLASSES];
        for t in &self.trees[..n_trees] {
            add(&mut sum, t.leaf_capped(x, caps));
        }
        argmax(&sum)
    }
}

#[inline]
fn add(acc: &mut [f64; N_CLASSES], v: &[f64; N_CLASSES]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[inline]
fn argmax(v: &[f64; N_CLASSES]) -> BcsLabel {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if v[k] > v[best] {
            best = k;
        }
    }
    BcsLabel(best as u8)
}

/// Training rows with their labels and grouping (cow) ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub x: Vec<[f64; N_FEATURES]>,
    pub y: Vec<BcsLabel>,
    pub group: Vec<u64>,
}

impl Dataset {
    pub fn push(&mut self, x: [f64; N_FEATURES], y: BcsLabel, group: u64) {
        self.x.push(x);
        self.y.push(y);
        self.group.push(group);
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        self.group.extend_from_slice(&other.group);
    }
}

/// Per-forest training data shared by all trees.
struct Prepared<'a> {
    x: &'a [[f64; N_FEATURES]],
    y: Vec<u8>,
    /// Dense rank of each row's value, per feature.
    rank: Vec<[u32; N_FEATURES]>,
    /// Sorted distinct values per feature, indexed by rank.
    values: Vec<Vec<f64>>,
    class_weight: [f64; N_CLASSES],
}

impl<'a> Prepared<'a> {
    fn new(x: &'a [[f64; N_FEATURES]], y: &[BcsLabel], cw: ClassWeight) -> Result<Self, ForestError> {
        if x.len() != y.len() {
            return Err(ForestError::LengthMismatch(x.len(), y.len()));
        }
        if x.len() < 2 {
            return Err(ForestError::TooFewSamples(x.len()));
        }
        for (row, r) in x.iter().enumerate() {
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(ForestError::NonFinite { row, col });
            }
        }
        let mut counts = [0usize; N_CLASSES];
        for l in y {
            counts[l.index()] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(ForestError::SingleClass);
        }
        let class_weight = match cw {
            ClassWeight::None => [1.0; N_CLASSES],
            ClassWeight::Balanced => {
                counts.map(|c| if c == 0 { 0.0 } else { x.len() as f64 / (present as f64 * c as f64) })
            }
        };
        let mut rank = vec![[0u32; N_FEATURES]; x.len()];
        let mut values = Vec::with_capacity(N_FEATURES);
        let mut order: Vec<usize> = (0..x.len()).collect();
        for f in 0..N_FEATURES {
            order.sort_unstable_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut distinct: Vec<f64> = Vec::new();
            for &r in &order {
                if distinct.last() != Some(&x[r][f]) {
                    distinct.push(x[r][f]);
                }
                rank[r][f] = (distinct.len() - 1) as u32;
            }
            values.push(distinct);
        }
        Ok(Self { x, y: y.iter().map(|l| l.0).collect(), rank, values, class_weight })
    }
}

#[derive(Clone, Copy)]
struct GrowParams {
    max_depth: Option<usize>,
    min_split: usize,
    min_leaf: usize,
    mtry: usize,
    bootstrap: bool,
}

struct Grown {
    tree: Tree,
    in_bag: Vec<u32>,
    importance: [f64; N_FEATURES],
}

struct Pending {
    slot: usize,
    rows: Vec<u32>,
    depth: usize,
    seed: u64,
}

fn grow_tree(p: &Prepared<'_>, gp: GrowParams, seed: u64) -> Grown {
    let n = p.x.len();
    let mut in_bag = vec![0u32; n];
    if gp.bootstrap {
        let mut r = rng::seeded(seed);
        for _ in 0..n {
            in_bag[rng::index(&mut r, n)] += 1;
        }
    } else {
        in_bag.fill(1);
    }
    let weight: Vec<f64> = (0..n).map(|i| in_bag[i] as f64 * p.class_weight[p.y[i] as usize]).collect();
    let root: Vec<u32> = (0..n as u32).filter(|&i| in_bag[i as usize] > 0).collect();

    let mut nodes: Vec<Node> = Vec::new();
    let mut importance = [0.0; N_FEATURES];
    let mut keys: Vec<u64> = Vec::with_capacity(root.len());
    nodes.push(Node { split: None, n_samples: 0, value: [0.0; N_CLASSES] });
    let mut stack = vec![Pending { slot: 0, rows: root, depth: 0, seed: rng::derive_seed(seed, u64::MAX) }];

    while let Some(Pending { slot, rows, depth, seed: node_seed }) = stack.pop() {
        let m = rows.len();
        let mut counts = [0.0; N_CLASSES];
        for &r in &rows {
            counts[p.y[r as usize] as usize] += weight[r as usize];
        }
        let w_total: f64 = counts.iter().sum();
        let sq_total: f64 = counts.iter().map(|c| c * c).sum();
        nodes[slot].n_samples = m as u32;
        nodes[slot].value = counts.map(|c| c / w_total);
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || gp.max_depth.is_some_and(|d| depth >= d) || m < gp.min_split || m < 2 * gp.min_leaf {
            continue;
        }

        // Candidate features in random order; constant ones do not count
        // toward mtry.
        let mut r = rng::seeded(node_seed);
        let mut feats: [u8; N_FEATURES] = core::array::from_fn(|i| i as u8);
        let (mut visited, mut informative) = (0, 0);
        let mut best: Option<(f64, usize, u32, u32)> = None;
        while informative < gp.mtry && visited < N_FEATURES {
            let j = visited + rng::index(&mut r, N_FEATURES - visited);
            feats.swap(visited, j);
            let f = feats[visited] as usize;
            visited += 1;
            keys.clear();
            keys.extend(rows.iter().enumerate().map(|(i, &row)| ((p.rank[row as usize][f] as u64) << 32) | i as u64));
            keys.sort_unstable();
            if keys[0] >> 32 == keys[m - 1] >> 32 {
                continue;
            }
            informative += 1;
            let mut cl = [0.0; N_CLASSES];
            let mut cr = counts;
            let (mut wl, mut wr, mut sql, mut sqr) = (0.0, w_total, 0.0, sq_total);
            for k in 0..m - 1 {
                let row = rows[(keys[k] & 0xFFFF_FFFF) as usize] as usize;
                let (c, w) = (p.y[row] as usize, weight[row]);
                sql += w * (2.0 * cl[c] + w);
                sqr -= w * (2.0 * cr[c] - w);
                cl[c] += w;
                cr[c] -= w;
                wl += w;
                wr -= w;
                let (here, next) = ((keys[k] >> 32) as u32, (keys[k + 1] >> 32) as u32);
                if here == next || k + 1 < gp.min_leaf || m - k - 1 < gp.min_leaf {
                    continue;
                }
                let proxy = sql / wl + sqr / wr;
                if best.is_none_or(|b| proxy > b.0) {
                    best = Some((proxy, f, here, next));
                }
            }
        }
        let Some((proxy, f, lo, hi)) = best else { continue };
        let (a, b) = (p.values[f][lo as usize], p.values[f][hi as usize]);
        let mut threshold = 0.5 * a + 0.5 * b;
        if threshold >= b {
            threshold = a;
        }
        importance[f] += proxy - sq_total / w_total;
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&row| p.rank[row as usize][f] <= lo);
        let li = nodes.len();
        nodes.push(Node { split: None, n_samples: 0, value: [0.0; N_CLASSES] });
        nodes.push(Node { split: None, n_samples: 0, value: [0.0; N_CLASSES] });
        nodes[slot].split = Some(Split { feature: f as u32, threshold, left: li as u32, right: li as u32 + 1 });
        stack.push(Pending { slot: li + 1, rows: right, depth: depth + 1, seed: rng::derive_seed(node_seed, 2) });
        stack.push(Pending { slot: li, rows: left, depth: depth + 1, seed: rng::derive_seed(node_seed, 1) });
    }
    Grown { tree: Tree { nodes }, in_bag, importance }
}

fn grow_params(hp: &ForestHyperparams) -> GrowParams {
    GrowParams {
        max_depth: hp.max_depth,
        min_split: hp.min_samples_split,
        min_leaf: hp.min_samples_leaf,
        mtry: hp.max_features.resolve(N_FEATURES),
        bootstrap: hp.bootstrap,
    }
}

fn assemble(p: &Prepared<'_>, hp: &ForestHyperparams, grown: Vec<Grown>) -> ForestModel {
    let mut importances = [0.0; N_FEATURES];
    let mut contributing = 0usize;
    for g in &grown {
        let total: f64 = g.importance.iter().sum();
        if g.tree.nodes.len() > 1 && total > 0.0 {
            contributing += 1;
            for (acc, v) in importances.iter_mut().zip(&g.importance) {
                *acc += v / total;
            }
        }
    }
    let sum: f64 = importances.iter().sum();
    if contributing > 0 && sum > 0.0 {
        for v in &mut importances {
            *v /= sum;
        }
    }

    let n = p.x.len();
    let mut votes = vec![[0.0; N_CLASSES]; n];
    let mut seen = vec![false; n];
    for g in &grown {
        for i in 0..n {
            if g.in_bag[i] == 0 {
                add(&mut votes[i], g.tree.leaf_value(&p.x[i]));
                seen[i] = true;
            }
        }
    }
    let scored = seen.iter().filter(|&&s| s).count();
    let correct = (0..n).filter(|&i| seen[i] && argmax(&votes[i]).0 == p.y[i]).count();
    let oob_accuracy = (scored > 0).then(|| correct as f64 / scored as f64);

    ForestModel {
        version: MODEL_VERSION,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        hyperparams: hp.clone(),
        importances: importances.to_vec(),
        oob_accuracy,
        trees: grown.into_iter().map(|g| g.tree).collect(),
    }
}

/// Trains a forest serially.
pub fn train_forest(
    x: &[[f64; N_FEATURES]],
    y: &[BcsLabel],
    hp: &ForestHyperparams,
) -> Result<ForestModel, ForestError> {
    train_forest_with(x, y, hp, &Serial)
}

/// Trains a forest, growing trees through `exec`. Tree `i` is seeded from
/// `(hp.seed, i)`, so the result does not depend on the executor.
pub fn train_forest_with<E: Executor>(
    x: &[[f64; N_FEATURES]],
    y: &[BcsLabel],
    hp: &ForestHyperparams,
    exec: &E,
) -> Result<ForestModel, ForestError> {
    hp.validate()?;
    let p = Prepared::new(x, y, hp.class_weight)?;
    let gp = grow_params(hp);
    let grown = exec.map((0..hp.n_estimators as u64).collect(), |t| grow_tree(&p, gp, rng::derive_seed(hp.seed, t)));
    Ok(assemble(&p, hp, grown))
}

/// Hyperparameter grid; configurations enumerate in field order with
/// `n_estimators` outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub class_weight: Vec<ClassWeight>,
}

impl ForestGrid {
    /// The 3x5x3x3x3x2 grid.
    pub fn table1() -> Self {
        Self {
            n_estimators: vec![200, 400, 800],
            max_depth: vec![None, Some(8), Some(12), Some(16), Some(24)],
            min_samples_split: vec![2, 5, 10],
            min_samples_leaf: vec![1, 2, 4],
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Log2, MaxFeatures::Fraction(0.5)],
            class_weight: vec![ClassWeight::None, ClassWeight::Balanced],
        }
    }

    pub fn single(hp: &ForestHyperparams) -> Self {
        Self {
            n_estimators: vec![hp.n_estimators],
            max_depth: vec![hp.max_depth],
            min_samples_split: vec![hp.min_samples_split],
            min_samples_leaf: vec![hp.min_samples_leaf],
            max_features: vec![hp.max_features],
            class_weight: vec![hp.class_weight],
        }
    }

    pub fn len(&self) -> usize {
        self.n_estimators.len()
            * self.max_depth.len()
            * self.min_samples_split.len()
            * self.min_samples_leaf.len()
            * self.max_features.len()
            * self.class_weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self, seed: u64) -> Vec<ForestHyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &n_estimators in &self.n_estimators {
            for &max_depth in &self.max_depth {
                for &min_samples_split in &self.min_samples_split {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        for &max_features in &self.max_features {
                            for &class_weight in &self.class_weight {
                                out.push(ForestHyperparams {
                                    n_estimators,
                                    max_depth,
                                    min_samples_split,
                                    min_samples_leaf,
                                    max_features,
                                    class_weight,
                                    bootstrap: true,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: ForestHyperparams,
    /// Validation accuracy of every configuration, in grid order.
    pub table: Vec<(ForestHyperparams, f64)>,
    /// The best configuration retrained on train and validation combined.
    pub model: ForestModel,
}

/// Cow-level exact accuracy after majority voting over each group's rows.
fn grouped_accuracy(pred: &[BcsLabel], data: &Dataset) -> f64 {
    let mut by_group: BTreeMap<u64, (BcsLabel, Vec<BcsLabel>)> = BTreeMap::new();
    for ((&p, &t), &g) in pred.iter().zip(&data.y).zip(&data.group) {
        by_group.entry(g).or_insert_with(|| (t, Vec::new())).1.push(p);
    }
    let correct = by_group
        .values()
        .filter(|(t, preds)| majority_vote(preds).ok() == Some(*t))
        .count();
    correct as f64 / by_group.len() as f64
}

/// Exhaustive search maximizing cow-level validation accuracy. Ties go to
/// fewer trees, then shallower `max_depth` (unlimited is deepest), then grid
/// order. The winner is retrained on `train` and `val` combined.
pub fn grid_search<E: Executor>(
    train: &Dataset,
    val: &Dataset,
    grid: &ForestGrid,
    seed: u64,
    exec: &E,
) -> Result<GridOutcome, ForestError> {
    let configs = grid.configs(seed);
    if configs.is_empty() {
        return Err(ForestError::EmptyGrid);
    }
    if val.is_empty() {
        return Err(ForestError::EmptyValidation);
    }
    for hp in &configs {
        hp.validate()?;
    }

    // One grown forest per (min_samples_leaf, max_features, class_weight),
    // with the loosest depth/split rules and the most trees in the grid.
    let max_trees = *grid.n_estimators.iter().max().unwrap();
    let loosest_depth = if grid.max_depth.contains(&None) { None } else { grid.max_depth.iter().copied().max().flatten() };
    let loosest_split = *grid.min_samples_split.iter().min().unwrap();
    let mut groups: Vec<(usize, MaxFeatures, ClassWeight)> = Vec::new();
    for hp in &configs {
        let key = (hp.min_samples_leaf, hp.max_features, hp.class_weight);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let prepared = [ClassWeight::None, ClassWeight::Balanced].map(|cw| {
        groups.iter().any(|g| g.2 == cw).then(|| Prepared::new(&train.x, &train.y, cw)).transpose()
    });
    let [p_none, p_bal] = prepared;
    let (p_none, p_bal) = (p_none?, p_bal?);
    let prep = |cw: ClassWeight| match cw {
        ClassWeight::None => p_none.as_ref().unwrap(),
        ClassWeight::Balanced => p_bal.as_ref().unwrap(),
    };

    let tasks: Vec<(usize, u64)> = (0..groups.len()).flat_map(|g| (0..max_trees as u64).map(move |t| (g, t))).collect();
    let grown = exec.map(tasks, |(g, t)| {
        let (min_leaf, mf, cw) = groups[g];
        let gp = GrowParams {
            max_depth: loosest_depth,
            min_split: loosest_split,
            min_leaf,
            mtry: mf.resolve(N_FEATURES),
            bootstrap: true,
        };
        grow_tree(prep(cw), gp, rng::derive_seed(seed, t)).tree
    });
    let mut forests: Vec<Vec<Tree>> = groups.iter().map(|_| Vec::with_capacity(max_trees)).collect();
    for (i, tree) in grown.into_iter().enumerate() {
        forests[i / max_trees].push(tree);
    }

    let mut n_sorted = grid.n_estimators.clone();
    n_sorted.sort_unstable();
    n_sorted.dedup();
    let scores = exec.map((0..groups.len()).collect(), |g| {
        let trees = &forests[g];
        let mut out: Vec<((Option<usize>, usize, usize), f64)> = Vec::new();
        for &max_depth in &grid.max_depth {
            for &min_split in &grid.min_samples_split {
                let caps = Caps { max_depth, min_split };
                let mut sums = vec![[0.0; N_CLASSES]; val.len()];
                let mut done = 0;
                for &n in &n_sorted {
                    for t in &trees[done..n] {
                        for (s, x) in sums.iter_mut().zip(&val.x) {
                            add(s, t.leaf_capped(x, caps));
                        }
                    }
                    done = n;
                    let pred: Vec<BcsLabel> = sums.iter().map(argmax).collect();
                    out.push(((max_depth, min_split, n), grouped_accuracy(&pred, val)));
                }
            }
        }
        out
    });

    let table: Vec<(ForestHyperparams, f64)> = configs
        .into_iter()
        .map(|hp| {
            let g = groups.iter().position(|k| *k == (hp.min_samples_leaf, hp.max_features, hp.class_weight)).unwrap();
            let key = (hp.max_depth, hp.min_samples_split, hp.n_estimators);
            let acc = scores[g].iter().find(|(k, _)| *k == key).unwrap().1;
            (hp, acc)
        })
        .collect();

    let depth_key = |d: Option<usize>| d.unwrap_or(usize::MAX);
    let mut best = 0;
    for (i, (hp, acc)) in table.iter().enumerate().skip(1) {
        let (bhp, bacc) = &table[best];
        let better = *acc > *bacc
            || (*acc == *bacc
                && (hp.n_estimators, depth_key(hp.max_depth)) < (bhp.n_estimators, depth_key(bhp.max_depth)));
        if better {
            best = i;
        }
    }
    let best = table[best].0.clone();
    let mut all = train.clone();
    all.extend(val);
    let model = train_forest_with(&all.x, &all.y, &best, exec)?;
    Ok(GridOutcome { best, table, model })
}
