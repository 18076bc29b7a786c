//! Regression surrogates: a CART random forest and a brute-force KNN, plus
//! scoring, exhaustive grid search and JSON artifacts.
//!
//! Both learners sort their training rows canonically before fitting, so a
//! model depends only on the set of rows and the seed, never on row order.
//! Every tree node draws its feature permutation from an RNG keyed by the
//! node's path, which makes a depth-limited tree exactly the truncation of the
//! unbounded tree grown from the same seed; grid search relies on that.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, Partition, ScalerParams, SplitSpec};
use crate::design_space::{Family, FeatureSchema};
use crate::error::{Error, Result};
use crate::sim::Output;

pub const ARTIFACT_VERSION: &str = "shadekit-model/1";

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Row indices in canonical (features, target) order.
fn canonical_order(x: &[Vec<f64>], y: &[f64]) -> Vec<usize> {
    let mut ix: Vec<usize> = (0..x.len()).collect();
    ix.sort_by(|&i, &j| cmp_rows(&x[i], &x[j]).then(y[i].total_cmp(&y[j])));
    ix
}

fn check_training(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::domain(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::domain("ragged feature matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("training data contains non-finite values"));
    }
    Ok(())
}

/// Order-independent mean: values are sorted before summation.
fn exact_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// `None` grows every tree until its leaves are pure.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    /// Share of the features examined at each split.
    pub feature_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_estimators: 100, max_depth: None, bootstrap: true, feature_fraction: 1.0 / 3.0 }
    }
}

impl ForestParams {
    pub fn new(n_estimators: usize, max_depth: Option<usize>) -> Self {
        ForestParams { n_estimators, max_depth, ..Default::default() }
    }
}

/// Binary regression tree in flat arrays. The right child of an internal
/// node is always `left + 1`; `feature < 0` marks a leaf. Every node keeps the
/// mean of its training targets so the tree can be cut at any depth.
///
/// Serialized as base64 little-endian arrays, which keeps large forests
/// compact and exact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeRepr", try_from = "TreeRepr")]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn len(&self) -> usize {
        self.feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature.is_empty()
    }

    fn push(&mut self, value: f64) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.value.push(value);
        self.feature.len() - 1
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_depth(x, usize::MAX)
    }

    /// Prediction of the tree cut at `max_depth` (root has depth 0).
    #[inline]
    pub fn predict_depth(&self, x: &[f64], max_depth: usize) -> f64 {
        let mut node = 0usize;
        let mut depth = 0usize;
        loop {
            let f = self.feature[node];
            if f < 0 || depth >= max_depth {
                return self.value[node];
            }
            node = self.left[node] as usize + usize::from(x[f as usize] > self.threshold[node]);
            depth += 1;
        }
    }

    /// Copy with every node deeper than `max_depth` removed.
    pub fn truncated(&self, max_depth: usize) -> Tree {
        let mut out = Tree::default();
        out.push(self.value[0]);
        let mut stack = vec![(0usize, 0usize, 0usize)];
        while let Some((src, dst, depth)) = stack.pop() {
            if self.feature[src] < 0 || depth >= max_depth {
                continue;
            }
            let l = self.left[src] as usize;
            let nl = out.push(self.value[l]);
            out.push(self.value[l + 1]);
            out.feature[dst] = self.feature[src];
            out.threshold[dst] = self.threshold[src];
            out.left[dst] = nl as u32;
            stack.push((l + 1, nl + 1, depth + 1));
            stack.push((l, nl, depth + 1));
        }
        out
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, d)) = stack.pop() {
            best = best.max(d);
            if self.feature[n] >= 0 {
                let l = self.left[n] as usize;
                stack.push((l, d + 1));
                stack.push((l + 1, d + 1));
            }
        }
        best
    }
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    nodes: usize,
    feature: String,
    threshold: String,
    left: String,
    value: String,
}

fn pack<const N: usize, T: Copy>(v: &[T], bytes: impl Fn(T) -> [u8; N]) -> String {
    let raw: Vec<u8> = v.iter().flat_map(|&x| bytes(x)).collect();
    BASE64.encode(raw)
}

fn unpack<const N: usize, T>(s: &str, n: usize, from: impl Fn([u8; N]) -> T) -> std::result::Result<Vec<T>, String> {
    let raw = BASE64.decode(s).map_err(|e| e.to_string())?;
    if raw.len() != n * N {
        return Err(format!("tree array holds {} bytes, expected {}", raw.len(), n * N));
    }
    Ok(raw.chunks_exact(N).map(|c| from(c.try_into().unwrap())).collect())
}

impl From<Tree> for TreeRepr {
    fn from(t: Tree) -> Self {
        TreeRepr {
            nodes: t.len(),
            feature: pack(&t.feature, i32::to_le_bytes),
            threshold: pack(&t.threshold, f64::to_le_bytes),
            left: pack(&t.left, u32::to_le_bytes),
            value: pack(&t.value, f64::to_le_bytes),
        }
    }
}

impl TryFrom<TreeRepr> for Tree {
    type Error = String;

    fn try_from(r: TreeRepr) -> std::result::Result<Self, String> {
        let n = r.nodes;
        let tree = Tree {
            feature: unpack(&r.feature, n, i32::from_le_bytes)?,
            threshold: unpack(&r.threshold, n, f64::from_le_bytes)?,
            left: unpack(&r.left, n, u32::from_le_bytes)?,
            value: unpack(&r.value, n, f64::from_le_bytes)?,
        };
        let bad_child = (0..n).any(|i| tree.feature[i] >= 0 && tree.left[i] as usize + 1 >= n);
        if n == 0 || bad_child {
            return Err("malformed tree".into());
        }
        Ok(tree)
    }
}

/// Training matrix with each feature coded by the rank of its value among the
/// feature's distinct training values.
struct Binned {
    codes: Vec<Vec<u32>>,
    levels: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Binned {
    fn new(x: &[Vec<f64>], y: &[f64]) -> Self {
        let n_features = x[0].len();
        let mut codes = Vec::with_capacity(n_features);
        let mut levels = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let mut u: Vec<f64> = x.iter().map(|r| r[f]).collect();
            u.sort_by(f64::total_cmp);
            u.dedup();
            codes.push(
                x.iter()
                    .map(|r| u.binary_search_by(|v| v.total_cmp(&r[f])).expect("value present") as u32)
                    .collect(),
            );
            levels.push(u);
        }
        Binned { codes, levels, y: y.to_vec() }
    }
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    last_left_bin: u32,
}

struct Scratch {
    counts: Vec<u32>,
    sums: Vec<f64>,
    pairs: Vec<(u32, f64)>,
}

fn node_seed(seed: u64, side: u64) -> u64 {
    splitmix(seed ^ splitmix(side.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Best split of `samples` on feature `f`, or `None` if `f` is constant there.
fn best_on_feature(data: &Binned, f: usize, samples: &[u32], total: f64, scratch: &mut Scratch) -> Option<(f64, u32)> {
    let codes = &data.codes[f];
    let n = samples.len();
    let n_levels = data.levels[f].len();
    let mut best: Option<(f64, u32)> = None;
    let consider = |n_left: usize, s_left: f64, bin: u32, best: &mut Option<(f64, u32)>| {
        let s_right = total - s_left;
        let gain = s_left * s_left / n_left as f64 + s_right * s_right / (n - n_left) as f64;
        if best.map_or(true, |(g, _)| gain > g) {
            *best = Some((gain, bin));
        }
    };
    if n_levels <= 2 * n {
        let (counts, sums) = (&mut scratch.counts, &mut scratch.sums);
        counts[..n_levels].iter_mut().for_each(|c| *c = 0);
        sums[..n_levels].iter_mut().for_each(|s| *s = 0.0);
        for &i in samples {
            let b = codes[i as usize] as usize;
            counts[b] += 1;
            sums[b] += data.y[i as usize];
        }
        let mut n_left = 0usize;
        let mut s_left = 0.0;
        for b in 0..n_levels {
            if counts[b] == 0 {
                continue;
            }
            n_left += counts[b] as usize;
            s_left += sums[b];
            if n_left == n {
                break;
            }
            consider(n_left, s_left, b as u32, &mut best);
        }
    } else {
        // many distinct levels relative to the node: sort instead of binning
        let pairs = &mut scratch.pairs;
        pairs.clear();
        pairs.extend(samples.iter().map(|&i| (codes[i as usize], data.y[i as usize])));
        pairs.sort_by_key(|p| p.0);
        let mut n_left = 0usize;
        let mut s_left = 0.0;
        let mut k = 0;
        while k < n {
            let b = pairs[k].0;
            while k < n && pairs[k].0 == b {
                s_left += pairs[k].1;
                n_left += 1;
                k += 1;
            }
            if n_left == n {
                break;
            }
            consider(n_left, s_left, b, &mut best);
        }
    }
    best
}

fn grow_tree(data: &Binned, mut samples: Vec<u32>, params: &ForestParams, seed: u64) -> Tree {
    let n_features = data.codes.len();
    let mtry = ((n_features as f64 * params.feature_fraction).floor() as usize).clamp(1, n_features);
    let max_levels = data.levels.iter().map(Vec::len).max().unwrap_or(1);
    let mut scratch = Scratch { counts: vec![0; max_levels], sums: vec![0.0; max_levels], pairs: Vec::new() };
    let max_depth = params.max_depth.unwrap_or(usize::MAX);
    let mut tree = Tree::default();
    let mean = |s: &[u32]| s.iter().map(|&i| data.y[i as usize]).sum::<f64>() / s.len() as f64;
    tree.push(mean(&samples));
    let mut buf: Vec<u32> = Vec::with_capacity(samples.len());
    let mut features: Vec<usize> = (0..n_features).collect();
    // (node, start, end, depth, seed)
    let mut stack = vec![(0usize, 0usize, samples.len(), 0usize, seed)];
    while let Some((node, start, end, depth, nseed)) = stack.pop() {
        let node_samples = &samples[start..end];
        let n = node_samples.len();
        if n < 2 || depth >= max_depth {
            continue;
        }
        let first = data.y[node_samples[0] as usize];
        if node_samples.iter().all(|&i| data.y[i as usize] == first) {
            continue;
        }
        let total: f64 = node_samples.iter().map(|&i| data.y[i as usize]).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(nseed);
        for (k, f) in features.iter_mut().enumerate() {
            *f = k;
        }
        features.shuffle(&mut rng);
        let mut best: Option<SplitChoice> = None;
        let mut examined = 0;
        for &f in &features {
            if examined == mtry {
                break;
            }
            let Some((gain, bin)) = best_on_feature(data, f, node_samples, total, &mut scratch) else { continue };
            examined += 1;
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(SplitChoice { gain, feature: f, last_left_bin: bin });
            }
        }
        let Some(split) = best else { continue };

        let codes = &data.codes[split.feature];
        buf.clear();
        let mut next_bin = u32::MAX;
        for &i in node_samples.iter().filter(|&&i| codes[i as usize] <= split.last_left_bin) {
            buf.push(i);
        }
        let n_left = buf.len();
        for &i in node_samples.iter().filter(|&&i| codes[i as usize] > split.last_left_bin) {
            next_bin = next_bin.min(codes[i as usize]);
            buf.push(i);
        }
        samples[start..end].copy_from_slice(&buf);
        let lv = &data.levels[split.feature];
        let lo = lv[split.last_left_bin as usize];
        let hi = lv[next_bin as usize];
        let mut thr = lo + (hi - lo) / 2.0;
        if thr >= hi {
            thr = lo;
        }
        let mid = start + n_left;
        let l = tree.push(mean(&samples[start..mid]));
        tree.push(mean(&samples[mid..end]));
        tree.feature[node] = split.feature as i32;
        tree.threshold[node] = thr;
        tree.left[node] = l as u32;
        stack.push((l + 1, mid, end, depth + 1, node_seed(nseed, 1)));
        stack.push((l, start, mid, depth + 1, node_seed(nseed, 0)));
    }
    tree
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: ForestParams, seed: u64) -> Result<Forest> {
        check_training(x, y)?;
        if params.n_estimators == 0 {
            return Err(Error::domain("a forest needs at least one tree"));
        }
        if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
            return Err(Error::domain("feature_fraction must lie in (0, 1]"));
        }
        let order = canonical_order(x, y);
        let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let data = Binned::new(&xs, &ys);
        let n = xs.len();
        let trees = (0..params.n_estimators)
            .into_par_iter()
            .map(|t| {
                let tree_seed = splitmix(seed ^ splitmix(t as u64));
                let samples: Vec<u32> = if params.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                    (0..n).map(|_| rng.gen_range(0..n as u32)).collect()
                } else {
                    (0..n as u32).collect()
                };
                grow_tree(&data, samples, &params, splitmix(tree_seed))
            })
            .collect();
        Ok(Forest { params, seed, trees })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        exact_mean(&mut preds)
    }

    /// The first `n_estimators` trees cut at `max_depth`: identical to a
    /// forest trained directly with those parameters and the same seed.
    pub fn sub_forest(&self, n_estimators: usize, max_depth: Option<usize>) -> Forest {
        let trees = self.trees[..n_estimators.min(self.trees.len())]
            .iter()
            .map(|t| match max_depth {
                Some(d) => t.truncated(d),
                None => t.clone(),
            })
            .collect();
        Forest { params: ForestParams { n_estimators, max_depth, ..self.params }, seed: self.seed, trees }
    }

    /// Share of internal nodes splitting on each feature.
    pub fn feature_importance(&self, n_features: usize) -> Vec<f64> {
        let mut counts = vec![0usize; n_features];
        for t in &self.trees {
            for &f in t.feature.iter().filter(|&&f| f >= 0) {
                counts[f as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        counts.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(Tree::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub weighting: Weighting,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn knn_combine(neigh: &[(f64, usize)], y: &[f64], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Uniform => {
            let mut v: Vec<f64> = neigh.iter().map(|&(_, i)| y[i]).collect();
            exact_mean(&mut v)
        }
        Weighting::Distance => {
            let mut exact: Vec<f64> = neigh.iter().filter(|n| n.0 == 0.0).map(|&(_, i)| y[i]).collect();
            if !exact.is_empty() {
                return exact_mean(&mut exact);
            }
            let (num, den) = neigh.iter().fold((0.0, 0.0), |(num, den), &(d2, i)| {
                let w = 1.0 / d2.sqrt();
                (num + w * y[i], den + w)
            });
            num / den
        }
    }
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[f64], k: usize, weighting: Weighting) -> Result<Knn> {
        check_training(x, y)?;
        if k == 0 || k > x.len() {
            return Err(Error::domain(format!("k = {k} must lie in 1..={}", x.len())));
        }
        let order = canonical_order(x, y);
        Ok(Knn {
            k,
            weighting,
            x: order.iter().map(|&i| x[i].clone()).collect(),
            y: order.iter().map(|&i| y[i]).collect(),
        })
    }

    /// The `k` nearest training rows as (squared distance, index), nearest first.
    fn neighbours(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self.x.iter().enumerate().map(|(i, r)| (sq_dist(r, q), i)).collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, by);
            d.truncate(k);
        }
        d.sort_by(by);
        d
    }

    pub fn predict(&self, q: &[f64]) -> f64 {
        knn_combine(&self.neighbours(q, self.k), &self.y, self.weighting)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Model {
    Forest(Forest),
    Knn(Knn),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Forest(f) => f.predict(x),
            Model::Knn(k) => k.predict(x),
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        match self {
            Model::Forest(f) => Hyperparams::Forest { n_estimators: f.params.n_estimators, max_depth: f.params.max_depth },
            Model::Knn(k) => Hyperparams::Knn { k: k.k, weighting: k.weighting },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Forest,
    Knn,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Forest => "forest",
            Algorithm::Knn => "knn",
        }
    }

    pub fn default_grid(self) -> Vec<Hyperparams> {
        match self {
            Algorithm::Forest => forest_grid(),
            Algorithm::Knn => knn_grid(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" | "rf" => Ok(Algorithm::Forest),
            "knn" => Ok(Algorithm::Knn),
            _ => Err(Error::domain(format!("unknown algorithm `{s}` (expected forest or knn)"))),
        }
    }
}

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Hyperparams {
    Forest { n_estimators: usize, max_depth: Option<usize> },
    Knn { k: usize, weighting: Weighting },
}

impl Hyperparams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparams::Forest { .. } => Algorithm::Forest,
            Hyperparams::Knn { .. } => Algorithm::Knn,
        }
    }

    pub fn fit(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Model> {
        match *self {
            Hyperparams::Forest { n_estimators, max_depth } => {
                Ok(Model::Forest(Forest::fit(x, y, ForestParams::new(n_estimators, max_depth), seed)?))
            }
            Hyperparams::Knn { k, weighting } => Ok(Model::Knn(Knn::fit(x, y, k, weighting)?)),
        }
    }
}

pub const FOREST_ESTIMATORS: [usize; 10] = [1, 2, 5, 10, 25, 50, 100, 200, 400, 500];
pub const FOREST_DEPTHS: [Option<usize>; 4] = [None, Some(5), Some(10), Some(20)];

pub fn forest_grid() -> Vec<Hyperparams> {
    FOREST_ESTIMATORS
        .iter()
        .flat_map(|&n| FOREST_DEPTHS.iter().map(move |&d| Hyperparams::Forest { n_estimators: n, max_depth: d }))
        .collect()
}

pub fn knn_grid() -> Vec<Hyperparams> {
    (1..=10)
        .flat_map(|k| [Weighting::Uniform, Weighting::Distance].map(|weighting| Hyperparams::Knn { k, weighting }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
}

pub fn score(predicted: &[f64], actual: &[f64]) -> Result<Score> {
    if actual.is_empty() || predicted.len() != actual.len() {
        return Err(Error::domain("score needs equally sized, non-empty vectors"));
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, y)| (y - p) * (y - p)).sum();
    let mae = predicted.iter().zip(actual).map(|(p, y)| (y - p).abs()).sum::<f64>() / n;
    Ok(Score { r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot), mae, rmse: (ss_res / n).sqrt() })
}

fn mae(predicted: &[f64], actual: &[f64]) -> f64 {
    predicted.iter().zip(actual).map(|(p, y)| (y - p).abs()).sum::<f64>() / actual.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub params: Hyperparams,
    pub validation_mae: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: Hyperparams,
    pub model: Model,
    pub cells: Vec<CellResult>,
    /// Number of grid cells scored (one fit each).
    pub fits: usize,
}

/// Scores every cell on the validation rows and keeps the lowest MAE; ties go
/// to the earliest cell in grid order.
pub fn grid_search(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    val_x: &[Vec<f64>],
    val_y: &[f64],
    grid: &[Hyperparams],
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::domain("empty hyperparameter grid"));
    }
    if val_x.is_empty() || val_x.len() != val_y.len() {
        return Err(Error::domain("grid search needs a non-empty validation set"));
    }
    check_training(train_x, train_y)?;
    let mut maes = vec![f64::NAN; grid.len()];

    let forest_cells: Vec<usize> = (0..grid.len()).filter(|&i| grid[i].algorithm() == Algorithm::Forest).collect();
    let mut big_forest = None;
    if !forest_cells.is_empty() {
        let (max_n, unbounded, max_d) = forest_cells.iter().fold((0, false, 0), |(n, u, d), &i| match grid[i] {
            Hyperparams::Forest { n_estimators, max_depth } => {
                (n.max(n_estimators), u || max_depth.is_none(), d.max(max_depth.unwrap_or(0)))
            }
            _ => unreachable!(),
        });
        let depth = if unbounded { None } else { Some(max_d) };
        let forest = Forest::fit(train_x, train_y, ForestParams::new(max_n, depth), seed)?;
        let depths: Vec<usize> = {
            let mut d: Vec<usize> = forest_cells
                .iter()
                .map(|&i| match grid[i] {
                    Hyperparams::Forest { max_depth, .. } => max_depth.unwrap_or(usize::MAX),
                    _ => unreachable!(),
                })
                .collect();
            d.sort_unstable();
            d.dedup();
            d
        };
        // per validation row, per depth limit: every tree's prediction
        let per_tree: Vec<Vec<Vec<f64>>> = val_x
            .par_iter()
            .map(|q| depths.iter().map(|&d| forest.trees.iter().map(|t| t.predict_depth(q, d)).collect()).collect())
            .collect();
        for &i in &forest_cells {
            let Hyperparams::Forest { n_estimators, max_depth } = grid[i] else { unreachable!() };
            let di = depths.binary_search(&max_depth.unwrap_or(usize::MAX)).unwrap();
            let preds: Vec<f64> = per_tree.iter().map(|row| exact_mean(&mut row[di][..n_estimators].to_vec())).collect();
            maes[i] = mae(&preds, val_y);
        }
        big_forest = Some(forest);
    }

    let knn_cells: Vec<usize> = (0..grid.len()).filter(|&i| grid[i].algorithm() == Algorithm::Knn).collect();
    let mut knn_base = None;
    if !knn_cells.is_empty() {
        let max_k = knn_cells
            .iter()
            .map(|&i| match grid[i] {
                Hyperparams::Knn { k, .. } => k,
                _ => unreachable!(),
            })
            .max()
            .unwrap();
        let base = Knn::fit(train_x, train_y, max_k, Weighting::Uniform)?;
        let neigh: Vec<Vec<(f64, usize)>> = val_x.par_iter().map(|q| base.neighbours(q, max_k)).collect();
        for &i in &knn_cells {
            let Hyperparams::Knn { k, weighting } = grid[i] else { unreachable!() };
            let preds: Vec<f64> = neigh.iter().map(|n| knn_combine(&n[..k], &base.y, weighting)).collect();
            maes[i] = mae(&preds, val_y);
        }
        knn_base = Some(base);
    }

    let mut best = 0;
    for i in 1..grid.len() {
        if maes[i] < maes[best] {
            best = i;
        }
    }
    let model = match grid[best] {
        Hyperparams::Forest { n_estimators, max_depth } => {
            Model::Forest(big_forest.expect("forest trained").sub_forest(n_estimators, max_depth))
        }
        Hyperparams::Knn { k, weighting } => Model::Knn(Knn { k, weighting, ..knn_base.expect("knn fitted") }),
    };
    let cells = grid.iter().zip(&maes).map(|(&params, &m)| CellResult { params, validation_mae: m }).collect();
    Ok(GridResult { best: grid[best], model, cells, fits: grid.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub hyperparams: Hyperparams,
    pub train: Score,
    pub validation: Score,
    pub test: Score,
    /// |MAE(validation) − MAE(test)| / max of the two; see [`relative_gap`].
    pub val_test_gap: f64,
    pub overfit_flag: bool,
    pub train_seconds: f64,
    pub tune_seconds: Option<f64>,
    pub grid: Vec<CellResult>,
}

/// Everything that determines predictions; the artifact hash covers this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBody {
    pub family: Family,
    pub output: Output,
    pub schema: FeatureSchema,
    pub scaler: ScalerParams,
    pub split: SplitSpec,
    pub seed: u64,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub format_version: String,
    pub content_hash: String,
    pub body: ModelBody,
    pub report: TrainReport,
}

fn body_hash(body: &ModelBody) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(body)?)))
}

/// Relative gap between two MAEs. Errors below a thousandth of the target's
/// spread count as noise, so two near-perfect fits do not read as a 100% gap.
pub fn relative_gap(v: f64, t: f64, target_std: f64) -> f64 {
    let m = v.abs().max(t.abs()).max(1e-3 * target_std);
    if m == 0.0 {
        0.0
    } else {
        (v - t).abs() / m
    }
}

struct Prepared {
    schema: FeatureSchema,
    scaler: ScalerParams,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    val_x: Vec<Vec<f64>>,
    val_y: Vec<f64>,
    test_x: Vec<Vec<f64>>,
    test_y: Vec<f64>,
}

fn prepare(dataset: &Dataset, output: Output, split: &SplitSpec) -> Result<Prepared> {
    let parts = dataset.partitions(split)?;
    let scaler = ScalerParams::fit(&parts.train, &dataset.schema)?;
    let xy = |p: &Partition| (scaler.apply_all(&p.features), p.targets(output));
    let (train_x, train_y) = xy(&parts.train);
    let (val_x, val_y) = xy(&parts.validation);
    let (test_x, test_y) = xy(&parts.test);
    if val_x.is_empty() || test_x.is_empty() {
        return Err(Error::domain(format!("{} has too few valid rows to hold out", dataset.family)));
    }
    Ok(Prepared { schema: dataset.schema.clone(), scaler, train_x, train_y, val_x, val_y, test_x, test_y })
}

fn finish(
    dataset: &Dataset,
    output: Output,
    split: &SplitSpec,
    seed: u64,
    p: Prepared,
    model: Model,
    train_seconds: f64,
    tune_seconds: Option<f64>,
    grid: Vec<CellResult>,
) -> Result<SurrogateModel> {
    let eval = |x: &[Vec<f64>], y: &[f64]| -> Result<Score> {
        let pred: Vec<f64> = x.par_iter().map(|r| model.predict(r)).collect();
        score(&pred, y)
    };
    let train = eval(&p.train_x, &p.train_y)?;
    let validation = eval(&p.val_x, &p.val_y)?;
    let test = eval(&p.test_x, &p.test_y)?;
    let n = p.test_y.len() as f64;
    let mean = p.test_y.iter().sum::<f64>() / n;
    let std = (p.test_y.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();
    let val_test_gap = relative_gap(validation.mae, test.mae, std);
    let report = TrainReport {
        hyperparams: model.hyperparams(),
        train,
        validation,
        test,
        val_test_gap,
        overfit_flag: val_test_gap > 0.5,
        train_seconds,
        tune_seconds,
        grid,
    };
    let body = ModelBody { family: dataset.family, output, schema: p.schema, scaler: p.scaler, split: *split, seed, model };
    Ok(SurrogateModel { format_version: ARTIFACT_VERSION.into(), content_hash: body_hash(&body)?, body, report })
}

/// Trains one model with fixed hyperparameters.
pub fn train(dataset: &Dataset, output: Output, params: Hyperparams, split: &SplitSpec, seed: u64) -> Result<SurrogateModel> {
    let p = prepare(dataset, output, split)?;
    let t = Instant::now();
    let model = params.fit(&p.train_x, &p.train_y, seed)?;
    let secs = t.elapsed().as_secs_f64();
    finish(dataset, output, split, seed, p, model, secs, None, Vec::new())
}

/// Grid-searches `grid` on the validation partition and reports the winner.
pub fn tune(
    dataset: &Dataset,
    output: Output,
    grid: &[Hyperparams],
    split: &SplitSpec,
    seed: u64,
) -> Result<SurrogateModel> {
    let p = prepare(dataset, output, split)?;
    let t = Instant::now();
    let result = grid_search(&p.train_x, &p.train_y, &p.val_x, &p.val_y, grid, seed)?;
    let tune_secs = t.elapsed().as_secs_f64();
    // time a direct fit of the winner so the report carries a training time
    let t = Instant::now();
    let _ = result.best.fit(&p.train_x, &p.train_y, seed)?;
    let train_secs = t.elapsed().as_secs_f64();
    finish(dataset, output, split, seed, p, result.model, train_secs, Some(tune_secs), result.cells)
}

impl SurrogateModel {
    pub fn family(&self) -> Family {
        self.body.family
    }

    pub fn output(&self) -> Output {
        self.body.output
    }

    /// Prediction from a raw (unscaled) feature vector.
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.body.model.predict(&self.body.scaler.apply(features))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Loads an artifact, refusing other format versions and altered content.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArtifact(path.into())),
            Err(e) => return Err(e.into()),
        };
        let head: serde_json::Value = serde_json::from_slice(&bytes)?;
        let found = head.get("format_version").and_then(|v| v.as_str()).unwrap_or("").to_string();
        if found != ARTIFACT_VERSION {
            return Err(Error::VersionMismatch { found, expected: ARTIFACT_VERSION.into() });
        }
        let model: SurrogateModel = serde_json::from_value(head)?;
        if body_hash(&model.body)? != model.content_hash {
            return Err(Error::HashMismatch(path.into()));
        }
        Ok(model)
    }
}

/// Conventional artifact location `<root>/<family>/<output>.json`.
pub fn artifact_path(root: &Path, family: Family, output: Output) -> std::path::PathBuf {
    root.join(family.name()).join(format!("{}.json", output.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn poly_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let y = x.iter().map(|r| 3.0 * r[0] * r[0] - 2.0 * r[1] + r[0] * r[2] + 0.1 * rng.gen::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn score_hand_cases() {
        let s = score(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.r2, Some(0.5));
        assert_abs_diff_eq!(s.mae, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.rmse, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let p = score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((p.r2, p.mae, p.rmse), (Some(1.0), 0.0, 0.0));
        assert_eq!(score(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap().r2, Some(0.0));
        assert_eq!(score(&[1.0, 2.0], &[5.0, 5.0]).unwrap().r2, None);
    }

    #[test]
    fn knn_hand_cases() {
        let x = vec![vec![0.0], vec![2.0]];
        let uni = Knn::fit(&x, &[10.0, 20.0], 2, Weighting::Uniform).unwrap();
        assert_eq!(uni.predict(&[1.0]), 15.0);
        let x = vec![vec![1.0], vec![-3.0]];
        let dist = Knn::fit(&x, &[10.0, 20.0], 2, Weighting::Distance).unwrap();
        assert_abs_diff_eq!(dist.predict(&[0.0]), 12.5, epsilon = 1e-12);
        let one = Knn::fit(&x, &[10.0, 20.0], 1, Weighting::Distance).unwrap();
        assert_eq!(one.predict(&[-3.0]), 20.0);
        assert!(Knn::fit(&x, &[10.0, 20.0], 3, Weighting::Uniform).is_err());
    }

    #[test]
    fn single_unbagged_tree_memorizes() {
        let (x, y) = poly_data(150, 1);
        let params = ForestParams { n_estimators: 1, max_depth: None, bootstrap: false, feature_fraction: 1.0 / 3.0 };
        let f = Forest::fit(&x, &y, params, 5).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert_eq!(f.predict(r), *t);
        }
    }

    #[test]
    fn irrelevant_feature_is_never_split() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for a in 0..6 {
            for b in 0..6 {
                x.push(vec![a as f64, b as f64]);
                y.push(a as f64);
            }
        }
        let params = ForestParams { n_estimators: 5, max_depth: None, bootstrap: false, feature_fraction: 1.0 };
        let f = Forest::fit(&x, &y, params, 3).unwrap();
        let imp = f.feature_importance(2);
        assert_eq!(imp[1], 0.0);
        assert_eq!(imp[0], 1.0);
    }

    #[test]
    fn thresholds_lie_between_training_values() {
        let (x, y) = poly_data(120, 2);
        let f = Forest::fit(&x, &y, ForestParams::new(10, None), 1).unwrap();
        for t in &f.trees {
            for (node, &feat) in t.feature.iter().enumerate() {
                if feat < 0 {
                    continue;
                }
                let thr = t.threshold[node];
                let below = x.iter().any(|r| r[feat as usize] <= thr);
                let above = x.iter().any(|r| r[feat as usize] > thr);
                assert!(below && above);
            }
        }
    }

    #[test]
    fn forest_beats_single_tree() {
        let (x, y) = poly_data(200, 7);
        let (tx, ty) = poly_data(200, 8);
        let eval = |m: &Forest| {
            let p: Vec<f64> = tx.iter().map(|r| m.predict(r)).collect();
            score(&p, &ty).unwrap().r2.unwrap()
        };
        let one = Forest::fit(&x, &y, ForestParams::new(1, None), 11).unwrap();
        let many = Forest::fit(&x, &y, ForestParams::new(100, None), 11).unwrap();
        assert!(eval(&many) > eval(&one));
    }

    #[test]
    fn truncation_equals_depth_limited_training() {
        let (x, y) = poly_data(300, 3);
        let full = Forest::fit(&x, &y, ForestParams::new(30, None), 9).unwrap();
        for d in [1, 3, 5, 10] {
            let direct = Forest::fit(&x, &y, ForestParams::new(12, Some(d)), 9).unwrap();
            assert_eq!(full.sub_forest(12, Some(d)).trees, direct.trees);
        }
    }

    #[test]
    fn grid_search_matches_direct_training() {
        let (x, y) = poly_data(250, 4);
        let (vx, vy) = poly_data(60, 5);
        let grid: Vec<Hyperparams> = [1, 3, 8]
            .iter()
            .flat_map(|&n| [None, Some(2), Some(6)].map(|d| Hyperparams::Forest { n_estimators: n, max_depth: d }))
            .collect();
        let res = grid_search(&x, &y, &vx, &vy, &grid, 21).unwrap();
        assert_eq!(res.fits, 9);
        for cell in &res.cells {
            let direct = cell.params.fit(&x, &y, 21).unwrap();
            let p: Vec<f64> = vx.iter().map(|r| direct.predict(r)).collect();
            assert_eq!(mae(&p, &vy), cell.validation_mae, "{:?}", cell.params);
        }
        let direct_best = res.best.fit(&x, &y, 21).unwrap();
        assert_eq!(direct_best, res.model);
    }

    #[test]
    fn knn_grid_counts_and_ties() {
        let (x, y) = poly_data(50, 6);
        let (vx, vy) = poly_data(10, 7);
        let grid: Vec<Hyperparams> = (1..=3)
            .flat_map(|k| [Weighting::Uniform, Weighting::Distance].map(|weighting| Hyperparams::Knn { k, weighting }))
            .collect();
        let res = grid_search(&x, &y, &vx, &vy, &grid, 0).unwrap();
        assert_eq!(res.fits, 6);
        for cell in &res.cells {
            let m = cell.params.fit(&x, &y, 0).unwrap();
            let p: Vec<f64> = vx.iter().map(|r| m.predict(r)).collect();
            assert_eq!(mae(&p, &vy), cell.validation_mae);
        }
        // a depth limit deeper than any tree ties with no limit; the first cell wins
        let tie = [
            Hyperparams::Forest { n_estimators: 3, max_depth: Some(60) },
            Hyperparams::Forest { n_estimators: 3, max_depth: None },
        ];
        let res = grid_search(&x, &y, &vx, &vy, &tie, 0).unwrap();
        assert_eq!(res.cells[0].validation_mae, res.cells[1].validation_mae);
        assert_eq!(res.best, tie[0]);
    }

    #[test]
    fn default_grids() {
        assert_eq!(forest_grid().len(), 40);
        assert_eq!(knn_grid().len(), 20);
        assert_eq!(forest_grid()[0], Hyperparams::Forest { n_estimators: 1, max_depth: None });
    }

    fn small_model() -> SurrogateModel {
        use crate::dataset::generate;
        use crate::sim::Fidelity;
        use std::sync::OnceLock;
        static DATA: OnceLock<Dataset> = OnceLock::new();
        let data = DATA.get_or_init(|| generate(Family::NoShading, Fidelity::Coarse, 1).unwrap());
        train(data, Output::Sda, Hyperparams::Forest { n_estimators: 10, max_depth: Some(8) }, &SplitSpec::default(), 7)
            .unwrap()
    }

    #[test]
    fn artifact_round_trip_predicts_identically() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = artifact_path(dir.path(), m.family(), m.output());
        m.save(&path).unwrap();
        let back = SurrogateModel::load(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let width = m.body.schema.len();
        for _ in 0..1000 {
            let v: Vec<f64> = (0..width).map(|_| rng.gen_range(-2.0..12.0)).collect();
            assert_eq!(back.predict(&v).to_bits(), m.predict(&v).to_bits());
        }
    }

    #[test]
    fn artifact_hash_ignores_timings_only() {
        let a = small_model();
        let b = small_model();
        assert_eq!(a.content_hash, b.content_hash);
        let mut c = a.clone();
        c.body.seed += 1;
        assert_ne!(body_hash(&c.body).unwrap(), a.content_hash);
    }

    #[test]
    fn load_refuses_wrong_version_and_tampering() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut old = m.clone();
        old.format_version = "shadekit-model/0".into();
        old.save(&path).unwrap();
        assert!(matches!(SurrogateModel::load(&path), Err(Error::VersionMismatch { .. })));
        let mut bad = m.clone();
        bad.body.scaler.ranges[0].max += 1.0;
        bad.save(&path).unwrap();
        assert!(matches!(SurrogateModel::load(&path), Err(Error::HashMismatch(_))));
        assert!(matches!(SurrogateModel::load(&dir.path().join("none.json")), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn report_is_consistent() {
        let m = small_model();
        let r = &m.report;
        assert_eq!(r.overfit_flag, r.val_test_gap > 0.5);
        assert!(r.train.r2.unwrap() > 0.9);
        assert_eq!(r.hyperparams, m.body.model.hyperparams());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn row_order_does_not_matter(seed in any::<u64>()) {
            let (x, y) = poly_data(80, 12);
            let mut ix: Vec<usize> = (0..x.len()).collect();
            ix.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let xs: Vec<Vec<f64>> = ix.iter().map(|&i| x[i].clone()).collect();
            let ys: Vec<f64> = ix.iter().map(|&i| y[i]).collect();
            let a = Forest::fit(&x, &y, ForestParams::new(5, None), 3).unwrap();
            let b = Forest::fit(&xs, &ys, ForestParams::new(5, None), 3).unwrap();
            prop_assert_eq!(a, b);
            let ka = Knn::fit(&x, &y, 4, Weighting::Distance).unwrap();
            let kb = Knn::fit(&xs, &ys, 4, Weighting::Distance).unwrap();
            prop_assert_eq!(ka.predict(&[0.3, 0.3, 0.3]), kb.predict(&[0.3, 0.3, 0.3]));
        }

        #[test]
        fn forest_prediction_ignores_tree_order(seed in any::<u64>()) {
            let (x, y) = poly_data(60, 13);
            let f = Forest::fit(&x, &y, ForestParams::new(9, None), 1).unwrap();
            let mut g = f.clone();
            g.trees.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for r in x.iter().take(10) {
                prop_assert_eq!(f.predict(r), g.predict(r));
            }
        }
    }
}
