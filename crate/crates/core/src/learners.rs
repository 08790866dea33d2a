//! Downstream classifiers and cross-validated accuracy.
//!
//! Three small learners stand in for the model `M` that consumes the
//! preprocessed features: multinomial logistic regression trained by SGD, a
//! CART tree (Gini impurity) and a bagged forest of such trees.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prims::{assemble_fit_transform, AssemblyError, PipelineTriple};
use crate::tabular::{FoldPlan, Table};

pub const LOGISTIC_EPOCHS: usize = 200;
pub const LOGISTIC_LR: f64 = 0.01;
pub const LOGISTIC_L2: f64 = 1e-4;
pub const TREE_MAX_DEPTH: usize = 8;
pub const TREE_MIN_LEAF: usize = 2;
pub const FOREST_TREES: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("training labels contain {0} class(es); at least 2 are required")]
    DegenerateTraining(usize),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("train has {train} columns but test has {test}")]
    WidthMismatch { train: usize, test: usize },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Invalid(#[from] AssemblyError),
    #[error("fold {fold}: {source}")]
    Learner { fold: usize, source: LearnerError },
}

impl EvalError {
    pub fn assembly(&self) -> Option<&AssemblyError> {
        match self {
            EvalError::Invalid(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "LogisticSGD")]
    LogisticSgd,
    DecisionTree,
    RandomForestLite,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [
        LearnerKind::LogisticSgd,
        LearnerKind::DecisionTree,
        LearnerKind::RandomForestLite,
    ];
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::LogisticSgd => "LogisticSGD",
            LearnerKind::DecisionTree => "DecisionTree",
            LearnerKind::RandomForestLite => "RandomForestLite",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "logisticsgd" | "logistic" | "sgd" => Ok(LearnerKind::LogisticSgd),
            "decisiontree" | "tree" | "cart" => Ok(LearnerKind::DecisionTree),
            "randomforestlite" | "randomforest" | "forest" => Ok(LearnerKind::RandomForestLite),
            _ => Err(format!("unknown learner `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, seed: u64) -> Self {
        LearnerSpec { kind, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: Some(TREE_MAX_DEPTH),
            min_leaf: TREE_MIN_LEAF,
            max_features: None,
        }
    }
}

fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

fn class_counts(y: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_classes];
    for &c in y {
        counts[c] += 1.0;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    /// Training row behind each sample position (bootstrap samples repeat rows).
    rows: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    /// `sorted[f]` lists sample positions; every node owns the same
    /// contiguous segment in each list, ordered by feature `f`.
    sorted: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
    rng: Option<ChaCha8Rng>,
}

impl TreeBuilder<'_> {
    fn value(&self, pos: u32, f: usize) -> f64 {
        self.x[[self.rows[pos as usize], f]]
    }

    fn label(&self, pos: u32) -> usize {
        self.y[self.rows[pos as usize]]
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let n = hi - lo;
        let mut counts = vec![0.0; self.n_classes];
        for &p in &self.sorted[0][lo..hi] {
            counts[self.label(p)] += 1.0;
        }
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));
        if pure || depth_done || n < 2 * self.params.min_leaf {
            return id;
        }

        let n_features = self.sorted.len();
        let features: Vec<usize> = match (self.params.max_features, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < n_features => {
                let mut all: Vec<usize> = (0..n_features).collect();
                all.shuffle(rng);
                all.truncate(m.max(1));
                all.sort_unstable();
                all
            }
            _ => (0..n_features).collect(),
        };

        // maximize sum_l/n_l + sum_r/n_r, the Gini criterion up to constants
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(f64, usize, usize, f64)> = None;
        let total_sq: f64 = counts.iter().map(|c| c * c).sum();
        for &f in &features {
            let seg = &self.sorted[f][lo..hi];
            let mut left = vec![0.0; self.n_classes];
            let mut right = counts.clone();
            let (mut sq_l, mut sq_r) = (0.0, total_sq);
            for i in 1..n {
                let c = self.label(seg[i - 1]);
                sq_l += 2.0 * left[c] + 1.0;
                sq_r -= 2.0 * right[c] - 1.0;
                left[c] += 1.0;
                right[c] -= 1.0;
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let a = self.value(seg[i - 1], f);
                let b = self.value(seg[i], f);
                if a == b {
                    continue;
                }
                let score = sq_l / i as f64 + sq_r / (n - i) as f64;
                if best.is_none_or(|(s, ..)| score > s) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((score, f, i, threshold));
                }
            }
        }
        let Some((_, feature, split, threshold)) = best else {
            return id;
        };

        for (i, &p) in self.sorted[feature][lo..hi].iter().enumerate() {
            self.goes_left[p as usize] = i < split;
        }
        for f in 0..n_features {
            let seg = &mut self.sorted[f][lo..hi];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let p = seg[i];
                if self.goes_left[p as usize] {
                    seg[w] = p;
                    w += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }

        let left = self.build(lo, lo + split, depth + 1);
        let right = self.build(lo + split, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Fits on the rows listed in `sample` (repeats allowed).
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        sample: &[usize],
        params: TreeParams,
        seed: Option<u64>,
    ) -> Self {
        let m = sample.len();
        let sorted = (0..x.ncols())
            .map(|f| {
                let mut order: Vec<u32> = (0..m as u32).collect();
                order.sort_by(|&a, &b| {
                    x[[sample[a as usize], f]]
                        .total_cmp(&x[[sample[b as usize], f]])
                        .then(a.cmp(&b))
                });
                order
            })
            .collect::<Vec<_>>();
        let mut builder = TreeBuilder {
            x,
            y,
            rows: sample,
            n_classes,
            params,
            sorted: if x.ncols() == 0 {
                vec![(0..m as u32).collect()]
            } else {
                sorted
            },
            goes_left: vec![false; m],
            scratch: Vec::with_capacity(m),
            nodes: Vec::new(),
            rng: seed.map(ChaCha8Rng::seed_from_u64),
        };
        if x.ncols() == 0 {
            let counts = class_counts(&sample.iter().map(|&r| y[r]).collect::<Vec<_>>(), n_classes);
            return DecisionTree {
                nodes: vec![Node::Leaf(majority(&counts))],
            };
        }
        builder.build(0, m, 0);
        DecisionTree {
            nodes: builder.nodes,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl RandomForest {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        n_trees: usize,
        seed: u64,
    ) -> Self {
        let n = x.nrows();
        let max_features = ((x.ncols() as f64).sqrt().floor() as usize).max(1);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let params = TreeParams {
                    max_features: Some(max_features),
                    ..TreeParams::default()
                };
                DecisionTree::fit(x, y, n_classes, &sample, params, Some(rng.random()))
            })
            .collect();
        RandomForest { trees, n_classes }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.rows()
            .into_iter()
            .map(|row| {
                let mut votes = vec![0.0; self.n_classes];
                for t in &self.trees {
                    votes[t.predict_row(row)] += 1.0;
                }
                majority(&votes)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LogisticSgd {
    weights: Array2<f64>,
    bias: Array1<f64>,
    fallback: usize,
}

impl LogisticSgd {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, seed: u64) -> Self {
        let (n, d) = x.dim();
        // CSR rows: one-hot blocks are mostly zeros
        let mut row_start = Vec::with_capacity(n + 1);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        row_start.push(0);
        for r in x.rows() {
            entries.extend(
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v)),
            );
            row_start.push(entries.len());
        }
        // weights = scale * v, so the L2 decay is one multiply per step
        let mut v = vec![0.0; d * n_classes];
        let mut scale = 1.0;
        let mut b = vec![0.0; n_classes];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut logits = vec![0.0; n_classes];
        let mut step = vec![0.0; n_classes];
        let decay = 1.0 - LOGISTIC_LR * LOGISTIC_L2;
        for _ in 0..LOGISTIC_EPOCHS {
            order.shuffle(&mut rng);
            for &i in &order {
                let xi = &entries[row_start[i]..row_start[i + 1]];
                logits.fill(0.0);
                for &(j, val) in xi {
                    let wj = &v[j * n_classes..(j + 1) * n_classes];
                    for (l, w) in logits.iter_mut().zip(wj) {
                        *l += w * val;
                    }
                }
                let mut max = f64::NEG_INFINITY;
                for (l, bc) in logits.iter_mut().zip(&b) {
                    *l = scale * *l + bc;
                    max = max.max(*l);
                }
                let mut sum = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    sum += *l;
                }
                scale *= decay;
                let inv_scale = 1.0 / scale;
                for c in 0..n_classes {
                    let g = logits[c] / sum - if y[i] == c { 1.0 } else { 0.0 };
                    b[c] -= LOGISTIC_LR * g;
                    step[c] = LOGISTIC_LR * g * inv_scale;
                }
                for &(j, val) in xi {
                    let wj = &mut v[j * n_classes..(j + 1) * n_classes];
                    for (w, st) in wj.iter_mut().zip(&step) {
                        *w -= st * val;
                    }
                }
                if scale < 1e-6 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    scale = 1.0;
                }
            }
        }
        v.iter_mut().for_each(|w| *w *= scale);
        LogisticSgd {
            // v is feature-major
            weights: Array2::from_shape_vec((d, n_classes), v)
                .expect("sized")
                .reversed_axes(),
            bias: Array1::from(b),
            fallback: majority(&class_counts(y, n_classes)),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let diverged = self
            .weights
            .iter()
            .chain(self.bias.iter())
            .any(|v| !v.is_finite());
        if diverged {
            return vec![self.fallback; x.nrows()];
        }
        let scores = x.dot(&self.weights.t()) + &self.bias;
        scores
            .rows()
            .into_iter()
            .map(|r| majority(&r.to_vec()))
            .collect()
    }
}

/// Trains `spec` on `(train_x, train_y)` and predicts `test_x`.
pub fn fit_predict(
    spec: &LearnerSpec,
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    n_classes: usize,
    test_x: ArrayView2<f64>,
) -> Result<Vec<usize>, LearnerError> {
    if train_x.nrows() == 0 {
        return Err(LearnerError::EmptyTraining);
    }
    if train_x.ncols() != test_x.ncols() {
        return Err(LearnerError::WidthMismatch {
            train: train_x.ncols(),
            test: test_x.ncols(),
        });
    }
    let present = class_counts(train_y, n_classes)
        .iter()
        .filter(|&&c| c > 0.0)
        .count();
    if present < 2 {
        return Err(LearnerError::DegenerateTraining(present));
    }
    Ok(match spec.kind {
        LearnerKind::LogisticSgd => {
            LogisticSgd::fit(train_x, train_y, n_classes, spec.seed).predict(test_x)
        }
        LearnerKind::DecisionTree => {
            let all: Vec<usize> = (0..train_x.nrows()).collect();
            DecisionTree::fit(
                train_x,
                train_y,
                n_classes,
                &all,
                TreeParams::default(),
                None,
            )
            .predict(test_x)
        }
        LearnerKind::RandomForestLite => {
            RandomForest::fit(train_x, train_y, n_classes, FOREST_TREES, spec.seed).predict(test_x)
        }
    })
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean_accuracy: f64,
    pub per_fold: Vec<f64>,
    pub learner: LearnerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub mean_accuracy: f64,
    pub per_learner: Vec<EvalResult>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Cross-validated accuracy of every learner on the same fold matrices.
///
/// Pipelines are fit on each fold's training rows only. An invalid pipeline in
/// any fold fails the whole evaluation.
pub fn evaluate_suite(
    table: &Table,
    spec_per_feature: &[PipelineTriple],
    learners: &[LearnerSpec],
    plan: &FoldPlan,
    onehot_cap: usize,
) -> Result<SuiteResult, EvalError> {
    let y = &table.target.codes;
    let n_classes = table.target.n_classes();
    let folds: Vec<Result<Vec<f64>, EvalError>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train = plan.train_rows(fold);
            let test = plan.test_rows(fold);
            let (train_m, test_m) =
                assemble_fit_transform(table, spec_per_feature, &train, &[&test], onehot_cap)?;
            let train_y: Vec<usize> = train.iter().map(|&r| y[r]).collect();
            let test_y: Vec<usize> = test.iter().map(|&r| y[r]).collect();
            learners
                .iter()
                .map(|spec| {
                    let pred = fit_predict(
                        spec,
                        train_m.matrix.view(),
                        &train_y,
                        n_classes,
                        test_m[0].matrix.view(),
                    )
                    .map_err(|source| EvalError::Learner { fold, source })?;
                    Ok(accuracy(&pred, &test_y))
                })
                .collect()
        })
        .collect();
    // first failing fold wins, independent of thread scheduling
    let mut scores = Vec::with_capacity(plan.k);
    for f in folds {
        scores.push(f?);
    }
    let per_learner: Vec<EvalResult> = learners
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let per_fold: Vec<f64> = scores.iter().map(|s| s[i]).collect();
            EvalResult {
                mean_accuracy: mean(&per_fold),
                per_fold,
                learner: *spec,
            }
        })
        .collect();
    let suite_mean = mean(
        &per_learner
            .iter()
            .map(|r| r.mean_accuracy)
            .collect::<Vec<_>>(),
    );
    Ok(SuiteResult {
        mean_accuracy: suite_mean,
        per_learner,
    })
}

/// Cross-validated accuracy `L` for one learner.
pub fn evaluate_l(
    table: &Table,
    spec_per_feature: &[PipelineTriple],
    learner: &LearnerSpec,
    plan: &FoldPlan,
    onehot_cap: usize,
) -> Result<EvalResult, EvalError> {
    let suite = evaluate_suite(
        table,
        spec_per_feature,
        std::slice::from_ref(learner),
        plan,
        onehot_cap,
    )?;
    Ok(suite.per_learner.into_iter().next().unwrap())
}
