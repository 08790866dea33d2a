//! Feature clustering: k-means pseudo-labels, the clustering policy network,
//! stochastic assignment and the REINFORCE update with a running-mean baseline.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{
    adam_step, cross_entropy_loss, onehot, Activation, AdamState, DenseNet, NeuralError, DEFAULT_LR,
};

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITERS: usize = 100;
pub const DEFAULT_PRETRAIN_EPOCHS: usize = 200;
/// Pretraining stops early once this share of pseudo-labels is reproduced.
pub const PRETRAIN_TARGET_AGREEMENT: f64 = 0.99;
pub const POLICY_HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("cluster count must be at least 1, got {0}")]
    BadK(usize),
    #[error("assignment was not sampled from the policy ({0:?})")]
    StaleAssignment(AssignmentSource),
    #[error("assignment has {found} labels for {expected} features")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignmentSource {
    Sampled,
    Argmax,
    KMeans,
    Random,
    Heuristic,
}

/// Feature to cluster map. Labels are zero-based here; reports and JSON
/// artifacts show them one-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub source: AssignmentSource,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize, source: AssignmentSource) -> Self {
        debug_assert!(labels.iter().all(|&c| c < k));
        ClusterAssignment { labels, k, source }
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&j| self.labels[j] == cluster)
            .collect()
    }

    /// `{"feature_name": cluster_id}` with one-based ids.
    pub fn to_named_map(&self, names: &[&str]) -> BTreeMap<String, usize> {
        names
            .iter()
            .zip(&self.labels)
            .map(|(n, &c)| (n.to_string(), c + 1))
            .collect()
    }

    pub fn uniform_random<R: Rng>(d: usize, k: usize, rng: &mut R) -> Self {
        let labels = (0..d).map(|_| rng.random_range(0..k)).collect();
        ClusterAssignment::new(labels, k, AssignmentSource::Random)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn plus_plus_init<R: Rng>(points: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

#[allow(clippy::needless_range_loop)]
fn lloyd(points: &Array2<f64>, mut centroids: Array2<f64>) -> (Vec<usize>, Array2<f64>, f64) {
    let (n, dim) = points.dim();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(points.row(i), centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }

        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &points.row(i));
            counts[labels[i]] += 1;
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                centroids
                    .row_mut(c)
                    .assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // reseed to the point farthest from its own centroid
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| {
                        sq_dist(points.row(a), centroids.row(labels[a]))
                            .total_cmp(&sq_dist(points.row(b), centroids.row(labels[b])))
                            .then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                taken[far] = true;
                centroids.row_mut(c).assign(&points.row(far));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(labels[i])))
        .sum();
    (labels, centroids, inertia)
}

/// k-means++ seeded Lloyd iterations, best of [`KMEANS_RESTARTS`] runs.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> Result<KMeansFit, ClusterError> {
    if k < 1 {
        return Err(ClusterError::BadK(k));
    }
    let n = points.nrows();
    if n == 0 {
        return Ok(KMeansFit {
            assignment: ClusterAssignment::new(vec![], k, AssignmentSource::KMeans),
            centroids: Array2::zeros((k, points.ncols())),
            inertia: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, Array2<f64>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = plus_plus_init(points, k, &mut rng);
        let run = lloyd(points, init);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (labels, centroids, inertia) = best.unwrap();
    Ok(KMeansFit {
        assignment: ClusterAssignment::new(labels, k, AssignmentSource::KMeans),
        centroids,
        inertia,
    })
}

/// The clustering network: embedding row in, distribution over clusters out.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub net: DenseNet,
    pub adam: AdamState,
}

impl PolicyNet {
    /// Four dense layers, `input -> 128 -> 128 -> 128 -> k`, softmax output.
    pub fn new(input_dim: usize, k: usize, seed: u64) -> Self {
        Self::with_hidden(input_dim, POLICY_HIDDEN, k, seed, DEFAULT_LR)
    }

    pub fn with_hidden(input_dim: usize, hidden: usize, k: usize, seed: u64, lr: f64) -> Self {
        let net = DenseNet::new(
            &[input_dim, hidden, hidden, hidden, k],
            Activation::Rectifier,
            Activation::SoftmaxOutput,
            seed,
        );
        let adam = AdamState::new(&net, lr);
        PolicyNet { net, adam }
    }

    pub fn k(&self) -> usize {
        self.net.out_dim()
    }

    pub fn probabilities(&self, embedding: &Array2<f64>) -> Result<Array2<f64>, ClusterError> {
        Ok(self.net.predict(embedding)?)
    }
}

pub fn argmax_labels(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                // strict comparison keeps the lowest id on ties
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn agreement(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs_run: usize,
    pub agreement: f64,
}

/// Supervised initialization of the policy on k-means pseudo-labels.
pub fn pretrain_policy(
    policy: &mut PolicyNet,
    embedding: &Array2<f64>,
    pseudo_labels: &[usize],
    epochs: usize,
) -> Result<PretrainReport, ClusterError> {
    if pseudo_labels.len() != embedding.nrows() {
        return Err(ClusterError::LengthMismatch {
            expected: embedding.nrows(),
            found: pseudo_labels.len(),
        });
    }
    let targets = onehot(pseudo_labels, policy.k());
    let mut epochs_run = 0;
    loop {
        let acts = policy.net.forward(embedding)?;
        let agree = agreement(&argmax_labels(acts.output()), pseudo_labels);
        if epochs_run == epochs || agree >= PRETRAIN_TARGET_AGREEMENT {
            return Ok(PretrainReport {
                epochs_run,
                agreement: agree,
            });
        }
        let (_, grad) = cross_entropy_loss(acts.output(), &targets)?;
        let grads = policy.net.backward(&acts, &grad)?;
        adam_step(&mut policy.adam, &mut policy.net, &grads)?;
        epochs_run += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    Sampled,
    Argmax,
}

pub fn sample_categorical<R: Rng>(probs: ArrayView1<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    // rounding left u above the total mass; take the last non-zero entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn sample_assignment<R: Rng>(
    policy: &PolicyNet,
    embedding: &Array2<f64>,
    rng: &mut R,
    mode: SampleMode,
) -> Result<ClusterAssignment, ClusterError> {
    let probs = policy.probabilities(embedding)?;
    let k = policy.k();
    Ok(match mode {
        SampleMode::Argmax => {
            ClusterAssignment::new(argmax_labels(&probs), k, AssignmentSource::Argmax)
        }
        SampleMode::Sampled => {
            let labels = probs
                .rows()
                .into_iter()
                .map(|row| sample_categorical(row, rng))
                .collect();
            ClusterAssignment::new(labels, k, AssignmentSource::Sampled)
        }
    })
}

/// Past rewards; the baseline is their arithmetic mean.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardState {
    pub history: Vec<f64>,
}

impl RewardState {
    pub fn baseline(&self) -> f64 {
        if self.history.is_empty() {
            0.0
        } else {
            self.history.iter().sum::<f64>() / self.history.len() as f64
        }
    }
}

/// Gradient of `-advantage * sum_j log p(c_j | e_j)` with respect to the logits.
pub fn reinforce_logit_gradient(
    probs: &Array2<f64>,
    labels: &[usize],
    advantage: f64,
) -> Array2<f64> {
    (probs - &onehot(labels, probs.ncols())) * advantage
}

/// One REINFORCE step. Returns the advantage `r_perf - baseline`.
///
/// The baseline is the mean of rewards seen before this call; `r_perf` is
/// appended afterwards. A zero advantage leaves the parameters untouched.
pub fn reinforce_update(
    policy: &mut PolicyNet,
    embedding: &Array2<f64>,
    assignment: &ClusterAssignment,
    rewards: &mut RewardState,
    r_perf: f64,
) -> Result<f64, ClusterError> {
    if assignment.source != AssignmentSource::Sampled {
        return Err(ClusterError::StaleAssignment(assignment.source));
    }
    if assignment.labels.len() != embedding.nrows() {
        return Err(ClusterError::LengthMismatch {
            expected: embedding.nrows(),
            found: assignment.labels.len(),
        });
    }
    let advantage = r_perf - rewards.baseline();
    if advantage != 0.0 {
        let acts = policy.net.forward(embedding)?;
        let grad = reinforce_logit_gradient(acts.output(), &assignment.labels, advantage);
        let grads = policy.net.backward(&acts, &grad)?;
        adam_step(&mut policy.adam, &mut policy.net, &grads)?;
    }
    rewards.history.push(r_perf);
    Ok(advantage)
}
