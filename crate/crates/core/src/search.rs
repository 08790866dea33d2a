//! Bi-level search: cluster assignments on the outside, random pipeline search
//! per cluster on the inside, plus the three comparison strategies.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    kmeans, pretrain_policy, reinforce_update, sample_assignment, AssignmentSource,
    ClusterAssignment, ClusterError, PolicyNet, PretrainReport, RewardState, SampleMode,
    DEFAULT_PRETRAIN_EPOCHS, POLICY_HIDDEN,
};
use crate::embed::{embed_table, EmbedConfig};
use crate::learners::{evaluate_suite, EvalError, LearnerKind, LearnerSpec, SuiteResult};
use crate::neural::{DenseNet, DEFAULT_LR};
use crate::prims::{
    ColumnClass, Encoder, Imputer, MemoKey, PipelineTriple, Scaler, SearchSpace, DEFAULT_ONEHOT_CAP,
};
use crate::tabular::{column_profile, make_folds, ColumnKind, FoldPlan, Table, TableError};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_OUTER_ITERS: usize = 50;
pub const DEFAULT_INNER_ITERS: usize = 10;
pub const DEFAULT_FOLDS: usize = 10;

/// Largest per-feature product the brute-force oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// RNG stream index reserved for the assignment draw of an outer iteration.
const ASSIGN_STREAM: u64 = u32::MAX as u64;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("cluster count must be at least 1, got {0}")]
    BadK(usize),
    #[error("table has no feature columns")]
    NoFeatures,
    #[error("the {0} learner list is empty")]
    NoLearners(&'static str),
    #[error("no pipeline left for column class {class}: {diagnosis}")]
    NoValidPipeline {
        class: ColumnClass,
        diagnosis: String,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("exhaustive search over {0} combinations exceeds the limit of {ORACLE_LIMIT}")]
    OracleTooLarge(u128),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "clusterp3s")]
    ClusterP3S,
    #[serde(rename = "heuristic")]
    Heuristic,
    #[serde(rename = "randcluster")]
    RandCluster,
    #[serde(rename = "kmeans-variant")]
    KMeansVariant,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ClusterP3S,
        Method::Heuristic,
        Method::RandCluster,
        Method::KMeansVariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ClusterP3S => "clusterp3s",
            Method::Heuristic => "heuristic",
            Method::RandCluster => "randcluster",
            Method::KMeansVariant => "kmeans-variant",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected clusterp3s, heuristic, randcluster or kmeans-variant)"))
    }
}

/// Which imputers, encoders and scalers the inner search may combine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub imputers: Vec<Imputer>,
    pub encoders: Vec<Encoder>,
    pub scalers: Vec<Scaler>,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec {
            imputers: Imputer::ALL.to_vec(),
            encoders: Encoder::ALL.to_vec(),
            scalers: Scaler::ALL.to_vec(),
        }
    }
}

impl SpaceSpec {
    pub fn build(&self) -> SearchSpace {
        SearchSpace::restricted(&self.imputers, &self.encoders, &self.scalers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub k: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub seed: u64,
    /// Search-time reward is the mean accuracy over these learners.
    pub reward_learners: Vec<LearnerKind>,
    pub eval_learners: Vec<LearnerKind>,
    pub folds: usize,
    pub onehot_cap: usize,
    pub space: SpaceSpec,
    /// Inner trials sampled and evaluated together; 1 gives strict memo ordering.
    pub workers: usize,
    pub embed: EmbedConfig,
    pub policy_hidden: usize,
    pub policy_lr: f64,
    pub pretrain_epochs: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: DEFAULT_K,
            outer_iters: DEFAULT_OUTER_ITERS,
            inner_iters: DEFAULT_INNER_ITERS,
            seed: 0,
            reward_learners: vec![LearnerKind::DecisionTree],
            eval_learners: LearnerKind::ALL.to_vec(),
            folds: DEFAULT_FOLDS,
            onehot_cap: DEFAULT_ONEHOT_CAP,
            space: SpaceSpec::default(),
            workers: 1,
            embed: EmbedConfig::default(),
            policy_hidden: POLICY_HIDDEN,
            policy_lr: DEFAULT_LR,
            pretrain_epochs: DEFAULT_PRETRAIN_EPOCHS,
        }
    }
}

impl SearchConfig {
    pub fn reward_specs(&self) -> Vec<LearnerSpec> {
        self.reward_learners
            .iter()
            .map(|&k| LearnerSpec::new(k, self.seed))
            .collect()
    }

    pub fn eval_specs(&self) -> Vec<LearnerSpec> {
        self.eval_learners
            .iter()
            .map(|&k| LearnerSpec::new(k, self.seed))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Inner trial under a sampled (or random / frozen) assignment.
    Search,
    /// Inner trial under the trained policy's argmax assignment.
    Final,
    /// The one evaluation of the heuristic strategy.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub phase: Phase,
    pub assignment: ClusterAssignment,
    /// Indexed by cluster id; `None` for clusters without members.
    pub pipelines: Vec<Option<PipelineTriple>>,
    /// `None` marks an invalid trial.
    pub score: Option<f64>,
    pub invalid_reason: Option<String>,
    pub invalid_key: Option<MemoKey>,
    pub wall_time: f64,
}

impl TrialRecord {
    pub fn per_feature(&self) -> Vec<Option<PipelineTriple>> {
        self.assignment
            .labels
            .iter()
            .map(|&c| self.pipelines[c])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub outer_iter: usize,
    pub best_score: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BestOrigin {
    Trial {
        outer_iter: usize,
        inner_iter: usize,
    },
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPipeline {
    pub assignment: ClusterAssignment,
    pub pipelines: Vec<Option<PipelineTriple>>,
    pub per_feature: Vec<PipelineTriple>,
    /// Cross-validated accuracy under the reward learners.
    pub score: f64,
    pub origin: BestOrigin,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub config: SearchConfig,
    pub feature_names: Vec<String>,
    pub feature_classes: Vec<ColumnClass>,
    pub k_effective: usize,
    pub best: BestPipeline,
    /// Set when no trial was valid and the heuristic pipeline stands in.
    pub fallback: bool,
    pub trials: Vec<TrialRecord>,
    pub learning_curve: Vec<CurvePoint>,
    /// The best pipeline re-scored under every evaluation learner.
    pub suite: SuiteResult,
    pub memo: Vec<MemoKey>,
    pub pretrain: Option<PretrainReport>,
    pub rewards: Vec<f64>,
    pub policy: Option<DenseNet>,
}

impl RunResult {
    pub fn valid_trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.score.is_some())
    }
}

/// Rule-based pipeline for one column: mean/most-frequent imputation when
/// needed, MaxAbs for numbers, OneHot for categories.
///
/// Categorical columns whose cardinality exceeds `onehot_cap` get Ordinal, and
/// columns with no observed value skip imputation, so the rule never produces
/// an invalid pipeline.
pub fn heuristic_triple(col: &crate::tabular::Column, onehot_cap: usize) -> PipelineTriple {
    let profile = column_profile(col);
    let missing = profile.missing_count > 0;
    match col.kind {
        ColumnKind::Numeric => PipelineTriple::new(
            if missing {
                Imputer::Mean
            } else {
                Imputer::None
            },
            Encoder::None,
            Scaler::MaxAbs,
        ),
        ColumnKind::NonNumeric => PipelineTriple::new(
            if missing && profile.cardinality > 0 {
                Imputer::MostFrequentValue
            } else {
                Imputer::None
            },
            if profile.cardinality > onehot_cap {
                Encoder::Ordinal
            } else {
                Encoder::OneHot
            },
            Scaler::None,
        ),
    }
}

/// Groups features by their heuristic triple, first appearance first.
pub fn heuristic_assignment(
    table: &Table,
    onehot_cap: usize,
) -> (ClusterAssignment, Vec<Option<PipelineTriple>>) {
    let mut distinct: Vec<PipelineTriple> = Vec::new();
    let labels = table
        .columns
        .iter()
        .map(|col| {
            let t = heuristic_triple(col, onehot_cap);
            match distinct.iter().position(|&d| d == t) {
                Some(i) => i,
                None => {
                    distinct.push(t);
                    distinct.len() - 1
                }
            }
        })
        .collect();
    let k = distinct.len().max(1);
    (
        ClusterAssignment::new(labels, k, AssignmentSource::Heuristic),
        distinct.into_iter().map(Some).collect(),
    )
}

fn stream_rng(seed: u64, outer: usize, inner: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((outer as u64) << 32) | inner);
    rng
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

enum Draw {
    Ok(Vec<Option<PipelineTriple>>),
    /// Some cluster mixes column classes whose allowed sets do not intersect.
    Infeasible(usize),
}

struct Runner<'a> {
    table: &'a Table,
    config: &'a SearchConfig,
    classes: Vec<ColumnClass>,
    plan: FoldPlan,
    reward: Vec<LearnerSpec>,
    space: SearchSpace,
    trials: Vec<TrialRecord>,
    curve: Vec<CurvePoint>,
    best_so_far: Option<f64>,
    started: Instant,
}

impl<'a> Runner<'a> {
    fn new(table: &'a Table, config: &'a SearchConfig) -> Result<Self, SearchError> {
        if table.n_features() == 0 {
            return Err(SearchError::NoFeatures);
        }
        if config.reward_learners.is_empty() {
            return Err(SearchError::NoLearners("reward"));
        }
        if config.eval_learners.is_empty() {
            return Err(SearchError::NoLearners("evaluation"));
        }
        let classes = table
            .columns
            .iter()
            .map(|c| ColumnClass::of_column(c, config.onehot_cap))
            .collect();
        Ok(Runner {
            table,
            config,
            classes,
            plan: make_folds(table, config.folds, config.seed)?,
            reward: config.reward_specs(),
            space: config.space.build(),
            trials: Vec::new(),
            curve: Vec::new(),
            best_so_far: None,
            started: Instant::now(),
        })
    }

    fn check_classes(&self) -> Result<(), SearchError> {
        let distinct: BTreeSet<ColumnClass> = self.classes.iter().copied().collect();
        for class in distinct {
            if self.space.candidates(&[class]).is_empty() {
                let excluded: Vec<String> = self
                    .space
                    .invalid_memo
                    .iter()
                    .filter(|k| k.class == class)
                    .map(|k| k.primitive.to_string())
                    .collect();
                return Err(SearchError::NoValidPipeline {
                    class,
                    diagnosis: format!(
                        "{} candidate triple(s), excluded primitives: [{}]",
                        self.space.triples.len(),
                        excluded.join(", ")
                    ),
                });
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, assignment: &ClusterAssignment, rng: &mut R) -> Draw {
        let mut pipelines = vec![None; assignment.k];
        for (c, slot) in pipelines.iter_mut().enumerate() {
            let members = assignment.members(c);
            if members.is_empty() {
                continue;
            }
            let member_classes: BTreeSet<ColumnClass> =
                members.iter().map(|&j| self.classes[j]).collect();
            let member_classes: Vec<ColumnClass> = member_classes.into_iter().collect();
            let candidates = self.space.candidates(&member_classes);
            if candidates.is_empty() {
                return Draw::Infeasible(c);
            }
            *slot = Some(candidates[rng.random_range(0..candidates.len())]);
        }
        Draw::Ok(pipelines)
    }

    fn evaluate(
        &self,
        per_feature: &[PipelineTriple],
    ) -> (Option<f64>, Option<String>, Option<MemoKey>) {
        match evaluate_suite(
            self.table,
            per_feature,
            &self.reward,
            &self.plan,
            self.config.onehot_cap,
        ) {
            Ok(r) => (Some(r.mean_accuracy), None, None),
            Err(e) => {
                let key = e.assembly().and_then(|a| a.memo_key());
                (None, Some(e.to_string()), key)
            }
        }
    }

    /// Random search over per-cluster pipelines; returns the best valid score.
    fn inner_loop(
        &mut self,
        outer: usize,
        assignment: &ClusterAssignment,
        phase: Phase,
    ) -> Result<Option<f64>, SearchError> {
        let mut best: Option<f64> = None;
        let inner_iters = self.config.inner_iters;
        let batch_size = self.config.workers.max(1);
        let mut j = 0;
        while j < inner_iters {
            self.check_classes()?;
            let batch: Vec<(usize, Draw)> = (j..(j + batch_size).min(inner_iters))
                .map(|inner| {
                    let mut rng = stream_rng(self.config.seed, outer, inner as u64);
                    (inner, self.draw(assignment, &mut rng))
                })
                .collect();
            j += batch.len();

            let this = &*self;
            let evaluate_one = |(inner, draw): &(usize, Draw)| {
                let t0 = Instant::now();
                let (pipelines, (score, reason, key)) = match draw {
                    Draw::Ok(p) => {
                        let per_feature: Vec<PipelineTriple> = assignment
                            .labels
                            .iter()
                            .map(|&c| p[c].expect("member cluster"))
                            .collect();
                        (p.clone(), this.evaluate(&per_feature))
                    }
                    Draw::Infeasible(c) => (
                        vec![None; assignment.k],
                        (
                            None,
                            Some(format!(
                                "cluster {} has no pipeline allowed for all its columns",
                                c + 1
                            )),
                            None,
                        ),
                    ),
                };
                TrialRecord {
                    outer_iter: outer,
                    inner_iter: *inner,
                    phase,
                    assignment: assignment.clone(),
                    pipelines,
                    score,
                    invalid_reason: reason,
                    invalid_key: key,
                    wall_time: t0.elapsed().as_secs_f64(),
                }
            };
            let records: Vec<TrialRecord> = if batch.len() > 1 {
                batch.par_iter().map(evaluate_one).collect()
            } else {
                batch.iter().map(evaluate_one).collect()
            };

            for rec in records {
                if let Some(key) = rec.invalid_key {
                    if self.space.memo_record(key.primitive, key.class) {
                        debug!("memo: excluding {key}");
                    }
                }
                if let Some(s) = rec.score {
                    if best.is_none_or(|b| s > b) {
                        best = Some(s);
                    }
                    if self.best_so_far.is_none_or(|b| s > b) {
                        self.best_so_far = Some(s);
                    }
                }
                self.trials.push(rec);
            }
        }
        Ok(best)
    }

    fn close_outer(&mut self, outer: usize) {
        self.curve.push(CurvePoint {
            outer_iter: outer,
            best_score: self.best_so_far,
            wall_time: self.started.elapsed().as_secs_f64(),
        });
    }

    fn finish(
        self,
        method: Method,
        k_effective: usize,
        pretrain: Option<PretrainReport>,
        rewards: Vec<f64>,
        policy: Option<DenseNet>,
    ) -> Result<RunResult, SearchError> {
        // strict comparison: earliest trial wins ties
        let mut best_trial: Option<&TrialRecord> = None;
        for t in &self.trials {
            if let Some(s) = t.score {
                if best_trial.is_none_or(|b| s > b.score.unwrap()) {
                    best_trial = Some(t);
                }
            }
        }
        let (best, fallback) = match best_trial {
            Some(t) => (
                BestPipeline {
                    assignment: t.assignment.clone(),
                    pipelines: t.pipelines.clone(),
                    per_feature: t.per_feature().into_iter().map(|p| p.unwrap()).collect(),
                    score: t.score.unwrap(),
                    origin: BestOrigin::Trial {
                        outer_iter: t.outer_iter,
                        inner_iter: t.inner_iter,
                    },
                },
                false,
            ),
            None => {
                if method != Method::Heuristic {
                    warn!("no valid trial; reporting the heuristic pipeline instead");
                }
                (self.heuristic_best()?, true)
            }
        };
        let suite = evaluate_suite(
            self.table,
            &best.per_feature,
            &self.config.eval_specs(),
            &self.plan,
            self.config.onehot_cap,
        )?;
        Ok(RunResult {
            method,
            config: self.config.clone(),
            feature_names: self
                .table
                .feature_names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            feature_classes: self.classes,
            k_effective,
            best,
            fallback,
            trials: self.trials,
            learning_curve: self.curve,
            suite,
            memo: self.space.invalid_memo.into_iter().collect(),
            pretrain,
            rewards,
            policy,
        })
    }

    fn heuristic_best(&self) -> Result<BestPipeline, SearchError> {
        let (assignment, pipelines) = heuristic_assignment(self.table, self.config.onehot_cap);
        let per_feature: Vec<PipelineTriple> = assignment
            .labels
            .iter()
            .map(|&c| pipelines[c].unwrap())
            .collect();
        let r = evaluate_suite(
            self.table,
            &per_feature,
            &self.reward,
            &self.plan,
            self.config.onehot_cap,
        )?;
        Ok(BestPipeline {
            assignment,
            pipelines,
            per_feature,
            score: r.mean_accuracy,
            origin: BestOrigin::Heuristic,
        })
    }
}

fn effective_k(config: &SearchConfig, d: usize) -> Result<usize, SearchError> {
    if config.k == 0 {
        return Err(SearchError::BadK(0));
    }
    if config.k > d {
        warn!(
            "K = {} exceeds the {d} feature(s); clamping to {d}",
            config.k
        );
    }
    Ok(config.k.min(d))
}

/// The full method: embed columns, initialize the clustering policy from
/// k-means, then alternate sampled assignments, inner random search and
/// policy-gradient updates. A last inner loop runs on the argmax assignment.
pub fn run_clusterp3s(table: &Table, config: &SearchConfig) -> Result<RunResult, SearchError> {
    let mut run = Runner::new(table, config)?;
    let k = effective_k(config, table.n_features())?;
    if config.outer_iters == 0 {
        return run.finish(Method::ClusterP3S, k, None, Vec::new(), None);
    }

    let embedding = embed_table(table, config.embed, config.seed).condensed;
    let pseudo = kmeans(&embedding, k, sub_seed(config.seed, 1))?
        .assignment
        .labels;
    let mut policy = PolicyNet::with_hidden(
        embedding.ncols(),
        config.policy_hidden,
        k,
        sub_seed(config.seed, 2),
        config.policy_lr,
    );
    let pretrain = pretrain_policy(&mut policy, &embedding, &pseudo, config.pretrain_epochs)?;
    info!(
        "policy pretrained for {} epochs, agreement {:.3}",
        pretrain.epochs_run, pretrain.agreement
    );

    let mut rewards = RewardState::default();
    for outer in 0..config.outer_iters {
        let mut rng = stream_rng(config.seed, outer, ASSIGN_STREAM);
        let assignment = sample_assignment(&policy, &embedding, &mut rng, SampleMode::Sampled)?;
        let best = run.inner_loop(outer, &assignment, Phase::Search)?;
        // invalid-only iterations carry no reward signal
        if let Some(r_perf) = best {
            let adv = reinforce_update(&mut policy, &embedding, &assignment, &mut rewards, r_perf)?;
            debug!("outer {outer}: reward {r_perf:.4}, advantage {adv:+.4}");
        }
        run.close_outer(outer);
    }

    let mut rng = stream_rng(config.seed, config.outer_iters, ASSIGN_STREAM);
    let argmax = sample_assignment(&policy, &embedding, &mut rng, SampleMode::Argmax)?;
    run.inner_loop(config.outer_iters, &argmax, Phase::Final)?;
    run.close_outer(config.outer_iters);

    let history = rewards.history.clone();
    run.finish(
        Method::ClusterP3S,
        k,
        Some(pretrain),
        history,
        Some(policy.net),
    )
}

/// One evaluation of the rule-based pipelines; no search.
pub fn run_heuristic_p3(table: &Table, config: &SearchConfig) -> Result<RunResult, SearchError> {
    let mut run = Runner::new(table, config)?;
    let t0 = Instant::now();
    let (assignment, pipelines) = heuristic_assignment(table, config.onehot_cap);
    let per_feature: Vec<PipelineTriple> = assignment
        .labels
        .iter()
        .map(|&c| pipelines[c].unwrap())
        .collect();
    let (score, reason, key) = run.evaluate(&per_feature);
    if let Some(s) = score {
        run.best_so_far = Some(s);
    }
    let k = assignment.k;
    run.trials.push(TrialRecord {
        outer_iter: 0,
        inner_iter: 0,
        phase: Phase::Single,
        assignment,
        pipelines,
        score,
        invalid_reason: reason,
        invalid_key: key,
        wall_time: t0.elapsed().as_secs_f64(),
    });
    run.close_outer(0);
    run.finish(Method::Heuristic, k, None, Vec::new(), None)
}

/// Same loop as the full method with uniformly random assignments.
pub fn run_rand_cluster_p3(table: &Table, config: &SearchConfig) -> Result<RunResult, SearchError> {
    let mut run = Runner::new(table, config)?;
    let k = effective_k(config, table.n_features())?;
    for outer in 0..config.outer_iters {
        let mut rng = stream_rng(config.seed, outer, ASSIGN_STREAM);
        let assignment = ClusterAssignment::uniform_random(table.n_features(), k, &mut rng);
        run.inner_loop(outer, &assignment, Phase::Search)?;
        run.close_outer(outer);
    }
    run.finish(Method::RandCluster, k, None, Vec::new(), None)
}

/// Same loop with the assignment frozen to k-means on the column embeddings.
pub fn run_kmeans_variant(table: &Table, config: &SearchConfig) -> Result<RunResult, SearchError> {
    let mut run = Runner::new(table, config)?;
    let k = effective_k(config, table.n_features())?;
    let mut assignment = None;
    for outer in 0..config.outer_iters {
        if assignment.is_none() {
            let embedding = embed_table(table, config.embed, config.seed).condensed;
            assignment = Some(kmeans(&embedding, k, sub_seed(config.seed, 1))?.assignment);
        }
        let fixed = assignment.as_ref().unwrap();
        run.inner_loop(outer, fixed, Phase::Search)?;
        run.close_outer(outer);
    }
    run.finish(Method::KMeansVariant, k, None, Vec::new(), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `None` when no combination assembles.
    pub best_score: Option<f64>,
    pub best: Option<Vec<PipelineTriple>>,
    pub combinations: usize,
    pub n_valid: usize,
}

/// Scores every per-feature combination of the configured space under the
/// reward learners and fold plan a search with the same config would use.
///
/// Ties go to the lowest combination index, counting the first feature as the
/// most significant digit.
pub fn brute_force_oracle(
    table: &Table,
    config: &SearchConfig,
) -> Result<OracleResult, SearchError> {
    let run = Runner::new(table, config)?;
    let triples = &run.space.triples;
    let d = table.n_features();
    let total = (triples.len() as u128)
        .checked_pow(d as u32)
        .unwrap_or(u128::MAX);
    if total > ORACLE_LIMIT {
        return Err(SearchError::OracleTooLarge(total));
    }
    let total = total as usize;
    let decode = |mut idx: usize| {
        let mut spec = vec![triples[0]; d];
        for slot in spec.iter_mut().rev() {
            *slot = triples[idx % triples.len()];
            idx /= triples.len();
        }
        spec
    };
    let scores: Vec<Option<f64>> = (0..total)
        .into_par_iter()
        .map(|i| run.evaluate(&decode(i)).0)
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    Ok(OracleResult {
        best_score: best.map(|(_, s)| s),
        best: best.map(|(i, _)| decode(i)),
        combinations: total,
        n_valid: scores.iter().filter(|s| s.is_some()).count(),
    })
}

pub fn run_method(
    method: Method,
    table: &Table,
    config: &SearchConfig,
) -> Result<RunResult, SearchError> {
    match method {
        Method::ClusterP3S => run_clusterp3s(table, config),
        Method::Heuristic => run_heuristic_p3(table, config),
        Method::RandCluster => run_rand_cluster_p3(table, config),
        Method::KMeansVariant => run_kmeans_variant(table, config),
    }
}
