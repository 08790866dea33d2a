//! Per-feature preprocessing pipeline search guided by learned feature clusters.
//!
//! Every feature column of a table receives its own imputer/encoder/scaler
//! triple. Features are grouped by a policy network over column embeddings;
//! each group shares one triple, and the grouping is refined with policy
//! gradients using cross-validated accuracy as the reward.

pub mod cluster;
pub mod datasets;
pub mod embed;
pub mod learners;
pub mod neural;
pub mod prims;
pub mod rundir;
pub mod search;
pub mod tabular;

pub use cluster::{AssignmentSource, ClusterAssignment, ClusterError, PolicyNet};
pub use embed::{embed_table, EmbedConfig, EmbeddingMatrix};
pub use learners::{
    evaluate_l, evaluate_suite, EvalError, EvalResult, LearnerKind, LearnerSpec, SuiteResult,
};
pub use prims::{
    enumerate_pipelines, ColumnClass, Encoder, Imputer, MemoKey, PipelineTriple, Primitive, Scaler,
    SearchSpace,
};
pub use search::{
    brute_force_oracle, run_clusterp3s, run_heuristic_p3, run_kmeans_variant, run_method,
    run_rand_cluster_p3, Method, OracleResult, RunResult, SearchConfig, SearchError, TrialRecord,
};
pub use tabular::{
    load_csv, make_folds, Cell, Column, ColumnKind, FoldPlan, Table, TableError, Target,
};
