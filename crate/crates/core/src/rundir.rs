//! Run directory layout: `result.json`, `trials.jsonl`, `curve.csv` and, for
//! the policy-based method, `policy.json`.
//!
//! `result.json` carries no timings, so seed-pinned reruns reproduce it byte for
//! byte. Wall-clock data goes to the trial log and the curve only.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::SuiteResult;
use crate::prims::{MemoKey, PipelineTriple};
use crate::search::{BestOrigin, CurvePoint, Method, Phase, RunResult, SearchConfig};
use crate::tabular::Table;

pub const RESULT_FILE: &str = "result.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const CURVE_FILE: &str = "curve.csv";
pub const POLICY_FILE: &str = "policy.json";

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path} line {line}: {message}")]
    BadLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("pipeline spec does not match the table: {0}")]
    SpecMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPipeline {
    /// One-based cluster id.
    pub cluster: usize,
    pub pipeline: PipelineTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub score: f64,
    pub origin: BestOrigin,
    pub assignment: BTreeMap<String, usize>,
    pub pipelines: Vec<ClusterPipeline>,
    pub per_feature: BTreeMap<String, PipelineTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub method: Method,
    /// Caller-supplied configuration, stored as given.
    pub run_config: Option<serde_json::Value>,
    pub search_config: SearchConfig,
    pub feature_names: Vec<String>,
    pub feature_classes: BTreeMap<String, String>,
    pub k_effective: usize,
    pub best: BestEntry,
    pub suite: SuiteResult,
    pub fallback: bool,
    pub iterations: usize,
    pub n_trials: usize,
    pub n_invalid: usize,
    pub learning_curve: Vec<Option<f64>>,
    pub memo: Vec<MemoKey>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLine {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub phase: Phase,
    pub assignment: BTreeMap<String, usize>,
    pub pipelines: Vec<ClusterPipeline>,
    pub score: Option<f64>,
    pub invalid_reason: Option<String>,
    pub invalid_key: Option<MemoKey>,
    pub wall_time: f64,
}

fn cluster_pipelines(pipelines: &[Option<PipelineTriple>]) -> Vec<ClusterPipeline> {
    pipelines
        .iter()
        .enumerate()
        .filter_map(|(c, p)| {
            p.map(|pipeline| ClusterPipeline {
                cluster: c + 1,
                pipeline,
            })
        })
        .collect()
}

pub fn result_file(result: &RunResult, run_config: Option<&serde_json::Value>) -> ResultFile {
    let names: Vec<&str> = result.feature_names.iter().map(String::as_str).collect();
    ResultFile {
        method: result.method,
        run_config: run_config.cloned(),
        search_config: result.config.clone(),
        feature_names: result.feature_names.clone(),
        feature_classes: names
            .iter()
            .zip(&result.feature_classes)
            .map(|(n, c)| (n.to_string(), c.to_string()))
            .collect(),
        k_effective: result.k_effective,
        best: BestEntry {
            score: result.best.score,
            origin: result.best.origin,
            assignment: result.best.assignment.to_named_map(&names),
            pipelines: cluster_pipelines(&result.best.pipelines),
            per_feature: names
                .iter()
                .zip(&result.best.per_feature)
                .map(|(n, p)| (n.to_string(), *p))
                .collect(),
        },
        suite: result.suite.clone(),
        fallback: result.fallback,
        iterations: result.learning_curve.len(),
        n_trials: result.trials.len(),
        n_invalid: result.trials.iter().filter(|t| t.score.is_none()).count(),
        learning_curve: result.learning_curve.iter().map(|p| p.best_score).collect(),
        memo: result.memo.clone(),
        rewards: result.rewards.clone(),
    }
}

pub fn trial_lines(result: &RunResult) -> Vec<TrialLine> {
    let names: Vec<&str> = result.feature_names.iter().map(String::as_str).collect();
    result
        .trials
        .iter()
        .map(|t| TrialLine {
            outer_iter: t.outer_iter,
            inner_iter: t.inner_iter,
            phase: t.phase,
            assignment: t.assignment.to_named_map(&names),
            pipelines: cluster_pipelines(&t.pipelines),
            score: t.score,
            invalid_reason: t.invalid_reason.clone(),
            invalid_key: t.invalid_key,
            wall_time: t.wall_time,
        })
        .collect()
}

pub fn write_run_dir(
    dir: &Path,
    result: &RunResult,
    run_config: Option<&serde_json::Value>,
) -> Result<(), RunDirError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let path = dir.join(RESULT_FILE);
    let mut json =
        serde_json::to_string_pretty(&result_file(result, run_config)).map_err(|source| {
            RunDirError::Json {
                path: path.clone(),
                source,
            }
        })?;
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;

    let path = dir.join(TRIALS_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    for line in trial_lines(result) {
        let s = serde_json::to_string(&line).expect("trial lines serialize");
        writeln!(w, "{s}").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join(CURVE_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    writeln!(w, "outer_iter,best_score,wall_time").map_err(io_err(&path))?;
    for p in &result.learning_curve {
        let score = p.best_score.map(|s| s.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", p.outer_iter, score, p.wall_time).map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    if let Some(policy) = &result.policy {
        let path = dir.join(POLICY_FILE);
        fs::write(&path, policy.to_json()).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn read_result(dir: &Path) -> Result<ResultFile, RunDirError> {
    let path = dir.join(RESULT_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| RunDirError::Json { path, source })
}

pub fn read_trials(dir: &Path) -> Result<Vec<TrialLine>, RunDirError> {
    let path = dir.join(TRIALS_FILE);
    let reader = BufReader::new(File::open(&path).map_err(io_err(&path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line).map_err(|e| RunDirError::BadLine {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(parsed);
    }
    Ok(out)
}

pub fn read_curve(dir: &Path) -> Result<Vec<CurvePoint>, RunDirError> {
    let path = dir.join(CURVE_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |message: String| RunDirError::BadLine {
            path: path.clone(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let [outer, score, wall] = fields[..] else {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        };
        out.push(CurvePoint {
            outer_iter: outer.parse().map_err(|e| bad(format!("outer_iter: {e}")))?,
            best_score: if score.is_empty() {
                None
            } else {
                Some(score.parse().map_err(|e| bad(format!("best_score: {e}")))?)
            },
            wall_time: wall.parse().map_err(|e| bad(format!("wall_time: {e}")))?,
        });
    }
    Ok(out)
}

/// Reads a feature-to-pipeline map, either from a `result.json` (its best
/// pipeline) or from a bare `{"feature": {"imputer": .., ..}}` object.
pub fn load_pipeline_spec(path: &Path) -> Result<BTreeMap<String, PipelineTriple>, RunDirError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let json_err = |source| RunDirError::Json {
        path: path.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    let map = match value.pointer("/best/per_feature") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(map).map_err(json_err)
}

/// Orders `spec` by the table's features; every feature must be covered and
/// every named feature must exist.
pub fn specs_for_table(
    table: &Table,
    spec: &BTreeMap<String, PipelineTriple>,
) -> Result<Vec<PipelineTriple>, RunDirError> {
    let names = table.feature_names();
    let unknown: Vec<&str> = spec
        .keys()
        .map(String::as_str)
        .filter(|k| !names.contains(k))
        .collect();
    if !unknown.is_empty() {
        return Err(RunDirError::SpecMismatch(format!(
            "unknown feature(s): {}",
            unknown.join(", ")
        )));
    }
    names
        .iter()
        .map(|n| {
            spec.get(*n)
                .copied()
                .ok_or_else(|| RunDirError::SpecMismatch(format!("no pipeline for feature `{n}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prims::{Encoder, Imputer, Scaler};
    use crate::tabular::{Column, Target};

    fn table() -> Table {
        Table::new(
            vec![
                Column::numeric("a", &[Some(1.0), Some(2.0)]),
                Column::text("b", &[Some("x"), Some("y")]),
            ],
            Target::from_labels("y", &["0", "1"]),
        )
        .unwrap()
    }

    #[test]
    fn spec_must_cover_table() {
        let t = table();
        let p = PipelineTriple::new(Imputer::None, Encoder::Ordinal, Scaler::None);
        let mut spec = BTreeMap::from([("a".to_string(), p), ("b".to_string(), p)]);
        assert_eq!(specs_for_table(&t, &spec).unwrap(), vec![p, p]);
        spec.insert("zzz".to_string(), p);
        assert!(matches!(
            specs_for_table(&t, &spec),
            Err(RunDirError::SpecMismatch(_))
        ));
        spec.remove("zzz");
        spec.remove("b");
        assert!(matches!(
            specs_for_table(&t, &spec),
            Err(RunDirError::SpecMismatch(_))
        ));
    }

    #[test]
    fn bad_trial_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TRIALS_FILE), "{\"outer_iter\": 0}\n").unwrap();
        let err = read_trials(dir.path()).unwrap_err();
        assert!(matches!(err, RunDirError::BadLine { line: 1, .. }), "{err}");
    }
}
