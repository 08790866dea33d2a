//! Run configuration layering: command-line flags over a JSON config file over
//! the `P3S_SEED` environment variable (seed only) over built-in defaults.

use std::path::{Path, PathBuf};

use p3s::prims::DEFAULT_ONEHOT_CAP;
use p3s::search::{DEFAULT_FOLDS, DEFAULT_INNER_ITERS, DEFAULT_K, DEFAULT_OUTER_ITERS};
use p3s::{LearnerKind, Method, SearchConfig};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "P3S_SEED";
pub const DEFAULT_OUT_DIR: &str = "p3s-run";

/// Fully resolved settings for one search; stored verbatim in `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub target_name: String,
    pub method: Method,
    pub k: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub seed: u64,
    pub reward_learner: Vec<LearnerKind>,
    pub eval_learners: Vec<LearnerKind>,
    pub folds: usize,
    pub onehot_cap: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl RunConfig {
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            k: self.k,
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            seed: self.seed,
            reward_learners: self.reward_learner.clone(),
            eval_learners: self.eval_learners.clone(),
            folds: self.folds,
            onehot_cap: self.onehot_cap,
            workers: self.workers,
            ..SearchConfig::default()
        }
    }
}

/// One source of settings; unset fields defer to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    pub data_path: Option<PathBuf>,
    pub target_name: Option<String>,
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub seed: Option<u64>,
    pub reward_learner: Option<Vec<LearnerKind>>,
    pub eval_learners: Option<Vec<LearnerKind>>,
    pub folds: Option<usize>,
    pub onehot_cap: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("invalid {name}: {message}")]
    Invalid { name: &'static str, message: String },
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            name: "config file",
            message,
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// Fields set here win over `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            data_path: self.data_path.or(lower.data_path),
            target_name: self.target_name.or(lower.target_name),
            method: self.method.or(lower.method),
            k: self.k.or(lower.k),
            outer_iters: self.outer_iters.or(lower.outer_iters),
            inner_iters: self.inner_iters.or(lower.inner_iters),
            seed: self.seed.or(lower.seed),
            reward_learner: self.reward_learner.or(lower.reward_learner),
            eval_learners: self.eval_learners.or(lower.eval_learners),
            folds: self.folds.or(lower.folds),
            onehot_cap: self.onehot_cap.or(lower.onehot_cap),
            out_dir: self.out_dir.or(lower.out_dir),
            workers: self.workers.or(lower.workers),
        }
    }
}

pub fn seed_from_env(value: Option<&str>) -> Result<Option<u64>, ConfigError> {
    value
        .map(|v| {
            v.trim().parse().map_err(|e| ConfigError::Invalid {
                name: SEED_ENV,
                message: format!("`{v}`: {e}"),
            })
        })
        .transpose()
}

/// Resolves `flags > file > env seed > defaults`.
pub fn resolve(
    flags: ConfigLayer,
    file: ConfigLayer,
    env_seed: Option<u64>,
) -> Result<RunConfig, ConfigError> {
    let env = ConfigLayer {
        seed: env_seed,
        ..ConfigLayer::default()
    };
    let merged = flags.over(file).over(env);
    let defaults = SearchConfig::default();
    let config = RunConfig {
        data_path: merged.data_path.ok_or(ConfigError::Missing("data"))?,
        target_name: merged.target_name.ok_or(ConfigError::Missing("target"))?,
        method: merged.method.unwrap_or(Method::ClusterP3S),
        k: merged.k.unwrap_or(DEFAULT_K),
        outer_iters: merged.outer_iters.unwrap_or(DEFAULT_OUTER_ITERS),
        inner_iters: merged.inner_iters.unwrap_or(DEFAULT_INNER_ITERS),
        seed: merged.seed.unwrap_or(0),
        reward_learner: merged.reward_learner.unwrap_or(defaults.reward_learners),
        eval_learners: merged.eval_learners.unwrap_or(defaults.eval_learners),
        folds: merged.folds.unwrap_or(DEFAULT_FOLDS),
        onehot_cap: merged.onehot_cap.unwrap_or(DEFAULT_ONEHOT_CAP),
        out_dir: merged
            .out_dir
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        workers: merged.workers.unwrap_or(1),
    };
    let invalid = |name, message: &str| ConfigError::Invalid {
        name,
        message: message.to_string(),
    };
    if config.k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if config.folds < 2 {
        return Err(invalid("folds", "must be at least 2"));
    }
    if config.workers == 0 {
        return Err(invalid("workers", "must be at least 1"));
    }
    if config.reward_learner.is_empty() {
        return Err(invalid("reward-learner", "needs at least one learner"));
    }
    if config.eval_learners.is_empty() {
        return Err(invalid("eval-learners", "needs at least one learner"));
    }
    Ok(config)
}

/// Parses `tree,logistic` style lists.
pub fn parse_learners(s: &str) -> Result<Vec<LearnerKind>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ConfigLayer {
        ConfigLayer {
            data_path: Some("d.csv".into()),
            target_name: Some("class".into()),
            ..ConfigLayer::default()
        }
    }

    #[test]
    fn defaults_fill_the_rest() {
        let c = resolve(base(), ConfigLayer::default(), None).unwrap();
        assert_eq!(
            (c.k, c.outer_iters, c.inner_iters, c.folds, c.seed),
            (5, 50, 10, 10, 0)
        );
        assert_eq!(c.method, Method::ClusterP3S);
        assert_eq!(c.reward_learner, vec![LearnerKind::DecisionTree]);
    }

    #[test]
    fn env_seed_is_the_last_resort() {
        let c = resolve(base(), ConfigLayer::default(), Some(9)).unwrap();
        assert_eq!(c.seed, 9);
        let file = ConfigLayer {
            seed: Some(3),
            ..ConfigLayer::default()
        };
        assert_eq!(resolve(base(), file, Some(9)).unwrap().seed, 3);
        assert!(seed_from_env(Some("x")).is_err());
        assert_eq!(seed_from_env(Some(" 12 ")).unwrap(), Some(12));
    }

    #[test]
    fn target_is_required() {
        let flags = ConfigLayer {
            target_name: None,
            ..base()
        };
        assert_eq!(
            resolve(flags, ConfigLayer::default(), None),
            Err(ConfigError::Missing("target"))
        );
    }

    #[test]
    fn learner_lists() {
        assert_eq!(
            parse_learners("tree, logistic").unwrap(),
            vec![LearnerKind::DecisionTree, LearnerKind::LogisticSgd]
        );
        assert!(parse_learners("tree,svm").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let r: Result<ConfigLayer, _> = serde_json::from_str(r#"{"kk": 3}"#);
        assert!(r.is_err());
    }
}
