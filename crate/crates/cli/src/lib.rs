//! Command implementations behind the `p3s` binary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use p3s::embed::{embed_table, write_embedding_csv};
use p3s::rundir::{self, load_pipeline_spec, specs_for_table};
use p3s::tabular::default_missing_markers;
use p3s::{
    enumerate_pipelines, evaluate_suite, load_csv, make_folds, run_method, LearnerKind,
    LearnerSpec, Method,
};
use p3s::{SuiteResult, Table};

pub mod config;

use config::{
    parse_learners, resolve, seed_from_env, ConfigError, ConfigLayer, RunConfig, SEED_ENV,
};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "p3s",
    version,
    about = "Per-feature preprocessing pipeline search"
)]
pub struct Cli {
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search preprocessing pipelines for a CSV dataset.
    Search(SearchArgs),
    /// Re-evaluate a saved pipeline spec under every learner.
    Eval(EvalArgs),
    /// List the 48 candidate pipelines.
    Enumerate,
    /// Summarize a finished run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct SearchArgs {
    /// CSV file with a header row.
    #[arg(long = "data")]
    pub data_path: Option<PathBuf>,
    /// Name of the class column.
    #[arg(long = "target")]
    pub target_name: Option<String>,
    /// clusterp3s, heuristic, randcluster or kmeans-variant.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated learners averaged into the search reward.
    #[arg(long, value_parser = parse_learners)]
    pub reward_learner: Option<Vec<LearnerKind>>,
    /// Comma-separated learners used to score the final pipeline.
    #[arg(long, value_parser = parse_learners)]
    pub eval_learners: Option<Vec<LearnerKind>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub onehot_cap: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Inner trials evaluated concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON file with any of the settings above (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the condensed column embedding to this CSV.
    #[arg(long)]
    pub dump_embedding: Option<PathBuf>,
}

impl SearchArgs {
    pub fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            data_path: self.data_path.clone(),
            target_name: self.target_name.clone(),
            method: self.method,
            k: self.k,
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            seed: self.seed,
            reward_learner: self.reward_learner.clone(),
            eval_learners: self.eval_learners.clone(),
            folds: self.folds,
            onehot_cap: self.onehot_cap,
            out_dir: self.out_dir.clone(),
            workers: self.workers,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A run's result.json or a bare {"feature": pipeline} map.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long = "data")]
    pub data_path: PathBuf,
    #[arg(long = "target")]
    pub target_name: String,
    #[arg(long, default_value_t = p3s::search::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Defaults to $P3S_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_learners)]
    pub eval_learners: Option<Vec<LearnerKind>>,
    #[arg(long, default_value_t = p3s::prims::DEFAULT_ONEHOT_CAP)]
    pub onehot_cap: usize,
    /// Defaults to eval.json next to the spec file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
}

/// Failure split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn env_seed() -> Result<Option<u64>, ConfigError> {
    seed_from_env(std::env::var(SEED_ENV).ok().as_deref())
}

fn load_table(path: &Path, target: &str) -> Result<Table> {
    load_csv(path, target, &default_missing_markers())
        .with_context(|| format!("loading {}", path.display()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Search(args) => cmd_search(&args, out),
        Command::Eval(args) => cmd_eval(&args, out),
        Command::Enumerate => cmd_enumerate(out).map_err(|e| CliError::Runtime(e.into())),
        Command::Report(args) => cmd_report(&args.run_dir, out).map_err(CliError::Runtime),
    }
}

pub fn resolve_search(args: &SearchArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    Ok(resolve(args.layer(), file, env_seed()?)?)
}

pub fn cmd_search(args: &SearchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = resolve_search(args)?;
    let table = load_table(&config.data_path, &config.target_name)?;
    info!(
        "{} rows, {} features, {} classes",
        table.n_rows(),
        table.n_features(),
        table.target.n_classes()
    );
    let search = config.search_config();
    if let Some(path) = &args.dump_embedding {
        let emb = embed_table(&table, search.embed, search.seed);
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_embedding_csv(file, &table.feature_names(), &emb.condensed)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let result = run_method(config.method, &table, &search).context("search failed")?;
    let snapshot = serde_json::to_value(&config).context("serializing config")?;
    rundir::write_run_dir(&config.out_dir, &result, Some(&snapshot))
        .with_context(|| format!("writing {}", config.out_dir.display()))?;

    let mut w = || -> io::Result<()> {
        writeln!(out, "method: {}", result.method)?;
        writeln!(out, "best score: {:.4}", result.best.score)?;
        writeln!(out, "suite accuracy: {:.4}", result.suite.mean_accuracy)?;
        if result.fallback {
            writeln!(out, "no valid trial; heuristic pipeline reported")?;
        }
        for (c, p) in result.best.pipelines.iter().enumerate() {
            if let Some(p) = p {
                let members: Vec<&str> = result
                    .best
                    .assignment
                    .members(c)
                    .into_iter()
                    .map(|j| result.feature_names[j].as_str())
                    .collect();
                writeln!(out, "cluster {}: {p}  [{}]", c + 1, members.join(", "))?;
            }
        }
        writeln!(out, "run directory: {}", config.out_dir.display())
    };
    w().context("writing output")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalFile<'a> {
    spec: &'a Path,
    data_path: &'a Path,
    target_name: &'a str,
    folds: usize,
    seed: u64,
    onehot_cap: usize,
    suite: &'a SuiteResult,
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    if args.folds < 2 {
        return Err(CliError::Usage("folds must be at least 2".into()));
    }
    let spec = load_pipeline_spec(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let table = load_table(&args.data_path, &args.target_name)?;
    let specs = specs_for_table(&table, &spec).context("pipeline spec does not fit the data")?;
    let learners: Vec<LearnerSpec> = args
        .eval_learners
        .clone()
        .unwrap_or_else(|| LearnerKind::ALL.to_vec())
        .into_iter()
        .map(|k| LearnerSpec::new(k, seed))
        .collect();
    let plan = make_folds(&table, args.folds, seed).context("building folds")?;
    let suite = evaluate_suite(&table, &specs, &learners, &plan, args.onehot_cap)
        .context("evaluation failed")?;

    let path = args.out.clone().unwrap_or_else(|| {
        args.spec
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("eval.json")
    });
    let file = EvalFile {
        spec: &args.spec,
        data_path: &args.data_path,
        target_name: &args.target_name,
        folds: args.folds,
        seed,
        onehot_cap: args.onehot_cap,
        suite: &suite,
    };
    let json = serde_json::to_string_pretty(&file).context("serializing eval")?;
    std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;

    let mut text = String::new();
    for r in &suite.per_learner {
        let _ = writeln!(
            text,
            "{:<17} {:.4}",
            r.learner.kind.to_string(),
            r.mean_accuracy
        );
    }
    let _ = writeln!(text, "{:<17} {:.4}", "mean", suite.mean_accuracy);
    out.write_all(text.as_bytes()).context("writing output")?;
    Ok(())
}

pub fn cmd_enumerate(out: &mut dyn Write) -> io::Result<()> {
    for p in enumerate_pipelines() {
        writeln!(out, "{:>2}  {p}", p.id())?;
    }
    Ok(())
}

pub fn cmd_report(run_dir: &Path, out: &mut dyn Write) -> Result<()> {
    let result = rundir::read_result(run_dir)?;
    let trials = rundir::read_trials(run_dir)?;
    let curve_text = std::fs::read_to_string(run_dir.join(rundir::CURVE_FILE))
        .with_context(|| format!("reading {}", run_dir.join(rundir::CURVE_FILE).display()))?;
    // parse to validate before passing the text through
    rundir::read_curve(run_dir)?;

    let invalid = trials.iter().filter(|t| t.score.is_none()).count();
    writeln!(out, "method: {}", result.method)?;
    writeln!(out, "iterations: {}", result.iterations)?;
    writeln!(out, "trials: {} ({invalid} invalid)", trials.len())?;
    writeln!(out, "best score: {:.4}", result.best.score)?;
    for r in &result.suite.per_learner {
        writeln!(
            out,
            "  {:<17} {:.4}",
            r.learner.kind.to_string(),
            r.mean_accuracy
        )?;
    }
    writeln!(out, "suite accuracy: {:.4}", result.suite.mean_accuracy)?;
    if !result.memo.is_empty() {
        writeln!(out, "excluded primitives:")?;
        for key in &result.memo {
            writeln!(out, "  {key}")?;
        }
    }
    writeln!(out, "pipelines:")?;
    for (name, p) in &result.best.per_feature {
        let cluster = result.best.assignment.get(name).copied().unwrap_or(0);
        writeln!(out, "  {name:<20} cluster {cluster:<3} {p}")?;
    }
    write!(out, "{curve_text}")?;
    Ok(())
}
