use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use p3s::datasets;
use p3s::rundir;

fn p3s() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_p3s"));
    cmd.env_remove("P3S_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    p3s().args(args).output().expect("spawn p3s")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_data(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    datasets::planted_mixed(120, 3).save_csv(&path).unwrap();
    path
}

fn search(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "search",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "label",
        "--folds",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn enumerate_prints_48_stable_lines() {
    let a = run(&["enumerate"]);
    assert!(a.status.success());
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 48);
    assert!(text.contains("None -> None -> None"));
    assert_eq!(text, stdout(&run(&["enumerate"])));
}

#[test]
fn heuristic_search_writes_one_trial_and_reports_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("run");
    let o = search(&data, &out, &["--method", "heuristic"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result = rundir::read_result(&out).unwrap();
    assert_eq!(result.n_trials, 1);
    assert_eq!(rundir::read_trials(&out).unwrap().len(), 1);
    let snapshot = result.run_config.expect("config snapshot");
    assert_eq!(snapshot["method"], "heuristic");
    assert_eq!(snapshot["folds"], 3);

    let report = run(&["report", out.to_str().unwrap()]);
    assert!(report.status.success());
    let text = stdout(&report);
    assert!(text.contains("iterations: 1"), "{text}");
    assert!(text.contains("outer_iter,best_score,wall_time"));
}

#[test]
fn missing_target_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let o = run(&["search", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("target") && err.contains("Usage"), "{err}");
}

#[test]
fn unknown_target_column_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("run");
    let o = run(&[
        "search",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "nope",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seeded_reruns_give_identical_result_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let flags = [
        "--k",
        "5",
        "--seed",
        "7",
        "--outer-iters",
        "3",
        "--inner-iters",
        "3",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(search(&data, &a, &flags).status.success());
    assert!(search(&data, &b, &flags).status.success());
    let read = |p: &Path| {
        std::fs::read_to_string(p.join(rundir::RESULT_FILE))
            .unwrap()
            .replace(p.to_str().unwrap(), "<out>")
    };
    assert_eq!(read(&a), read(&b));

    let curve = rundir::read_curve(&a).unwrap();
    let scores: Vec<f64> = curve.iter().filter_map(|c| c.best_score).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn eval_replays_the_best_score() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("run");
    let o = search(
        &data,
        &out,
        &["--seed", "4", "--outer-iters", "2", "--inner-iters", "3"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result = rundir::read_result(&out).unwrap();
    let spec = out.join(rundir::RESULT_FILE);

    let e = run(&[
        "eval",
        "--spec",
        spec.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--target",
        "label",
        "--folds",
        "3",
        "--seed",
        "4",
    ]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    let per_learner = eval["suite"]["per_learner"].as_array().unwrap();
    assert_eq!(per_learner.len(), 3);
    for r in per_learner {
        assert_eq!(r["per_fold"].as_array().unwrap().len(), 3);
    }
    let tree = per_learner
        .iter()
        .find(|r| r["learner"]["kind"] == "DecisionTree")
        .unwrap();
    assert_eq!(tree["mean_accuracy"].as_f64().unwrap(), result.best.score);
    assert_eq!(
        eval["suite"]["mean_accuracy"].as_f64().unwrap(),
        result.suite.mean_accuracy
    );
}

#[test]
fn eval_rejects_unknown_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"ghost": {"imputer": "Mean", "encoder": "None", "scaler": "Standard"}}"#,
    )
    .unwrap();
    let o = run(&[
        "eval",
        "--spec",
        spec.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--target",
        "label",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ghost"), "{err}");
}

#[test]
fn report_names_the_corrupted_trial_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("run");
    assert!(
        search(&data, &out, &["--outer-iters", "1", "--inner-iters", "2"])
            .status
            .success()
    );
    let path = out.join(rundir::TRIALS_FILE);
    let mut lines: Vec<String> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert!(lines.len() >= 2);
    lines[1] = "{not json".into();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let o = run(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn env_seed_applies_when_no_flag_is_given() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("run");
    let o = p3s()
        .env("P3S_SEED", "11")
        .args([
            "search",
            "--data",
            data.to_str().unwrap(),
            "--target",
            "label",
        ])
        .args([
            "--method",
            "heuristic",
            "--folds",
            "3",
            "--out-dir",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    let result = rundir::read_result(&out).unwrap();
    assert_eq!(result.run_config.unwrap()["seed"], 11);
}
