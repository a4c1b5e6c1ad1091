use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ids_core::synthetic::{self, SyntheticSpec};

fn ids(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ids"))
        .args(args)
        .current_dir(cwd)
        .env_remove("IDS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synthetic_csv(dir: &Path, rows: usize) -> PathBuf {
    let path = dir.join("flows.csv");
    let spec = SyntheticSpec {
        rows,
        ..Default::default()
    };
    synthetic::write_csv(&spec, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

const FAST: [&str; 6] = ["--rf-trees", "10", "--gb-rounds", "20", "--ada-rounds", "10"];

#[test]
fn inspect_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "a,b,Class\n1,2,0\n3,4,1\n5,,0\n6,7,1\n").unwrap();
    let o = ids(&["inspect", "--input", "s.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("rows: 4"));
    assert!(out.contains("normal (0): 2"));
    assert!(out
        .lines()
        .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["b", "1"]));
}

#[test]
fn inspect_header_only_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("h.csv"), "a,b,Class\n").unwrap();
    let o = ids(&["inspect", "--input", "h.csv"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("rows: 0"));
}

#[test]
fn config_and_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 50);
    let cases: [&[&str]; 4] = [
        &["train", "--input", "flows.csv", "--model", "xgboost"],
        &["train", "--input", "missing.csv", "--model", "dt"],
        &["inspect", "--input", "flows.csv", "--label-column", "Zed"],
        &["compare", "--input", "flows.csv", "--test-fraction", "1.5"],
    ];
    for args in cases {
        let o = ids(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("error"), "{args:?}");
    }
}

#[test]
fn single_class_training_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.csv"), "a,Class\n1,0\n2,0\n3,0\n4,0\n").unwrap();
    let o = ids(&["train", "--input", "one.csv", "--model", "dt"], dir.path());
    assert!(!o.status.success());
    assert!(!dir.path().join("ids-out/decision_tree.model.json").exists());
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 400);
    let o = ids(
        &["train", "--input", "flows.csv", "--model", "gb", "--gb-rounds", "20"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("model written to"));
    let model = dir.path().join("ids-out/gradient_boosting.model.json");
    assert!(model.is_file());
    assert!(dir.path().join("ids-out/gradient_boosting.metrics.json").is_file());
    assert!(dir.path().join("ids-out/roc_gradient_boosting.csv").is_file());

    let o = ids(
        &[
            "predict",
            "--model-file",
            model.to_str().unwrap(),
            "--input",
            "flows.csv",
            "--output",
            "pred.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row_index,score,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    for (i, line) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], i.to_string());
        let score: f64 = cells[1].parse().unwrap();
        assert!(score > 0.0 && score < 1.0);
        assert!(cells[2] == "0" || cells[2] == "1");
    }

    let o = ids(
        &[
            "predict",
            "--model-file",
            model.to_str().unwrap(),
            "--input",
            "flows.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o), text);
}

#[test]
fn predict_header_only_file_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 200);
    let o = ids(&["train", "--input", "flows.csv", "--model", "dt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let header = synthetic::header().join(",");
    std::fs::write(dir.path().join("empty.csv"), format!("{header}\n")).unwrap();
    let o = ids(
        &[
            "predict",
            "--model-file",
            "ids-out/decision_tree.model.json",
            "--input",
            "empty.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "row_index,score,label\n");
}

#[test]
fn predict_missing_column_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 200);
    let o = ids(
        &["train", "--input", "flows.csv", "--model", "dt", "--no-selection"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(dir.path().join("short.csv"), "sig_0,sig_1\n0.1,0.9\n").unwrap();
    let o = ids(
        &[
            "predict",
            "--model-file",
            "ids-out/decision_tree.model.json",
            "--input",
            "short.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sig_2"), "{}", stderr(&o));
}

#[test]
fn corrupt_model_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 20);
    std::fs::write(dir.path().join("bad.json"), "{\"format_version\": 1").unwrap();
    let o = ids(
        &["predict", "--model-file", "bad.json", "--input", "flows.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_prints_table_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 600);
    let mut args = vec!["compare", "--input", "flows.csv", "--out-dir", "cmp"];
    args.extend(FAST);
    let o = ids(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("Algorithm"));
    for name in ["Decision Tree", "Random Forest", "Gradient Boosting", "Ada Boost"] {
        assert!(out.contains(name), "{name} missing from\n{out}");
    }
    let cmp = dir.path().join("cmp");
    for file in [
        "report.txt",
        "report.json",
        "timings.log",
        "correlation.csv",
        "random_forest.model.json",
        "roc_adaboost.csv",
        "confusion_decision_tree.txt",
    ] {
        assert!(cmp.join(file).is_file(), "{file}");
    }
    assert!(!std::fs::read_to_string(cmp.join("report.txt"))
        .unwrap()
        .contains("eval "));
}

#[test]
fn seed_env_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 300);
    let flag = ids(
        &[
            "train",
            "--input",
            "flows.csv",
            "--model",
            "rf",
            "--rf-trees",
            "5",
            "--seed",
            "9",
            "--out-dir",
            "a",
        ],
        dir.path(),
    );
    assert!(flag.status.success());
    let env = Command::new(env!("CARGO_BIN_EXE_ids"))
        .args([
            "train",
            "--input",
            "flows.csv",
            "--model",
            "rf",
            "--rf-trees",
            "5",
            "--out-dir",
            "b",
        ])
        .current_dir(dir.path())
        .env("IDS_SEED", "9")
        .output()
        .unwrap();
    assert!(env.status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("random_forest.model.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn select_features_lists_decoys_as_dropped() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_csv(dir.path(), 500);
    let o = ids(&["select-features", "--input", "flows.csv", "--matrix"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for decoy in synthetic::DECOYS {
        assert!(
            out.lines().any(|l| l.starts_with("drop") && l.ends_with(decoy)),
            "{decoy}\n{out}"
        );
    }
    assert!(out
        .lines()
        .any(|l| l.starts_with("drop") && l.contains("undefined") && l.ends_with("constant")));
    assert!(dir.path().join("ids-out/correlation_matrix.csv").is_file());
}
