use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pglmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pglmc"))
        .args(args)
        .env_remove("PGLMC_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn wine() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/wine.csv")
        .display()
        .to_string()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let path: PathBuf = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out_dir = path(&dir, "out");
    let missing_seed = pglmc(&["simulate", "--d", "10", "--out-dir", &out_dir]);
    assert_eq!(code(&missing_seed), 1);
    assert!(stderr(&missing_seed).contains("--seed"));

    assert_eq!(code(&pglmc(&["frobnicate"])), 1);

    let out = path(&dir, "m.json");
    let bad_version = write(&dir, "v.json", r#"{"schema_version": 7}"#);
    let r = pglmc(&["train", "--data", &wine(), "--positive-class", "1", "--config", &bad_version, "--out", &out]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));

    let unknown = write(&dir, "u.json", r#"{"schema_version": 1, "tuning": {}}"#);
    let r = pglmc(&["train", "--data", &wine(), "--positive-class", "1", "--config", &unknown, "--out", &out]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(!Path::new(&out).exists());
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&pglmc(&["--help"])), 0);
    assert_eq!(code(&pglmc(&["--version"])), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.json");

    let one_class = write(&dir, "one.csv", "a,b,y\n1,2,1\n3,4,1\n5,6,1\n");
    let r = pglmc(&["train", "--data", &one_class, "--out", &out]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("class -1 has no samples"), "{}", stderr(&r));

    let bad_cell = write(&dir, "bad.csv", "a,b,y\n1,2,1\n3,x,-1\n");
    let r = pglmc(&["train", "--data", &bad_cell, "--out", &out]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains('x'));

    let r = pglmc(&["train", "--data", &path(&dir, "absent.csv"), "--out", &out]);
    assert_eq!(code(&r), 2);

    let r = pglmc(&["train", "--data", &wine(), "--positive-class", "9", "--out", &out]);
    assert_eq!(code(&r), 2);
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.json");
    let r = pglmc(&["train", "--data", &wine(), "--positive-class", "2", "--max-iter", "1", "--out", &out]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
}

#[test]
fn simulate_writes_reproducible_files() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str| {
        let out_dir = path(&dir, sub);
        let r = pglmc(&["simulate", "--setting", "independent", "--d", "500", "--seed", "7", "--out-dir", &out_dir]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let mut names: Vec<String> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert_eq!(names, vec!["bayes.json", "train.csv"]);
        (
            fs::read(dir.path().join(sub).join("train.csv")).unwrap(),
            fs::read(dir.path().join(sub).join("bayes.json")).unwrap(),
        )
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    let csv = String::from_utf8(first.0).unwrap();
    assert_eq!(csv.lines().count(), 251);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 501);
}

#[test]
fn train_then_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let model = path(&dir, "model.json");
    let scores = path(&dir, "scores.csv");
    let r = pglmc(&["train", "--data", &wine(), "--positive-class", "1", "--c0", "1", "--out", &model]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = pglmc(&["predict", "--model", &model, "--data", &wine(), "--out", &scores]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = fs::read_to_string(&scores).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "score,label");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 178);
    for row in rows {
        let (s, l) = row.split_once(',').unwrap();
        let s: f64 = s.parse().unwrap();
        assert_eq!(l, if s >= 0.0 { "1" } else { "-1" });
    }

    let unlabeled = write(&dir, "x.csv", "a,b\n1,2\n");
    let r = pglmc(&["predict", "--model", &model, "--data", &unlabeled, "--unlabeled", "--out", &scores]);
    assert_eq!(code(&r), 2, "dimension mismatch is a data error");
}

#[test]
fn sim_exp_reports_every_measure() {
    let dir = TempDir::new().unwrap();
    let out_dir = path(&dir, "exp");
    let r = pglmc(&[
        "sim-exp", "--setting", "independent", "--d", "500", "--methods", "pglmc,svm,bayes",
        "--reps", "10", "--seed", "1", "--test-per-class", "200", "--out-dir", &out_dir,
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = fs::read_to_string(dir.path().join("exp/results.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 30);
    for name in ["ccr", "mwe", "angle_deg", "intercept_dev"] {
        let col = header.iter().position(|h| *h == name).unwrap();
        assert!(rows.iter().all(|r| r[col].parse::<f64>().is_ok()), "{name}");
    }
    for method in ["pglmc", "svm", "bayes"] {
        assert_eq!(rows.iter().filter(|r| r[0] == method).count(), 10);
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("exp/results.json")).unwrap()).unwrap();
    assert!(json.is_object() || json.is_array());
}

#[test]
fn cv_accepts_config_file_and_thread_env() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "plan.json",
        r#"{"schema_version": 1, "plan": {"replications": 1, "outer_folds": 3, "c0_grid": [0.1, 1.0]}}"#,
    );
    let run = |sub: &str, threads: &str| {
        let out_dir = path(&dir, sub);
        let r = Command::new(env!("CARGO_BIN_EXE_pglmc"))
            .args(["cv", "--data", &wine(), "--positive-class", "3", "--seed", "5", "--config", &config, "--out-dir", &out_dir])
            .env("PGLMC_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        fs::read(dir.path().join(sub).join("results.csv")).unwrap()
    };
    let a = run("one", "1");
    assert_eq!(a, run("four", "4"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
}
