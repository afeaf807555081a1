use std::path::Path;
use std::process::{Command, Output};

use drocc::io::{load_dataset, ModelFile};
use drocc_core::Detector;

fn drocc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drocc"))
        .args(args)
        .current_dir(dir)
        .env_remove("DROCC_JOBS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_GRID: &str = r#""grid":{"nus":[0.2],"gammas":[0.5]},"n_eval":2"#;

#[test]
fn generate_writes_three_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = drocc(
        &[
            "generate",
            "--dataset",
            "d3",
            "--seed",
            "4",
            "--out",
            "data",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    for (split, n) in [("train", 102), ("validation", 40), ("test", 40)] {
        let (pts, labels) = load_dataset(&dir.path().join(format!("data/d3_{split}.csv"))).unwrap();
        assert_eq!(pts.len(), n);
        assert_eq!(labels.len(), n);
        assert!(pts.iter().all(|p| p.len() == 2));
    }
}

#[test]
fn run_writes_rows_and_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{"dataset":"d1","method":"kdrcc_clustering_ii","seeds":[0,1],{SMALL_GRID},"output_path":"rows.csv"}}"#
        ),
    );
    let out = drocc(&["run", "--config", &cfg, "--jobs", "2"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("d1,kdrcc_clustering_ii,1,0.2,0.5,0.01,"));

    let out = drocc(
        &["run", "--config", &cfg, "--seed", "9", "--out", "one.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("d1,kdrcc_clustering_ii,9,"));
}

#[test]
fn run_to_stdout_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(r#"{{"dataset":"d2","method":"ocsvm","seeds":[2],{SMALL_GRID}}}"#),
    );
    let a = drocc(&["run", "--config", &cfg], dir.path());
    let b = drocc(&["run", "--config", &cfg, "--out", "x.csv"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(a.stdout, std::fs::read(dir.path().join("x.csv")).unwrap());
}

#[test]
fn bad_config_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"dataset":"d9","method":"ocsvm","seeds":[0],"output_path":"rows.csv"}"#,
    );
    let out = drocc(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!dir.path().join("rows.csv").exists());

    let out = drocc(&["run", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = drocc(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = drocc(&["generate", "--dataset", "d7", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn jobs_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &format!(r#"{{"dataset":"d1","method":"ocsvm","seeds":[0],{SMALL_GRID}}}"#),
    );
    let run = |jobs: &str| {
        Command::new(env!("CARGO_BIN_EXE_drocc"))
            .args(["run", "--config", &cfg])
            .env("DROCC_JOBS", jobs)
            .output()
            .unwrap()
    };
    assert_eq!(run("lots").status.code(), Some(1));
    assert_eq!(run("0").status.code(), Some(1));
    assert_eq!(run("2").status.code(), Some(0));
}

#[test]
fn reproduce_tables_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "tables.json",
        r#"{"seeds":[0],"grid":{"nus":[0.2],"gammas":[0.1]},"n_eval":2,"n_batch":2}"#,
    );
    let out = drocc(
        &["reproduce-tables", "--config", &cfg, "--out", "t"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let read = |n: &str| std::fs::read_to_string(dir.path().join("t").join(n)).unwrap();
    let t1 = read("table1.csv");
    assert_eq!(t1.lines().count(), 4);
    assert_eq!(
        t1.lines().next().unwrap(),
        "metric,normal,uniform,student_t"
    );
    let t2 = read("table2.csv");
    let methods: Vec<&str> = t2
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        methods,
        ["kdrcc_sampling"; 3]
            .iter()
            .chain(&["ocsvm"; 3])
            .copied()
            .collect::<Vec<_>>()
    );
    let t3 = read("table3.csv");
    assert_eq!(t3.lines().count(), 7);
    assert!(t3.lines().all(|l| !l.contains("FAILED")));
}

#[test]
fn check_on_csv_training_set_and_model_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        drocc(&["generate", "--dataset", "d1", "--out", "."], dir.path())
            .status
            .code(),
        Some(0)
    );
    let out = drocc(
        &[
            "check",
            "--train",
            "d1_train.csv",
            "--probes",
            "50",
            "--model-out",
            "m.json",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 9);

    let model = ModelFile::load(&dir.path().join("m.json")).unwrap();
    assert_eq!(model.method, "kdrcc");
    assert_eq!((model.p.len(), model.samples.len()), (510, 510));
    assert_eq!(model.gamma, 0.00098);
    let (pts, _) = load_dataset(&dir.path().join("d1_test.csv")).unwrap();
    assert!(pts.iter().all(|p| model.score(p).unwrap().is_finite()));
}
