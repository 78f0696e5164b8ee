use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn progspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_progspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Smaller cohort and forest so each `run` takes a couple of seconds.
fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "# reduced cohort\n\
         synth.n_pdvec1 = 60\n\
         synth.n_pdvec2 = 60\n\
         synth.n_pdvec3 = 60\n\
         synth.n_hc = 40\n\
         forest.n_trees = 40\n\
         gmm.k_max = 4\n",
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn synth_run_replicate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();

    let o = progspace(&["synth", "--config", &cfg, "--out", &p("train")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let truth = fs::read_to_string(dir.path().join("train/truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 220);

    let o = progspace(&["synth", "--config", &cfg, "--seed", "9", "--out", &p("ext")]);
    assert!(o.status.success(), "{}", stderr(&o));

    let visits = p("train/visits.csv");
    let o = progspace(&["run", "--config", &cfg, "--input", &visits, "--out", &p("run")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("chosen k ="), "{stdout}");
    let manifest = fs::read_to_string(dir.path().join("run/MANIFEST")).unwrap();
    assert_eq!(manifest.lines().last(), Some("complete"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_patients"], 220);
    assert_eq!(summary["windows"].as_array().unwrap().len(), 3);

    let o = progspace(&[
        "replicate",
        "--config",
        &cfg,
        "--artifacts",
        &p("run"),
        "--external",
        &p("ext/visits.csv"),
        "--out",
        &p("rep"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rep/replication.json")).unwrap()).unwrap();
    assert_eq!(report["n_patients"], 180);
    assert!(dir.path().join("rep/replication_assignments.csv").is_file());
}

#[test]
fn identical_seeds_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    assert!(progspace(&["synth", "--config", &cfg, "--out", &p("c")]).status.success());
    for out in ["a", "b"] {
        let o = progspace(&["run", "--config", &cfg, "--input", &p("c/visits.csv"), "--out", &p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["summary.json", "assignments.csv", "forest.json", "cv_report.json", "coordinates.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = progspace(&["run", "--input", "/nonexistent/visits.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/visits.csv"));
    let manifest = fs::read_to_string(out.join("MANIFEST")).unwrap();
    assert!(manifest.lines().last().unwrap().starts_with("failed:"));
}

#[test]
fn unknown_config_key_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 3\ngmm.kmax = 6\n").unwrap();
    let o = progspace(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gmm.kmax"));
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let o = progspace(&["synth", "--config", "/nonexistent/progspace.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_k_range_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = progspace(&["synth", "--k-range", "5..2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gmm.k_max"), "{}", stderr(&o));
}

#[test]
fn replicate_without_artifacts_is_rejected() {
    let o = progspace(&["replicate", "--external", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("artifacts"));
}
