use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use tkge::dataset::Dataset;
use tkge::model::write_checkpoint;
use tkge::trainer::{initial_state, TrainConfig};
use tkge::{HyperParams, Mode};

fn tkge(dir: &Path, args: &[&str]) -> Output {
    tkge_env(dir, args, &[])
}

fn tkge_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tkge"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TKGE_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(&o));
    o
}

fn synthetic_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(tkge(dir.path(), &["gen-synthetic", "--entities", "20", "--relations", "3", "--bins", "4", "--out-dir", "data"]));
    dir
}

const SMALL: [&str; 6] = ["--min-triples", "1", "--d", "8", "--kappa", "20"];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn preprocess_recovers_the_generator_bins() {
    let dir = synthetic_dir();
    let out = ok(tkge(dir.path(), &["preprocess", "--data-dir", "data", "--min-triples", "1", "--out-dir", "out"]));
    let text = stdout(&out);
    assert!(text.starts_with("T=4\n"), "{text}");
    assert_eq!(text.lines().count(), 2 + 4);
    assert!(dir.path().join("out/graph.cache").is_file());
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = tkge(dir.path(), &["preprocess", "--data-dir", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dataset not found"), "{}", stderr(&out));
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let dir = synthetic_dir();
    for args in [
        vec!["train", "--data-dir", "data", "--gamma", "-1"],
        vec!["train", "--data-dir", "data", "--mode", "nope"],
        vec!["train", "--data-dir", "data", "--d", "x"],
        vec!["frobnicate"],
    ] {
        let out = tkge(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn hyte_log_has_zero_smoothness_column() {
    let dir = synthetic_dir();
    ok(tkge(dir.path(), &with(&["train", "--data-dir", "data", "--mode", "hyte-baseline"], &SMALL)));
    let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("iter,J,task,smooth,penalty"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("0")));
}

#[test]
fn same_config_gives_identical_checkpoints() {
    let dir = synthetic_dir();
    ok(tkge(dir.path(), &with(&["train", "--data-dir", "data", "--checkpoint", "a.ckpt"], &SMALL)));
    ok(tkge(dir.path(), &with(&["train", "--data-dir", "data", "--checkpoint", "b.ckpt"], &SMALL)));
    let a = fs::read(dir.path().join("a.ckpt")).unwrap();
    let b = fs::read(dir.path().join("b.ckpt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cached_and_raw_training_agree() {
    let dir = synthetic_dir();
    ok(tkge(dir.path(), &["preprocess", "--data-dir", "data", "--min-triples", "1"]));
    ok(tkge(dir.path(), &with(&["train", "--data-dir", "data", "--checkpoint", "raw.ckpt"], &SMALL)));
    ok(tkge(dir.path(), &with(&["train", "--cache", "graph.cache", "--checkpoint", "cached.ckpt"], &SMALL)));
    assert_eq!(fs::read(dir.path().join("raw.ckpt")).unwrap(), fs::read(dir.path().join("cached.ckpt")).unwrap());
}

#[test]
fn zero_iterations_writes_the_initial_state() {
    let dir = synthetic_dir();
    ok(tkge(dir.path(), &["train", "--data-dir", "data", "--min-triples", "1", "--d", "6", "--kappa", "0", "--seed", "7"]));
    let written = fs::read_to_string(dir.path().join("model.ckpt")).unwrap();

    let data = Dataset::load(&dir.path().join("data"), 1).unwrap();
    let cfg = TrainConfig { hp: HyperParams { d: 6, ..Default::default() }, mode: Mode::Rtge, seed: 7, ..Default::default() };
    let state = initial_state(&data.graph, &cfg).unwrap();
    let mut expected = Vec::new();
    write_checkpoint(&mut expected, &state).unwrap();
    assert_eq!(written, String::from_utf8(expected).unwrap());
}

#[test]
fn config_file_flags_and_env_layer_in_order() {
    let dir = synthetic_dir();
    fs::write(dir.path().join("run.cfg"), "# experiment\nd=4\nkappa=1\nmin-triples=1\n").unwrap();
    let meta = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap().lines().nth(1).unwrap().to_string();

    ok(tkge(dir.path(), &["train", "--config", "run.cfg", "--data-dir", "data", "--checkpoint", "file.ckpt"]));
    assert!(meta("file.ckpt").starts_with("meta d=4 "));

    ok(tkge(dir.path(), &["train", "--config", "run.cfg", "--data-dir", "data", "--checkpoint", "flag.ckpt", "--d", "6"]));
    assert!(meta("flag.ckpt").starts_with("meta d=6 "));

    ok(tkge_env(
        dir.path(),
        &["train", "--config", "run.cfg", "--data-dir", "data", "--checkpoint", "env.ckpt"],
        &[("TKGE_D", "5")],
    ));
    assert!(meta("env.ckpt").starts_with("meta d=5 "));

    let out = tkge_env(
        dir.path(),
        &["train", "--config", "run.cfg", "--data-dir", "data", "--checkpoint", "both.ckpt", "--d", "3"],
        &[("TKGE_D", "5")],
    );
    ok(out);
    assert!(meta("both.ckpt").starts_with("meta d=3 "));
}

#[test]
fn divergence_exits_with_one_and_names_the_iteration() {
    let dir = synthetic_dir();
    let out = tkge(dir.path(), &with(&["train", "--data-dir", "data", "--psi", "1e300"], &SMALL));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("iteration"), "{}", stderr(&out));
}

/// Four entities and two relations in three dimensions with w₀ = x̂ and
/// w₁ = ŷ. Every fact's residual lies along its own bin's normal, so each
/// gold answer has loss exactly zero and every rival a positive loss.
fn perfect_toy(dir: &Path) {
    fs::create_dir_all(dir.join("toy")).unwrap();
    let facts = "a\tr0\tb\t2000\t2000\nc\tr1\td\t2001\t2001\nb\tr1\tc\t2001\t2001\n";
    fs::write(dir.join("toy/train.txt"), facts).unwrap();
    fs::write(dir.join("toy/test.txt"), facts).unwrap();
    let ckpt = "RTGE-CKPT v1\nmeta d=3 T=2 ne=4 nr=2\n\
        E 0 0 0 0\nE 1 1.5 0.5 0\nE 2 1.5 0.5 0.3\nE 3 1.5 0.5 0.6\n\
        R 0 1 0.5 0\nR 1 0 1 0.3\n\
        W 0 1 0 0\nW 1 0 1 0\n";
    fs::write(dir.join("perfect.ckpt"), ckpt).unwrap();
}

fn toy_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    with(&["--data-dir", "toy", "--min-triples", "1", "--d", "3", "--checkpoint", "perfect.ckpt"], extra)
}

#[test]
fn perfect_checkpoint_ranks_every_gold_first() {
    let dir = TempDir::new().unwrap();
    perfect_toy(dir.path());
    let out = ok(tkge(dir.path(), &toy_args(&["eval"])));
    let csv = stdout(&out);
    assert_eq!(csv.lines().next(), Some("task,metric,value"));
    for task in ["head", "tail", "relation", "time"] {
        assert!(csv.contains(&format!("{task},mean_rank,1\n")), "{task}:\n{csv}");
        assert!(csv.contains(&format!("{task},hits@1,1\n")), "{task}:\n{csv}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), csv);
}

#[test]
fn eval_reports_only_requested_tasks() {
    let dir = TempDir::new().unwrap();
    perfect_toy(dir.path());
    let out = ok(tkge(dir.path(), &toy_args(&["eval", "--tasks", "relation"])));
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 1 + 11);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("relation,")));
}

#[test]
fn eval_is_thread_count_independent() {
    let dir = synthetic_dir();
    ok(tkge(dir.path(), &with(&["train", "--data-dir", "data"], &SMALL)));
    let one = ok(tkge(dir.path(), &with(&["eval", "--data-dir", "data", "--threads", "1"], &SMALL)));
    let three = ok(tkge(dir.path(), &with(&["eval", "--data-dir", "data", "--threads", "3"], &SMALL)));
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn eval_rejects_a_checkpoint_for_other_data() {
    let dir = synthetic_dir();
    perfect_toy(dir.path());
    let out = tkge(dir.path(), &with(&["eval", "--data-dir", "data", "--checkpoint", "perfect.ckpt"], &SMALL));
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("mismatch"), "{}", stderr(&out));
}

#[test]
fn predict_routes_each_missing_slot() {
    let dir = TempDir::new().unwrap();
    perfect_toy(dir.path());
    let first = |query: &str| {
        let out = ok(tkge(dir.path(), &toy_args(&["predict", query, "--top-k", "2"])));
        let text = stdout(&out);
        assert_eq!(text.lines().count(), 2, "{text}");
        text.lines().next().unwrap().split('\t').nth(1).unwrap().to_string()
    };
    assert_eq!(first("? r0 b @bin0"), "a");
    assert_eq!(first("a r0 ? @2000"), "b");
    assert_eq!(first("b ? c @bin1"), "r1");
    assert_eq!(first("a r0 b @?"), "bin0 (2000)");
    assert_eq!(first("c r1 d @?"), "bin1 (2001)");
}

#[test]
fn predict_rejects_malformed_queries() {
    let dir = TempDir::new().unwrap();
    perfect_toy(dir.path());
    for query in ["? ? b", "a r0 b", "? r0 b @bin9", "? nobody b"] {
        let out = tkge(dir.path(), &toy_args(&["predict", query]));
        assert_eq!(out.status.code(), Some(2), "{query}: {}", stderr(&out));
    }
}

#[test]
fn export_writes_one_row_per_parameter_vector() {
    let dir = TempDir::new().unwrap();
    perfect_toy(dir.path());
    ok(tkge(dir.path(), &["export-embeddings", "--checkpoint", "perfect.ckpt", "--output", "emb/out.csv"]));
    let csv = fs::read_to_string(dir.path().join("emb/out.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "kind,id,v1,v2,v3");
    assert_eq!(lines.len(), 1 + 4 + 2 + 2);
    assert!(lines[1].starts_with("entity,0,"));
    assert!(lines[8].starts_with("hyperplane,1,"));
}
