//! Drives the `gdsrec` binary end to end on synthetic files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gdsrec::data::Split;
use gdsrec::persist::{self, read_metrics_log, Checkpoint};
use gdsrec::synthetic::{generate, write_files, SyntheticSpec};
use gdsrec::RunConfig;

fn gdsrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdsrec"))
        .args(args)
        .env("GDSREC_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn data_dir(root: &Path, seed: u64) -> PathBuf {
    let dir = root.join(format!("data{seed}"));
    let synth = generate(&SyntheticSpec { users: 30, items: 40, seed, ..Default::default() }).unwrap();
    write_files(&synth.raw, &dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn preprocess_prints_stats_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 1);
    let out = tmp.path().join("out");
    let args = ["--dataset-dir", s(&data), "--out", s(&out), "preprocess"];
    let text = ok(&gdsrec(&args));
    assert!(text.contains("users") && text.contains("relations"), "{text}");
    assert!(text.contains(&format!("{:>10}", 30)), "{text}");
    let first = persist::file_hash(&out.join("bundle.json")).unwrap();
    let graph = persist::file_hash(&out.join("graph.json")).unwrap();
    ok(&gdsrec(&args));
    assert_eq!(first, persist::file_hash(&out.join("bundle.json")).unwrap());
    assert_eq!(graph, persist::file_hash(&out.join("graph.json")).unwrap());
}

#[test]
fn missing_trust_file_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 1);
    std::fs::remove_file(data.join("trust.txt")).unwrap();
    let out = gdsrec(&["--dataset-dir", s(&data), "--out", s(&tmp.path().join("o")), "preprocess"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trust.txt"), "{err}");
}

#[test]
fn bad_flag_values_exit_nonzero() {
    assert!(!gdsrec(&["--task", "regression", "train"]).status.success());
    assert!(!gdsrec(&["--F", "7", "train"]).status.success());
    assert!(!gdsrec(&["--alpha=-0.5", "show-config"]).status.success());
}

fn write_config(root: &Path, data: &Path, out: &Path, extra: &str) -> PathBuf {
    let path = root.join("run.toml");
    let text = format!(
        "output_dir = {out:?}\n[data]\ndataset_dir = {data:?}\n[train]\ndim = 8\npatience = 100\nlearning_rate = 0.002\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn twenty_epochs_log_twenty_lines_with_falling_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 2);
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &data, &out, "max_epochs = 20\n");
    ok(&gdsrec(&["--config", s(&cfg), "train"]));
    let log = read_metrics_log(&out.join("metrics.jsonl")).unwrap();
    assert_eq!(log.len(), 20);
    assert!(log.iter().enumerate().all(|(i, l)| l.epoch == i));
    let head: f64 = log[..5].iter().map(|l| l.train_loss).sum();
    let tail: f64 = log[15..].iter().map(|l| l.train_loss).sum();
    assert!(tail < head, "train loss did not trend down: {head} -> {tail}");
    let timings = std::fs::read_to_string(out.join("timings.jsonl")).unwrap();
    assert_eq!(timings.lines().count(), 20);
    // the effective config is saved next to the artifacts
    let saved = RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(saved.train.max_epochs, 20);
}

#[test]
fn same_seed_gives_identical_logs_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 3);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&gdsrec(&["--dataset-dir", s(&data), "--out", s(&out), "--D", "8", "--epochs", "4", "--seed", "9", "train"]));
        (
            std::fs::read(out.join("metrics.jsonl")).unwrap(),
            persist::file_hash(&out.join("checkpoint.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn ranking_task_logs_scores_inside_the_unit_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 4);
    let out = tmp.path().join("out");
    ok(&gdsrec(&[
        "--dataset-dir", s(&data), "--out", s(&out), "--task", "ranking", "--F", "3", "--D", "8", "--epochs", "5",
        "train",
    ]));
    let log = read_metrics_log(&out.join("metrics.jsonl")).unwrap();
    assert_eq!(log.len(), 5);
    for l in &log {
        let (lo, hi) = (l.val_score_min.unwrap(), l.val_score_max.unwrap());
        assert!(0.0 < lo && lo <= hi && hi < 1.0, "{lo} {hi}");
        assert!(l.val_loss.unwrap() > 0.0);
    }
    let ck = persist::read_checkpoint(&out.join("checkpoint.json")).unwrap();
    assert_eq!(ck.config.threshold, 3);
    let text = ok(&gdsrec(&["--dataset-dir", s(&data), "--out", s(&out), "--F", "3", "evaluate"]));
    assert!(text.contains("F = 3"), "{text}");
}

#[test]
fn evaluate_refuses_a_checkpoint_from_other_data() {
    let tmp = tempfile::tempdir().unwrap();
    let (da, db) = (data_dir(tmp.path(), 5), data_dir(tmp.path(), 6));
    let (oa, ob) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&gdsrec(&["--dataset-dir", s(&da), "--out", s(&oa), "--D", "8", "--epochs", "2", "train"]));
    ok(&gdsrec(&["--dataset-dir", s(&db), "--out", s(&ob), "preprocess"]));
    let ck = oa.join("checkpoint.json");
    let out = gdsrec(&["--dataset-dir", s(&db), "--out", s(&ob), "evaluate", "--checkpoint", s(&ck)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hash mismatch"), "{err}");
    // the matching pair works and mae <= rmse shows up in the report
    ok(&gdsrec(&["--dataset-dir", s(&da), "--out", s(&oa), "evaluate"]));
    let rec: gdsrec::commands::RunRecord =
        serde_json::from_str(&std::fs::read_to_string(oa.join("report.json")).unwrap()).unwrap();
    assert!(rec.report.mae <= rec.report.rmse);
    assert_eq!(rec.split, Split::Test);
}

#[test]
fn zeroed_head_checkpoint_scores_like_the_mean_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 7);
    let out = tmp.path().join("out");
    ok(&gdsrec(&["--dataset-dir", s(&data), "--out", s(&out), "--D", "8", "--epochs", "1", "train"]));
    let path = out.join("checkpoint.json");
    let mut ck: Checkpoint = persist::read_checkpoint(&path).unwrap();
    ck.params.zero_head();
    persist::write_checkpoint(&path, &ck).unwrap();
    ok(&gdsrec(&["--dataset-dir", s(&data), "--out", s(&out), "evaluate"]));
    let rec: gdsrec::commands::RunRecord =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();

    // baseline recomputed from the raw bundle file
    let (bundle, _) = persist::read_bundle(&out.join("bundle.json")).unwrap();
    let mut user = std::collections::HashMap::<usize, (f64, f64)>::new();
    let mut item = std::collections::HashMap::<usize, (f64, f64)>::new();
    for r in &bundle.train {
        let e = user.entry(r.user).or_default();
        *e = (e.0 + r.rating as f64, e.1 + 1.0);
        let e = item.entry(r.item).or_default();
        *e = (e.0 + r.rating as f64, e.1 + 1.0);
    }
    let mu = bundle.train.iter().map(|r| r.rating as f64).sum::<f64>() / bundle.train.len() as f64;
    let mean = |m: &std::collections::HashMap<usize, (f64, f64)>, k| m.get(&k).map_or(mu, |&(s, c)| s / c);
    let mae = bundle
        .test
        .iter()
        .map(|r| (0.5 * (mean(&user, r.user) + mean(&item, r.item)) - r.rating as f64).abs())
        .sum::<f64>()
        / bundle.test.len() as f64;
    assert!((rec.report.mae - mae).abs() < 1e-12, "{} vs {mae}", rec.report.mae);
}

#[test]
fn config_round_trips_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("c.toml");
    let mut cfg = RunConfig::default();
    cfg.train.dim = 24;
    cfg.train.seed = 5;
    cfg.variant.alpha = 0.6;
    cfg.sweep.alpha = vec![0.0, 0.2];
    cfg.save(&cfg_path).unwrap();

    let printed = ok(&gdsrec(&["--config", s(&cfg_path), "show-config"]));
    assert_eq!(RunConfig::from_toml(&printed).unwrap(), cfg);

    let printed = ok(&gdsrec(&["--config", s(&cfg_path), "--seed", "8", "--variant", "sn", "--K", "15", "show-config"]));
    let over = RunConfig::from_toml(&printed).unwrap();
    assert_eq!(over.train.seed, 8);
    assert_eq!(over.train.neighbor_cap, 15);
    assert!(over.variant.sn_off);
    assert_eq!(over.train.dim, 24);
}

#[test]
fn ablate_prints_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path(), 8);
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &data, &out, "max_epochs = 2\n[sweep]\nvariants = [\"rc\"]\nattention = []\ndelta = [0, 2]\n");
    let text = ok(&gdsrec(&["--config", s(&cfg), "ablate"]));
    assert_eq!(text.lines().count(), 1 + 1 + 1 + 2, "{text}");
    assert!(out.join("ablation.json").exists());
}
