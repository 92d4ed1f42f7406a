//! Command-line behavior: error paths, manifest determinism, flag
//! plumbing, sweep/ablate table shapes, and idempotence.

use std::path::Path;
use std::process::{Command, Output};

fn p2rec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_p2rec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra_train: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    let out = dir.join("out");
    std::fs::write(
        &path,
        format!(
            "[data]\nsource = synthetic\nusers = 48\nitems_a = 40\nitems_b = 40\ndensity = 0.10\n\
             [model]\nid_dim = 8\nproj_dim = 8\ndisen_hidden = 16\ndisen_dim = 8\npredictor_hidden = 8\nlayers = 1\n\
             [train]\nepochs = 2\nbatch_size = 256\npatience = 2\neval_negatives = 20\nseed = 5\n{extra_train}\
             [output]\ndir = {}\n",
            out.display()
        ),
    )
    .unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn missing_config_file_fails_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = p2rec(&["--config", "no/such/file.cfg", "train"], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no/such/file.cfg"), "stderr: {stderr}");
}

#[test]
fn train_without_prepared_dataset_fails_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = p2rec(&["--config", cfg.to_str().unwrap(), "train"], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("prepare"), "stderr: {stderr}");
}

#[test]
fn prepare_manifest_has_requested_users_and_is_idempot_hash_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    let manifest = read(&tmp.path().join("out/prepared/manifest.txt"));
    assert!(manifest.contains("domain.A.users = 48"), "{manifest}");
    assert!(manifest.contains("domain.B.users = 48"));

    // rerun: identical bytes
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    assert_eq!(manifest, read(&tmp.path().join("out/prepared/manifest.txt")));
}

#[test]
fn train_is_idempotent_and_ablate_obf_records_lambda_none() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    assert!(p2rec(&["--config", cfg_s, "train"], tmp.path()).status.success());
    let metrics = read(&tmp.path().join("out/train/metrics.txt"));
    assert!(metrics.contains("lambda_used = 0.01"));
    assert!(p2rec(&["--config", cfg_s, "train"], tmp.path()).status.success());
    assert_eq!(metrics, read(&tmp.path().join("out/train/metrics.txt")));

    let out = p2rec(&["--config", cfg_s, "--ablate", "obf", "train"], tmp.path());
    assert!(out.status.success());
    let metrics = read(&tmp.path().join("out/train/metrics.txt"));
    assert!(metrics.contains("lambda_used = none"), "{metrics}");
}

#[test]
fn singleton_sweep_row_matches_train_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    // a singleton alpha grid equal to the configured alpha
    let text = read(&cfg) + "[sweep]\nalpha = 0.001\n";
    std::fs::write(&cfg, text).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    assert!(p2rec(&["--config", cfg_s, "train"], tmp.path()).status.success());
    assert!(p2rec(&["--config", cfg_s, "sweep", "--param", "alpha"], tmp.path())
        .status
        .success());
    let table = read(&tmp.path().join("out/sweep_alpha/sweep_alpha.tsv"));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2, "header + one row: {table}");
    // the singleton point equals a plain train run's metrics document
    let train_doc = read(&tmp.path().join("out/train/metrics.txt"));
    let point_doc = read(&tmp.path().join("out/sweep_alpha/alpha_0.001/metrics.txt"));
    assert_eq!(train_doc, point_doc);
}

#[test]
fn lambda_sweep_rows_are_sorted_ascending() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = read(&cfg) + "[sweep]\nlambda = 0.1,0,0.01\n";
    std::fs::write(&cfg, text).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    assert!(p2rec(&["--config", cfg_s, "sweep", "--param", "lambda"], tmp.path())
        .status
        .success());
    let table = read(&tmp.path().join("out/sweep_lambda/sweep_lambda.tsv"));
    let keys: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(keys, vec![0.0, 0.01, 0.1]);
}

#[test]
fn sweep_refuses_mixed_config_aggregation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = read(&cfg) + "[sweep]\nlambda = 0,0.01\n";
    std::fs::write(&cfg, text).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    assert!(p2rec(&["--config", cfg_s, "sweep", "--param", "lambda"], tmp.path())
        .status
        .success());
    // rerun with cached points succeeds and leaves the table unchanged
    let table = read(&tmp.path().join("out/sweep_lambda/sweep_lambda.tsv"));
    assert!(p2rec(&["--config", cfg_s, "sweep", "--param", "lambda"], tmp.path())
        .status
        .success());
    assert_eq!(table, read(&tmp.path().join("out/sweep_lambda/sweep_lambda.tsv")));
    // a different base config into the same output directory is refused
    let out = p2rec(
        &["--config", cfg_s, "--seed", "99", "sweep", "--param", "lambda"],
        tmp.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("refusing to aggregate"), "stderr: {stderr}");
}

#[test]
fn ablate_table_has_nine_rows_and_four_metric_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    let out = p2rec(&["--config", cfg_s, "ablate"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read(&tmp.path().join("out/ablate/ablate.tsv"));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 10, "header + 9 variants");
    assert_eq!(rows[0], "variant\thr_a\tndcg_a\thr_b\tndcg_b\tlambda_used");
    for row in &rows[1..] {
        let fields: Vec<&str> = row.split('\t').collect();
        assert_eq!(fields.len(), 6);
        for metric in &fields[1..5] {
            metric.parse::<f64>().unwrap();
        }
    }
    // the obfuscation ablation records no lambda
    let wo_obf = rows.iter().find(|r| r.starts_with("w/o obf")).unwrap();
    assert!(wo_obf.ends_with("none"));
}

#[test]
fn gen_data_writes_loadable_raw_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cfg_s = cfg.to_str().unwrap();
    assert!(p2rec(&["--config", cfg_s, "gen-data"], tmp.path()).status.success());
    let raw = tmp.path().join("out/raw");
    for file in [
        "interactions_a.tsv",
        "interactions_b.tsv",
        "review_a.p2ft",
        "text_b.p2ft",
        "visual_a.p2ft",
        "truth_user_common.p2ft",
    ] {
        assert!(raw.join(file).exists(), "missing {file}");
    }
    // prepared-from-files equals prepared-from-synthetic for the same seed
    let files_cfg = tmp.path().join("files.cfg");
    std::fs::write(
        &files_cfg,
        format!(
            "[data]\nsource = files\ninteractions_a = {raw}/interactions_a.tsv\n\
             interactions_b = {raw}/interactions_b.tsv\nreview_a = {raw}/review_a.p2ft\n\
             review_b = {raw}/review_b.p2ft\ntext_a = {raw}/text_a.p2ft\ntext_b = {raw}/text_b.p2ft\n\
             visual_a = {raw}/visual_a.p2ft\nvisual_b = {raw}/visual_b.p2ft\n\
             [train]\nseed = 5\neval_negatives = 20\n[output]\ndir = {out}\n",
            raw = raw.display(),
            out = tmp.path().join("out_files").display()
        ),
    )
    .unwrap();
    assert!(p2rec(
        &["--config", files_cfg.to_str().unwrap(), "prepare"],
        tmp.path()
    )
    .status
    .success());
    let from_files = read(&tmp.path().join("out_files/prepared/domain_a/train.tsv"));
    assert!(p2rec(&["--config", cfg_s, "prepare"], tmp.path()).status.success());
    let from_synth = read(&tmp.path().join("out/prepared/domain_a/train.tsv"));
    assert_eq!(from_files, from_synth);
}
