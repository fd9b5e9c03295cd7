use std::path::Path;
use std::process::{Command, Output};

use demandml::manifest::{directory_digest, list_files, RunManifest, MANIFEST_FILE};
use demandml::model::TrainedModel;

fn demandml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demandml"))
        .args(args)
        .output()
        .expect("run demandml")
}

fn ok(args: &[&str]) -> String {
    let out = demandml(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"schema_version": 1,
            "forest": {"n_trees": 10, "mtry_fractions": [0.1], "min_leaf_grid": [5]},
            "lasso": {"n_folds": 3, "n_lambda": 10},
            "n_repeats": 2,
            "sweep_sizes": [600, 3960]}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn assert_manifest_covers_outputs(dir: &Path) {
    let m = manifest(dir);
    let declared: Vec<String> = m.outputs.iter().map(|f| f.path.clone()).collect();
    let mut on_disk = list_files(dir).unwrap();
    on_disk.retain(|f| f != MANIFEST_FILE);
    assert_eq!(declared, on_disk, "manifest of {}", dir.display());
}

#[test]
fn exit_codes() {
    assert_eq!(demandml(&["--help"]).status.code(), Some(0));
    assert_eq!(demandml(&["--version"]).status.code(), Some(0));
    assert_eq!(demandml(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(demandml(&["evaluate", "--bogus-flag"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing-here");
    let out = demandml(&["evaluate", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "n_trees": 5}"#).unwrap();
    let out = demandml(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&cfg, r#"{"schema_version": 9}"#).unwrap();
    let out = demandml(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["simulate", "--seed", "5", "--out", s(&a)]);
    ok(&["simulate", "--seed", "5", "--out", s(&b)]);
    ok(&["simulate", "--seed", "6", "--out", s(&c)]);
    assert_eq!(directory_digest(&a).unwrap(), directory_digest(&b).unwrap());
    assert_ne!(directory_digest(&a).unwrap(), directory_digest(&c).unwrap());
    assert_manifest_covers_outputs(&a);
    assert_eq!(manifest(&a).seed, 5);
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = small_config(root);
    let data = root.join("data");
    ok(&["simulate", "--seed", "3", "--out", s(&data)]);

    let feats = root.join("features");
    let text = ok(&["featurize", "--data", s(&data), "--out", s(&feats), "--spaces", "W,A"]);
    assert!(text.contains("W: 4400 rows x 225 columns"), "{text}");
    assert!(text.contains("A: 4400 rows x 360 columns"), "{text}");
    assert_manifest_covers_outputs(&feats);

    let fits = root.join("fits");
    ok(&[
        "fit", "--data", s(&data), "--out", s(&fits), "--config", &cfg, "--seed", "3",
        "--models", "bdm,logit,rf", "--spaces", "W",
    ]);
    assert_manifest_covers_outputs(&fits);
    let rf = TrainedModel::load(fits.join("model_rf_W.json")).unwrap();
    assert_eq!(rf.spec.to_string(), "rf(W)");

    let ev = root.join("eval");
    let text = ok(&[
        "evaluate", "--data", s(&data), "--out", s(&ev), "--config", &cfg, "--seed", "3",
        "--models", "probbuy,bdm,logit", "--spaces", "W", "--metrics", "mse,auc",
    ]);
    assert!(text.contains("logit(W)"));
    assert_manifest_covers_outputs(&ev);
    let report = std::fs::read_to_string(ev.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 * 2);

    let ev_subj = root.join("eval_subject");
    ok(&[
        "evaluate", "--data", s(&data), "--out", s(&ev_subj), "--config", &cfg, "--seed", "3",
        "--models", "bdm", "--protocol", "between_subject", "--metrics", "mse",
    ]);

    let sw = root.join("sweep");
    ok(&[
        "sweep", "--data", s(&data), "--out", s(&sw), "--config", &cfg, "--seed", "3",
        "--models", "bdm", "--metrics", "mse",
    ]);
    assert_manifest_covers_outputs(&sw);
    assert!(sw.join("plotdata/sweep_curves.csv").exists());

    let pr = root.join("price");
    let text = ok(&[
        "price", "--data", s(&data), "--out", s(&pr), "--config", &cfg, "--seed", "3",
        "--pricing-model", s(&fits.join("model_rf_W.json")), "--truth-model", "logit(W)",
    ]);
    assert!(text.contains("pairs              1100"), "{text}");
    assert_manifest_covers_outputs(&pr);

    let dg = root.join("diag");
    ok(&["diagnose", "--data", s(&data), "--out", s(&dg)]);
    assert_manifest_covers_outputs(&dg);

    let rep = root.join("report");
    let inputs = format!("{},{}", s(&ev), s(&ev_subj));
    let text = ok(&["report", "--inputs", &inputs, "--out", s(&rep)]);
    assert!(text.contains("within_between") && text.contains("between_subject"), "{text}");
    assert_manifest_covers_outputs(&rep);
}

#[test]
fn evaluate_output_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = small_config(root);
    let data = root.join("data");
    ok(&["simulate", "--seed", "8", "--out", s(&data)]);
    let mut reports = Vec::new();
    for t in ["1", "4"] {
        let out = root.join(format!("t{t}"));
        ok(&[
            "evaluate", "--data", s(&data), "--out", s(&out), "--config", &cfg, "--seed", "8",
            "--threads", t, "--models", "bdm,lasso,rf", "--spaces", "W", "--quiet",
        ]);
        reports.push((
            std::fs::read(out.join("report.csv")).unwrap(),
            std::fs::read(out.join("repeats.csv")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
}
