use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fpseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("FPSEG_DATA_ROOT")
        .output()
        .expect("spawn fpseg")
}

fn ok(args: &[&str]) -> String {
    let out = fpseg(args);
    assert!(
        out.status.success(),
        "fpseg {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = fpseg(args);
    assert!(
        !out.status.success(),
        "fpseg {args:?} unexpectedly succeeded"
    );
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(dir: &Path) -> PathBuf {
    let root = dir.join("data");
    ok(&[
        "synthdata",
        "--out",
        s(&root),
        "--count",
        "4",
        "--target-count",
        "4",
        "--width",
        "36",
        "--height",
        "40",
        "--seed",
        "5",
    ]);
    root
}

fn train(root: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        "--data-root",
        s(root),
        "--preset",
        "smoke",
        "--iters",
        "4",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn synthdata_writes_the_requested_counts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(dir.path());
    assert_eq!(files(&a), ["manifest.toml", "shifted", "synthetic"]);
    assert_eq!(files(&a.join("synthetic/images")).len(), 4);
    assert_eq!(files(&a.join("shifted/masks")).len(), 4);
    let b = dir.path().join("again");
    ok(&[
        "synthdata",
        "--out",
        s(&b),
        "--count",
        "4",
        "--target-count",
        "4",
        "--width",
        "36",
        "--height",
        "40",
        "--seed",
        "5",
    ]);
    for f in [
        "synthetic/images/000002.png",
        "shifted/masks/000003.png",
        "manifest.toml",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn training_writes_a_complete_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let run = dir.path().join("run");
    train(&root, &run, &["--alpha", "0.5", "--checkpoint-every", "2"]);
    assert_eq!(
        files(&run),
        [
            "checkpoints",
            "config.toml",
            "final.ckpt",
            "manifest.json",
            "train.jsonl"
        ]
    );
    assert_eq!(
        files(&run.join("checkpoints")),
        ["step-000002.ckpt", "step-000004.ckpt"]
    );
    let log = std::fs::read_to_string(run.join("train.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "adversarial");
    assert_eq!(manifest["variant"], "ra-runet");
    assert_eq!(manifest["config"]["alpha"], 0.5);
    assert_eq!(manifest["target_databases"][0], "shifted");
    assert_eq!(manifest["code_version"].as_str().unwrap().len(), 64);
    assert!(std::fs::read_to_string(run.join("config.toml"))
        .unwrap()
        .contains("alpha = 0.5"));
}

#[test]
fn alpha_sweep_gets_one_directory_per_value_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let sweep = dir.path().join("sweep");
    train(&root, &sweep, &["--alpha", "0,1"]);
    assert_eq!(files(&sweep), ["alpha-0", "alpha-1"]);
    let manifest = std::fs::read_to_string(sweep.join("alpha-0/manifest.json")).unwrap();
    assert!(manifest.contains("\"mode\": \"baseline\""), "{manifest}");
    let out = dir.path().join("report");
    ok(&[
        "report",
        s(&sweep),
        "--data-root",
        s(&root),
        "--out",
        s(&out),
    ]);
    let dice = std::fs::read_to_string(out.join("dice.csv")).unwrap();
    let lines: Vec<&str> = dice.lines().collect();
    assert_eq!(lines[0], "run,shifted");
    assert_eq!(lines.len(), 3);
    assert!(
        lines[1].starts_with("runet α=0,") && lines[2].starts_with("ra-runet α=1,"),
        "{dice}"
    );
    assert_eq!(
        std::fs::read_to_string(out.join("runs.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn eval_single_and_comparison_tables() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&root, &a, &["--alpha", "0"]);
    train(&root, &b, &["--alpha", "1"]);
    let out = dir.path().join("eval");
    let (ca, cb) = (a.join("final.ckpt"), b.join("final.ckpt"));
    ok(&[
        "eval",
        "--data-root",
        s(&root),
        "--checkpoint",
        s(&ca),
        "--out",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("database,dice,jaccard\nshifted,"), "{csv}");
    let md = ok(&[
        "eval",
        "--data-root",
        s(&root),
        "--checkpoint",
        s(&ca),
        "--compare",
        s(&cb),
        "--label",
        "baseline",
        "--compare-label",
        "aligned",
        "--out",
        s(&out),
    ]);
    assert!(
        md.contains("Dice (baseline)") && md.contains("Dice (aligned)"),
        "{md}"
    );
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(
        csv.starts_with("database,dice_a,dice_b,jaccard_a,jaccard_b\nshifted,"),
        "{csv}"
    );

    let err = fails(&[
        "eval",
        "--data-root",
        s(&root),
        "--checkpoint",
        s(&ca),
        "--databases",
        "",
    ]);
    assert!(err.contains("empty"), "{err}");
    let err = fails(&[
        "eval",
        "--data-root",
        s(&root),
        "--checkpoint",
        s(&ca),
        "--databases",
        "nope",
    ]);
    assert!(err.contains("unknown database `nope`"), "{err}");
}

#[test]
fn gradcam_writes_one_overlay_per_sample_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let run = dir.path().join("run");
    train(&root, &run, &["--alpha", "0"]);
    let ckpt = run.join("final.ckpt");
    let both = format!("{},{}", s(&ckpt), s(&ckpt));
    let out = dir.path().join("cam");
    ok(&[
        "gradcam",
        "--data-root",
        s(&root),
        "--checkpoint",
        &both,
        "--database",
        "shifted",
        "--sample",
        "000000,000003",
        "--panel",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        files(&out),
        [
            "shifted-000000-m0.png",
            "shifted-000000-m1.png",
            "shifted-000000-panel.png",
            "shifted-000003-m0.png",
            "shifted-000003-m1.png",
            "shifted-000003-panel.png",
        ]
    );
    assert_eq!(
        std::fs::read(out.join("shifted-000000-m0.png")).unwrap(),
        std::fs::read(out.join("shifted-000000-m1.png")).unwrap()
    );
    let err = fails(&[
        "gradcam",
        "--data-root",
        s(&root),
        "--checkpoint",
        s(&ckpt),
        "--database",
        "shifted",
        "--sample",
        "42",
        "--out",
        s(&out),
    ]);
    assert!(
        err.contains("available ids: 000000, 000001, 000002, 000003"),
        "{err}"
    );
    let err = fails(&[
        "gradcam",
        "--data-root",
        s(&root),
        "--checkpoint",
        s(&ckpt),
        "--database",
        "shifted",
        "--sample",
        "000000",
        "--layer",
        "sg.bogus",
        "--out",
        s(&out),
    ]);
    assert!(err.contains("sg.dec0.conv2"), "{err}");
}

#[test]
fn full_mode_trains_on_labeled_source_and_target() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let run = dir.path().join("full");
    train(&root, &run, &["--mode", "full"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "baseline");
    assert_eq!(manifest["variant"], "runet-full (approximate)");
    assert!(run.join("final.ckpt").is_file());
}

#[test]
fn same_seed_reproduces_checkpoints_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    train(&root, &a, &["--seed", "7"]);
    train(&root, &b, &["--seed", "7"]);
    train(&root, &c, &["--seed", "8"]);
    for f in ["final.ckpt", "train.jsonl", "config.toml"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("final.ckpt")).unwrap(),
        std::fs::read(c.join("final.ckpt")).unwrap()
    );
}

#[test]
fn invalid_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let root = dataset(dir.path());
    let out = dir.path().join("x");
    let base = [
        "train",
        "--data-root",
        s(&root),
        "--preset",
        "smoke",
        "--iters",
        "1",
        "--out",
        s(&out),
    ];
    let with = |extra: &[&'static str]| -> Vec<String> {
        base.iter().chain(extra).map(|a| a.to_string()).collect()
    };
    let fails = |args: Vec<String>| fails(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(fails(with(&["--alpha", "-1"])).contains("alpha"));
    assert!(fails(with(&["--T-disc", "2"])).contains("invalid configuration"));
    assert!(fails(with(&["--sources", "shifted"])).contains("not a Source database"));
    assert!(fails(with(&["--side", "30"])).contains("invalid configuration"));
    assert!(!out.join("final.ckpt").exists());
}
