use std::path::Path;
use std::process::{Command, Output};

fn tumorseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tumorseg")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--set", "segnet.depth=2",
    "--set", "segnet.base_channels=4",
    "--set", "segnet.d_layers=2",
    "--set", "segnet.d_base_channels=4",
    "--set", "segnet.steps=3",
    "--set", "segnet.batch_size=4",
    "--set", "segnet.ref_size=2",
    "--set", "paths.checkpoint_every=2",
];

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&tumorseg(&[])), 2);
    assert_eq!(code(&tumorseg(&["no-such-command"])), 2);
    assert_eq!(code(&tumorseg(&["phantom", "--out", "x", "--set", "segnet.bogus=1"])), 2);
    assert_eq!(code(&tumorseg(&["--help"])), 0);
}

#[test]
fn missing_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = tumorseg(&["evaluate", "--pred", p(&dir.path().join("none_pred.nii")), "--truth", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn phantom_to_survival_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (raw, pre, seg, pred, eval, surv) =
        (root.join("raw"), root.join("pre"), root.join("seg"), root.join("pred"), root.join("eval"), root.join("surv"));

    let o = tumorseg(&["phantom", "--n", "6", "--dims", "16", "--seed", "3", "--out", p(&raw)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(raw.join("ph3_000").join("ph3_000_flair.nii").is_file());
    assert!(raw.join("clinical.csv").is_file());

    let o = tumorseg(&["preprocess", "--in", p(&raw), "--out", p(&pre)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(pre.join("preprocess_report.csv").is_file());

    let mut args = vec!["train-seg", "--data", p(&pre), "--out", p(&seg)];
    args.extend_from_slice(SMALL);
    let o = tumorseg(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = std::fs::read_to_string(seg.join("config.ini")).unwrap();
    assert!(echoed.contains("steps = 3") && echoed.contains("checkpoint_every = 2"));
    let log = std::fs::read_to_string(seg.join("losses.csv")).unwrap();
    assert_eq!(log.lines().count(), 4, "header plus one row per step:\n{log}");

    let o = tumorseg(&["segment", "--model", p(&seg), "--case", p(&pre.join("ph3_001")), "--out", p(&pred)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(pred.join("ph3_001_pred.nii").is_file());

    let o = tumorseg(&["evaluate", "--pred", p(&pred), "--truth", p(&pre), "--out", p(&eval)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report.contains("ph3_001"));

    let o = tumorseg(&[
        "train-survival", "--data", p(&raw), "--out", p(&surv),
        "--set", "survival.blocks=2", "--set", "survival.base_channels=4", "--set", "survival.epochs=2",
        "--set", "survival.batch_size=2", "--set", "survival.ref_size=2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["survival.ckpt", "history.csv", "split.csv", "summary.txt", "config.ini"] {
        assert!(surv.join(f).is_file(), "{f}");
    }

    let o = tumorseg(&["predict-survival", "--model", p(&surv), "--case", p(&raw.join("ph3_002"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("id,predicted_days"));
    let row = lines.next().unwrap();
    let days: i64 = row.strip_prefix("ph3_002,").unwrap().parse().unwrap();
    assert!((0..=1750).contains(&days));
}
