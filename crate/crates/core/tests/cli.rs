use std::process::Command;

fn satfl(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_satfl")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn config_errors_exit_1() {
    let (code, _, err) = satfl(&["run", "--set", "stations=7"]);
    assert_eq!(code, 1);
    assert!(err.contains("[1, 2, 3, 5, 10, 13]"), "{err}");
    assert_eq!(satfl(&["run", "--set", "strategy=fedbuff:schedule"]).0, 1);
    assert_eq!(satfl(&["sweep", "--profile", "huge", "--dry-run"]).0, 1);
    assert_eq!(satfl(&["report", "--metric", "f1"]).0, 1);
    assert_eq!(satfl(&["frobnicate"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(satfl(&["run", "--config", cfg.to_str().unwrap()]).0, 1);
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(satfl(&["run", "--windows-in", missing.to_str().unwrap()]).0, 2);
    assert_eq!(satfl(&["report", "--out-dir", dir.path().to_str().unwrap()]).0, 2);
}

#[test]
fn empty_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = dir.path().join("out");
    let (code, stdout, err) = satfl(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "horizon_days=0.25",
        "--dataset",
        "synthetic:dim=16",
        "--trace",
        out.join("trace.jsonl").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("FedAvg"));
    let line = std::fs::read_to_string(out.join("line.csv")).unwrap();
    assert!(line.contains("# hyperparams.B=32"));
    assert!(line.contains("round,t_s,accuracy,round_duration_s"));
    assert!(std::fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().count() > 0);
}

#[test]
fn windows_export_and_reimport() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, _, err) = satfl(&["windows", "--set", "horizon_days=0.5", "--set", "stations=2", "--out-dir", a.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let exported = a.join("windows.csv");
    let (code, _, err) = satfl(&[
        "windows",
        "--set",
        "horizon_days=0.5",
        "--set",
        "stations=2",
        "--windows-in",
        exported.to_str().unwrap(),
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read(&exported).unwrap(), std::fs::read(b.join("windows.csv")).unwrap());
}

#[test]
fn dry_run_lists_desk_grid() {
    let (code, out, _) = satfl(&["sweep", "--dry-run"]);
    assert_eq!(code, 0);
    assert!(out.ends_with("96 cells x 5 seeds = 480 runs\n"), "{out}");
}
