use std::path::Path;
use std::process::{Command, Output};

fn firmpanel(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_firmpanel"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_then_run_all_writes_panel_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = firmpanel(
        &["synth", "--out", "corpus", "--firms", "80", "--seed", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("firm_years="));

    let o = firmpanel(
        &[
            "--config",
            "corpus/firmpanel.conf",
            "--workers",
            "2",
            "run-all",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for stage in [
        "build-universe",
        "classify",
        "ingest",
        "impute",
        "articulate",
        "flag-anomalies",
        "geocode",
        "assemble",
        "report",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(&format!("{stage}:"))),
            "no summary for {stage}:\n{text}"
        );
    }
    let out = tmp.path().join("corpus/out");
    assert!(out.join("reports/filing_rate.csv").exists());
    assert!(std::fs::read_dir(out.join("panel")).unwrap().count() > 0);
}

#[test]
fn dry_run_lists_stages_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    firmpanel(&["synth", "--out", "corpus", "--firms", "10"], tmp.path());
    let o = firmpanel(
        &["--config", "corpus/firmpanel.conf", "--dry-run", "run-all"],
        tmp.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.contains("ingest") && text.contains("assemble"),
        "{text}"
    );
    assert!(!tmp.path().join("corpus/out").exists());
}

#[test]
fn invalid_configuration_exits_with_status_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = firmpanel(&["--set", "workers=0", "--dry-run", "run-all"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CONFIG_INVALID"));

    let o = firmpanel(&["--set", "no_such_key=1", "run-all"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let o = firmpanel(&["synth", "--out", "x", "--filing-rate", "1.5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_with_status_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = firmpanel(&["--output-dir", "out", "impute"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error ["));
}
