//! End-to-end checks of the `polyak-bench` binary.

use std::path::Path;
use std::process::{Command, Output};

use polyak::data::load_libsvm;
use polyak::trace::CSV_HEADER;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyak-bench"))
        .args(args)
        .env_remove("POLYAK_OPT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn run_writes_one_row_per_epoch() {
    let text = stdout(&bench(&["run", "--method", "taps", "--epochs", "7"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 8);
    assert!(lines[7].starts_with("7,"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["run", "--method", "motaps", "--epochs", "5", "--seed", "42"];
    assert_eq!(stdout(&bench(&args)), stdout(&bench(&args)));
    let other = stdout(&bench(&[
        "run", "--method", "motaps", "--epochs", "5", "--seed", "43",
    ]));
    assert_ne!(stdout(&bench(&args)), other);
}

#[test]
fn run_writes_json_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.json");
    let args = ["run", "--method", "sp", "--epochs", "3", "--format", "json"];
    let mut args: Vec<&str> = args.to_vec();
    args.extend(["--out", out.to_str().unwrap()]);
    stdout(&bench(&args));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}

#[test]
fn grid_reports_every_cell_and_the_best() {
    let out = bench(&["grid", "--epochs", "2", "--threads", "2"]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 50);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("best motaps"), "{stderr}");
    let seq = stdout(&bench(&["grid", "--epochs", "2", "--threads", "1"]));
    assert_eq!(text, seq);
}

#[test]
fn compare_emits_settings_and_a_method_column() {
    let text = stdout(&bench(&[
        "compare",
        "--epochs",
        "2",
        "--methods",
        "sp,taps,sag",
    ]));
    assert!(text.starts_with("# method=sp"));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], format!("method,{CSV_HEADER}"));
    assert_eq!(body.len(), 1 + 3 * 2);
}

#[test]
fn verify_passes_and_detects_faults() {
    let ok = bench(&["verify", "--instances", "40"]);
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    for fault in ["growth", "projection", "sgd-view", "gradient", "invariance"] {
        let bad = bench(&["verify", "--instances", "40", "--inject-fault", fault]);
        assert_eq!(bad.status.code(), Some(1), "fault {fault} went unnoticed");
    }
}

#[test]
fn generated_data_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.libsvm");
    let p = path.to_str().unwrap();
    stdout(&bench(&[
        "gen",
        "--synth-n",
        "30",
        "--synth-d",
        "4",
        "--out",
        p,
    ]));
    let data = load_libsvm(Path::new(p)).unwrap();
    assert_eq!(data.n(), 30);
    assert!(data.is_binary());
    let text = stdout(&bench(&[
        "run",
        "--dataset",
        p,
        "--method",
        "sp",
        "--epochs",
        "2",
    ]));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "method = \"taps\"\nepochs = 4\nsynth_n = 20\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(stdout(&bench(&["run", "--config", c])).lines().count(), 5);
    assert_eq!(
        stdout(&bench(&["run", "--config", c, "--epochs", "2"]))
            .lines()
            .count(),
        3
    );
    std::fs::write(&cfg, "epochz = 4\n").unwrap();
    assert_eq!(bench(&["run", "--config", c]).status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_code_two() {
    assert_eq!(bench(&["run", "--method", "newton"]).status.code(), Some(2));
    assert_eq!(
        bench(&["run", "--method", "motaps", "--lambda", "0.995"])
            .status
            .code(),
        Some(2)
    );
}
