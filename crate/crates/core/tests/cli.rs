use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pawp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pawp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn pawp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) -> String {
    let o = pawp(&[
        "synth", "--preset", "easy", "--subjects", "60", "--size", "16", "--phases", "4", "--seed", "5",
        "--out", dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Keep the command-line runs quick.
    let cfg = dir.join("run.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("cv_folds = 10", "cv_folds = 3");
    fs::write(&cfg, text).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&pawp(&["no-such-command"])), 2);
    assert_eq!(code(&pawp(&["run"])), 2);
    assert_eq!(code(&pawp(&["--help"])), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&pawp(&["ingest-check", "-c", missing.to_str().unwrap()])), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "manifest = \"m.csv\"\ntop_k = \"many\"\n").unwrap();
    assert_eq!(code(&pawp(&["ingest-check", "-c", bad.to_str().unwrap()])), 2);
}

#[test]
fn empty_manifest_differs_from_parse_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let manifest = dir.path().join("manifest.csv");
    let header = fs::read_to_string(&manifest).unwrap().lines().next().unwrap().to_string();

    fs::write(&manifest, format!("{header}\n")).unwrap();
    let o = pawp(&["ingest-check", "-c", &cfg]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("lists no subjects"));

    fs::write(&manifest, format!("{header}\nS1,not-a-date,12.0,0,a.tns,b.tns,1,2\n")).unwrap();
    assert_eq!(code(&pawp(&["ingest-check", "-c", &cfg])), 3);
}

#[test]
fn missing_tensor_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    fs::remove_file(dir.path().join("tensors/S0003_sa.tns")).unwrap();
    let o = pawp(&["ingest-check", "-c", &cfg]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("S0003"));
}

#[test]
fn end_to_end_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let o = pawp(&["ingest-check", "-c", &cfg]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("60 subjects"), "{}", stdout(&o));

    let out = dir.path().join("run_a");
    let o = pawp(&["run", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("tri_modal_hybrid"));
    for f in ["predictions.csv", "report.csv", "audit.json", "summary.json", "dca_curve.csv", "exclusions.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let preds = out.join("predictions.csv");
    let eval_out = dir.path().join("report_again.csv");
    let o = pawp(&["evaluate", "--predictions", preds.to_str().unwrap(), "--out", eval_out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&eval_out).unwrap(), fs::read(out.join("report.csv")).unwrap());

    let dca_out = dir.path().join("dca.csv");
    let o = pawp(&[
        "dca", "--predictions", preds.to_str().unwrap(), "--model", "sa", "--resolution", "16",
        "--out", dca_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&dca_out).unwrap().lines().count(), 100);
    let o = pawp(&["dca", "--predictions", preds.to_str().unwrap(), "--model", "nope", "--resolution", "16", "--out", dca_out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);

    let o = pawp(&["report", "--run-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 9);
}

#[test]
fn staged_commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path());
    let out = dir.path().join("staged");
    let o = pawp(&["preprocess", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("preprocessed/16").is_dir());
    assert!(!out.join("predictions.csv").exists());
    let o = pawp(&["bin", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("binning: removed"));
    assert!(out.join("binning_history.csv").is_file());
}
