//! End-to-end runs of the `sqd-unwrap` binary.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqd-unwrap"))
        .args(args)
        .env("SQD_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--out", s(dir), "--count", "10", "--size", "64", "--seed", "1"];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn gen_twice_gives_identical_files() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert!(gen(&a, &[]).status.success());
    assert!(gen(&b, &[]).status.success());
    for f in ["manifest.json", "wrapped.bin", "truth.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn gen_records_noise_menu() {
    let t = tempfile::tempdir().unwrap();
    let out = gen(t.path(), &["--noise", "0,5,10,20,60"]);
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(t.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["noise_menu"], serde_json::json!([0.0, 5.0, 10.0, 20.0, 60.0]));
    for r in m["records"].as_array().unwrap() {
        let v = r["snr_db"].as_f64().unwrap();
        assert!([0.0, 5.0, 10.0, 20.0, 60.0].contains(&v));
    }
}

#[test]
fn gen_rejects_indivisible_size() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--out", s(t.path()), "--count", "2", "--size", "100"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("divisible"), "{err}");
}

#[test]
fn bad_flags_exit_with_user_error() {
    assert_eq!(run(&["gen"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_writes_tagged_files_and_unwrap_uses_them() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    assert!(run(&["gen", "--out", s(&data), "--count", "12", "--size", "16", "--stages", "2", "--preset", "toy"])
        .status
        .success());
    let runs = t.path().join("runs");
    for extra in [&["--loss", "lc"][..], &["--loss", "mse", "--no-sqd"][..]] {
        let mut args = vec![
            "train", "--data", s(&data), "--out", s(&runs), "--arch", "toy", "--epochs", "1", "--batch-size", "4",
            "--test-count", "4", "--quiet",
        ];
        args.extend_from_slice(extra);
        // The toy architecture has three stages; 16 px divides by 8.
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["model_sqd_lc.ckpt", "history_sqd_lc.json", "model_unet_mse.ckpt", "history_unet_mse.json"] {
        assert!(runs.join(f).exists(), "{f}");
    }
    let h: serde_json::Value =
        serde_json::from_slice(&std::fs::read(runs.join("history_unet_mse.json")).unwrap()).unwrap();
    assert_eq!(h["loss"], "mse");
    assert_eq!(h["use_sqd"], false);

    let out_json = t.path().join("pred.json");
    let pgm = t.path().join("pred.pgm");
    let out = run(&[
        "unwrap", "--data", s(&data), "--index", "0", "--method", "model", "--checkpoint",
        s(&runs.join("model_sqd_lc.ckpt")), "--out", s(&out_json), "--export", s(&pgm),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n16 16\n65535\n"));
    assert_eq!(bytes.len(), b"P5\n16 16\n65535\n".len() + 16 * 16 * 2);
    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(t.path().join("pred.pgm.json")).unwrap()).unwrap();
    assert!(side["min"].as_f64().unwrap() <= side["max"].as_f64().unwrap());
}

#[test]
fn unwrap_qgpu_reports_full_congruence() {
    let t = tempfile::tempdir().unwrap();
    assert!(gen(t.path(), &[]).status.success());
    let out = run(&[
        "unwrap", "--data", s(t.path()), "--index", "3", "--method", "qgpu", "--out", s(&t.path().join("o.json")),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("congruence fraction: 1.000000"), "{text}");
}

#[test]
fn unwrap_model_without_checkpoint_is_config_error() {
    let t = tempfile::tempdir().unwrap();
    assert!(gen(t.path(), &[]).status.success());
    let out = run(&[
        "unwrap", "--data", s(t.path()), "--index", "0", "--method", "model", "--out", s(&t.path().join("o.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn unwrap_reads_json_image() {
    let t = tempfile::tempdir().unwrap();
    let img = t.path().join("w.json");
    std::fs::write(&img, r#"{"height":2,"width":3,"values":[0.0,1.0,2.0,3.0,-3.0,-2.0]}"#).unwrap();
    let out = run(&["unwrap", "--input", s(&img), "--method", "qgpu", "--out", s(&t.path().join("o.json"))]);
    assert!(out.status.success());
    std::fs::write(&img, r#"{"height":2,"width":2,"values":[0.0,1.0,9.0,3.0]}"#).unwrap();
    let out = run(&["unwrap", "--input", s(&img), "--method", "qgpu", "--out", s(&t.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_writes_stable_reports() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    assert!(gen(&data, &["--noise", "0,20"]).status.success());
    let mut reports = Vec::new();
    for name in ["r1", "r2"] {
        let out_dir = t.path().join(name);
        let out = run(&["compare", "--data", s(&data), "--out", s(&out_dir), "--methods", "identity,qgpu,oracle"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
        let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
        assert!(csv.starts_with("snr_db,method,mean_nrmse_pct,n_images\n"));
        assert!(out_dir.join("report.txt").exists() && out_dir.join("timing.json").exists());
    }
    assert_eq!(reports[0], reports[1]);
    let r: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    let names: Vec<&str> = r["methods"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["identity", "qgpu", "oracle"]);
}
