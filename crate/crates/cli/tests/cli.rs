use std::path::Path;
use std::process::{Command, Output};

fn enfpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enfpd")).args(args).env_remove("ENFPD_JOBS").output().expect("binary runs")
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = enfpd(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

const SHORT_DETECT: [&str; 2] = ["--set", "slic.target_superpixels=16"];

#[test]
fn missing_input_exits_with_error_code() {
    let out = enfpd(&["detect", "/definitely/not/here.y4m"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn usage_errors_exit_with_error_code() {
    assert_eq!(enfpd(&["detect"]).status.code(), Some(3));
    assert_eq!(enfpd(&["config", "--set", "no.such.key=1"]).status.code(), Some(3));
    assert_eq!(enfpd(&["config", "--set", "stft.window_seconds"]).status.code(), Some(3));
}

#[test]
fn simulation_is_reproducible_and_sidecar_carries_the_alias() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--seconds", "2", "--width", "32", "--height", "24", "--seed", "11"];
    simulate(a.path(), &args);
    simulate(b.path(), &args);
    for name in ["clip.y4m", "clip.enf.csv", "clip.truth.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let truth: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("clip.truth.json")).unwrap()).unwrap();
    let alias = enfpd_core::enf::alias_frequency(100.0, 30000.0 / 1001.0).unwrap();
    assert_eq!(truth["alias_hz"].as_f64().unwrap(), alias);
    assert_eq!(truth["label"], "EnfPresent");
    assert_eq!(truth["seed"], 11);
}

#[test]
fn detect_finds_enf_in_a_simulated_clip_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seconds", "30", "--seed", "3"]);
    let clip = dir.path().join("clip.y4m");
    let mut args = vec!["detect", clip.to_str().unwrap()];
    args.extend_from_slice(&SHORT_DETECT);
    let first = enfpd(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let report: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(report["verdict"], "EnfPresent");
    assert!(report["f1"].as_f64().unwrap() > 0.8);
    let second = enfpd(&args);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn detect_on_a_constant_clip_does_not_claim_enf() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seconds", "25", "--label", "absent", "--noise", "0", "--objects", "0", "--drift", "0"]);
    let clip = dir.path().join("clip.y4m");
    let mut args = vec!["detect", clip.to_str().unwrap()];
    args.extend_from_slice(&SHORT_DETECT);
    let out = enfpd(&args);
    assert!(matches!(out.status.code(), Some(1 | 2)), "{:?}", out.status);
}

#[test]
fn detect_dump_writes_intermediate_products() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seconds", "25", "--seed", "5", "--format", "pgm"]);
    let dump = dir.path().join("dump");
    let clip = dir.path().join("clip");
    let mut args = vec!["detect", clip.to_str().unwrap(), "--dump", dump.to_str().unwrap()];
    args.extend_from_slice(&SHORT_DETECT);
    let out = enfpd(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["labels.pgm", "overlay.ppm", "steady.pbm", "steady_counts.csv", "enf.csv"] {
        assert!(dump.join(name).exists(), "{name}");
    }
    let spectrograms = std::fs::read_dir(&dump).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".f32")).count();
    assert!(spectrograms >= 2);
}

#[test]
fn segment_and_steady_mask_dumps() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seconds", "3", "--format", "raw"]);
    let clip = dir.path().join("clip.raw");
    let labels = dir.path().join("labels.pgm");
    let out = enfpd(&["segment", clip.to_str().unwrap(), "--out", labels.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read(&labels).unwrap().starts_with(b"P5\n160 120\n65535\n"));
    let mask = dir.path().join("mask.pbm");
    let counts = dir.path().join("counts.csv");
    let out = enfpd(&["steady-mask", clip.to_str().unwrap(), "--out", mask.to_str().unwrap(), "--counts", counts.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read(&mask).unwrap().starts_with(b"P4\n160 120\n"));
    assert!(std::fs::read_to_string(&counts).unwrap().starts_with("label,pixels,steady_pixels\n"));
}

#[test]
fn evaluate_missing_manifest_exits_with_error_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = enfpd(&["evaluate", "/no/such/manifest.jsonl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corpus_simulation_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    simulate(&corpus, &["--count", "4", "--seconds", "25", "--seed", "40"]);
    let manifest = corpus.join("manifest.jsonl");
    let items = enfpd_core::eval::read_manifest(&manifest).unwrap();
    assert_eq!(items.len(), 4);
    assert_eq!(items.iter().filter(|i| i.label.is_positive()).count(), 2);
    for item in &items {
        let seq = enfpd_core::ingest::load_frame_sequence(&item.path, enfpd_core::InputFormat::Y4m).unwrap();
        assert_eq!(seq.meta().width, 160);
    }
    let out_dir = dir.path().join("eval");
    let mut args = vec!["evaluate", manifest.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    args.extend_from_slice(&SHORT_DETECT);
    let out = enfpd(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    let tables = summary["tables"].as_array().unwrap();
    assert_eq!(tables.len(), 2);
    for table in tables {
        let any = table["rows"].as_array().unwrap().iter().find(|r| r["sensor_tag"] == "Any").unwrap();
        for metric in ["f1", "f2", "f3", "f4"] {
            assert!(any.get(metric).is_some(), "{metric}");
        }
    }
    let scores = std::fs::read_to_string(out_dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 5);
    assert!(out_dir.join("roc_Any_median_f1.csv").exists());
}

#[test]
fn config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = enfpd(&["config", "--set", "stft.window_seconds=10", "--set", "detect.representative_mode=mean", "--set", "steady.tau=400"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("stft.window_seconds=10\n") && text.contains("detect.representative_mode=mean\n"));
    let path = dir.path().join("enfpd.conf");
    std::fs::write(&path, &text).unwrap();
    let again = enfpd(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}
