use std::path::Path;
use std::process::{Command, Output};

fn sounder(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sounder")).current_dir(dir).args(args).output().expect("sounder runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = sounder(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small 64-tone waveform, for speed.
fn small_waveform(dir: &Path, name: &str, tones: &str) {
    ok(dir, &["gen", "--tones", tones, "--rate", "96e6", "--bw", "64e6", "-o", name]);
}

const TINY: &str = r#"{
    "name": "tiny",
    "waveform": {"n_tones": 64, "sample_rate_hz": 96e6, "bandwidth_hz": 64e6, "optimize_cf": false},
    "taps": [{"delay_s": 1e-7, "gain_db": -20.0}],
    "impairments": {"snr_db_per_snapshot": 60.0, "seed": 3},
    "calibration": {"attenuation_db": 20.0},
    "processing": {"n_avrg": 50, "window": "chebyshev:60"},
    "expected_metrics": {"desk": {"main_peak_level_db": {"value": -20.0, "tolerance": 0.3}}}
}"#;

#[test]
fn sim_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_waveform(d, "w.bin", "64");
    for out in ["a.bin", "b.bin"] {
        ok(
            d,
            &["sim", "--waveform", "w.bin", "--tap", "2e-8:-30", "--snr", "40", "--n", "50", "--seed", "7", "-o", out],
        );
    }
    assert_eq!(std::fs::read(d.join("a.bin")).unwrap(), std::fs::read(d.join("b.bin")).unwrap());
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    ok(
        d,
        &["sim", "--waveform", "w.bin", "--tap", "2e-8:-30", "--snr", "40", "--n", "50", "--seed", "8", "-o", "c.bin"],
    );
    assert_ne!(std::fs::read(d.join("a.bin")).unwrap(), std::fs::read(d.join("c.bin")).unwrap());
}

#[test]
fn processing_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_waveform(d, "w.bin", "64");
    ok(d, &["sim", "--waveform", "w.bin", "--tap", "0:-10", "--snr", "40", "--n", "300", "--seed", "1", "-o", "s.bin"]);
    for (threads, out) in [("1", "one.bin"), ("4", "four.bin")] {
        let o = Command::new(env!("CARGO_BIN_EXE_sounder"))
            .current_dir(d)
            .env("SOUNDER_THREADS", threads)
            .args(["proc", "--waveform", "w.bin", "--snapshots", "s.bin", "--pre-average", "3", "-o", out])
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(d.join("one.bin")).unwrap(), std::fs::read(d.join("four.bin")).unwrap());
}

#[test]
fn gen_reaches_low_crest_factor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--tones", "2000", "--optimize-cf", "-o", "w.bin"]);
    let side = json(&d.join("w.json"));
    let cf = side["crest_factor_db"].as_f64().unwrap();
    assert!(cf <= 0.5, "crest factor {cf}");
    assert_eq!(side["n_samples"], 2400);
    assert_eq!(side["active_tones"], 2000);
    assert_eq!(std::fs::metadata(d.join("w.bin")).unwrap().len(), 2400 * 8);
}

#[test]
fn empty_taps_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut s: serde_json::Value = serde_json::from_str(TINY).unwrap();
    s["taps"] = serde_json::json!([]);
    std::fs::write(d.join("s.json"), s.to_string()).unwrap();
    let out = sounder(d, &["run", "s.json", "-o", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no propagation path defined"));
}

#[test]
fn malformed_scenario_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.json"), TINY.replace("\"taps\"", "\"tapz\"")).unwrap();
    assert_eq!(sounder(d, &["run", "s.json"]).status.code(), Some(2));
    assert_eq!(sounder(d, &["gen", "--tones", "many"]).status.code(), Some(2));
}

#[test]
fn missing_sidecar_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_waveform(d, "w.bin", "64");
    ok(d, &["sim", "--waveform", "w.bin", "--tap", "0:-10", "--n", "5", "-o", "s.bin"]);
    std::fs::remove_file(d.join("s.json")).unwrap();
    let out = sounder(d, &["proc", "--waveform", "w.bin", "--snapshots", "s.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing sidecar"));
}

#[test]
fn grid_mismatch_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_waveform(d, "w64.bin", "64");
    small_waveform(d, "w48.bin", "48");
    ok(d, &["sim", "--waveform", "w48.bin", "--tap", "0:-20", "--n", "20", "-o", "b2b.bin"]);
    ok(d, &["cal", "--waveform", "w48.bin", "--snapshots", "b2b.bin", "--attenuation", "20", "-o", "cal.bin"]);
    ok(d, &["sim", "--waveform", "w64.bin", "--tap", "0:-20", "--n", "20", "-o", "m.bin"]);
    let out = sounder(d, &["proc", "--waveform", "w64.bin", "--snapshots", "m.bin", "--cal", "cal.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn uncalibrated_proc_warns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_waveform(d, "w.bin", "64");
    ok(d, &["sim", "--waveform", "w.bin", "--tap", "0:-20", "--snr", "50", "--n", "20", "-o", "s.bin"]);
    let out = ok(d, &["proc", "--waveform", "w.bin", "--snapshots", "s.bin", "--track-phase", "false", "-o", "ir.bin"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("uncalibrated"));
    let side = json(&d.join("ir.json"));
    assert_eq!(side["calibrated"], false);
    assert_eq!(side["manifest"]["processing"]["track_phase"], false);
    ok(d, &["report", "--ir", "ir.bin"]);
    let m = json(&d.join("metrics.json"));
    assert!(m["metrics"]["mmpl_db"].is_null());
    assert!((m["metrics"]["main_peak"]["level_db"].as_f64().unwrap() + 20.0).abs() < 0.3);
    assert!(d.join("cir.csv").exists());
}

#[test]
fn staged_pipeline_matches_scenario_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.json"), TINY).unwrap();
    ok(d, &["run", "s.json", "-o", "out", "--keep-snapshots"]);
    let report = json(&d.join("out/metrics.json"));
    assert_eq!(report["checks"][0]["pass"], true);

    ok(
        d,
        &[
            "sim",
            "--waveform",
            "out/waveform.bin",
            "--scenario",
            "s.json",
            "--calibration",
            "--n",
            "50",
            "-o",
            "b2b.bin",
        ],
    );
    ok(d, &["cal", "--waveform", "out/waveform.bin", "--snapshots", "b2b.bin", "--attenuation", "20", "-o", "cal.bin"]);
    ok(d, &["sim", "--waveform", "out/waveform.bin", "--scenario", "s.json", "--n", "50", "-o", "m.bin"]);
    assert_eq!(std::fs::read(d.join("m.bin")).unwrap(), std::fs::read(d.join("out/snapshots.bin")).unwrap());
    ok(
        d,
        &[
            "proc",
            "--waveform",
            "out/waveform.bin",
            "--snapshots",
            "m.bin",
            "--cal",
            "cal.bin",
            "--window",
            "chebyshev:60",
            "-o",
            "ir.bin",
        ],
    );
    // The staged path goes through f32 snapshot files, the scenario run
    // does not.
    let (a, b) = (floats(&d.join("ir.bin")), floats(&d.join("out/ir.bin")));
    let peak = b.iter().fold(0f32, |m, v| m.max(v.abs()));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-4 * peak));
    ok(d, &["report", "--ir", "ir.bin", "--scenario", "s.json"]);
    let staged = json(&d.join("metrics.json"));
    for key in ["level_db", "delay_s"] {
        let x = staged["metrics"]["main_peak"][key].as_f64().unwrap();
        let y = report["metrics"]["main_peak"][key].as_f64().unwrap();
        assert!((x - y).abs() < 1e-3 * y.abs().max(1e-9), "{key}: {x} vs {y}");
    }
    let x = staged["single_snapshot_floor_db"].as_f64().unwrap();
    assert!((x - report["single_snapshot_floor_db"].as_f64().unwrap()).abs() < 0.05);
}

fn floats(path: &Path) -> Vec<f32> {
    std::fs::read(path).unwrap().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

#[test]
fn violated_expectation_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.json"), TINY.replace("\"value\": -20.0", "\"value\": -30.0")).unwrap();
    let out = sounder(d, &["run", "s.json", "-o", "out"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("main_peak_level_db"));
    assert!(d.join("out/metrics.json").exists());
}
