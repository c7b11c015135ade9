use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use regionlime_core::image::{ImageTensor, RegionMask};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regionlime"))
}

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn regionlime")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// Small model trained once per test binary, plus a digit-like image and mask.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn model_spec(&self) -> String {
        format!("builtin-mlp:{}", self.path("model.bin"))
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let fx = Fixture { dir };
        let out = run(&[
            "train-mnist",
            "--data",
            mnist_dir().to_str().unwrap(),
            "--epochs",
            "1",
            "--train-limit",
            "600",
            "--hidden",
            "16",
            "--out",
            &fx.path("model.bin"),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

        // a thick vertical stroke on black, roughly a "1"
        let img = ImageTensor::from_fn(28, 28, 1, |y, x, _| if (5..23).contains(&y) && (12..17).contains(&x) { 0.95 } else { 0.0 });
        std::fs::write(fx.path("digit.png"), img.encode_png()).unwrap();
        let mask = RegionMask::from_fn(28, 28, |y, x| (4..24).contains(&y) && (10..19).contains(&x));
        std::fs::write(fx.path("mask.png"), mask.encode_png()).unwrap();
        fx
    })
}

#[test]
fn train_writes_model_and_report() {
    let fx = fixture();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(fx.path("model.bin.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["command"], "train-mnist");
    let acc = report["report"]["test_accuracy"].as_f64().unwrap();
    assert!(acc > 0.3, "accuracy {acc}");
}

#[test]
fn explain_is_byte_identical_across_runs() {
    let fx = fixture();
    let model = fx.model_spec();
    let (img, mask) = (fx.path("digit.png"), fx.path("mask.png"));
    for out in ["ex_a", "ex_b"] {
        let o = run(&[
            "explain", "--image", &img, "--mask", &mask, "--total-k", "8", "--samples", "200", "--predictor", &model, "--out", &fx.path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["explanation.json", "overlay.png", "trinary.png"] {
        let a = std::fs::read(fx.dir.path().join("ex_a").join(file)).unwrap();
        let b = std::fs::read(fx.dir.path().join("ex_b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
    let doc: Value = serde_json::from_slice(&std::fs::read(fx.dir.path().join("ex_a/explanation.json")).unwrap()).unwrap();
    let weights = doc["explanation"]["weights"].as_array().unwrap();
    assert_eq!(weights.len(), 8);
    assert_eq!(doc["explain_config"]["num_samples"], 200);
}

#[test]
fn segment_without_mask_clusters_whole_image() {
    let fx = fixture();
    let o = run(&["--json", "segment", "--image", &fx.path("digit.png"), "--total-k", "6", "--out", &fx.path("seg")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["inner_k"], 0);
    let doc: Value = serde_json::from_slice(&std::fs::read(fx.dir.path().join("seg/segmentation.json")).unwrap()).unwrap();
    assert_eq!(doc["superpixels"]["inner_labels"].as_array().unwrap().len(), 0);
    assert_eq!(doc["superpixels"]["num_superpixels"], 6);
    assert!(fx.dir.path().join("seg/labels.png").exists());
}

#[test]
fn edit_reports_prediction_changes() {
    let fx = fixture();
    let spec = fx.path("edits.json");
    std::fs::write(&spec, r#"[{"op": "shift", "dx": 4, "dy": 0}]"#).unwrap();
    let o = run(&[
        "--json", "edit", "--image", &fx.path("digit.png"), "--mask", &fx.path("mask.png"), "--spec", &spec, "--predictor",
        &fx.model_spec(), "--out", &fx.path("edit"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o)["report"].as_array().unwrap().clone();
    assert_eq!(report.len(), 10);
    let sum: f64 = report.iter().map(|r| r["edited_pct"].as_f64().unwrap()).sum();
    assert!((sum - 100.0).abs() < 1e-6);
    assert!(fx.dir.path().join("edit/edited.png").exists());
}

#[test]
fn robustness_at_zero_noise_has_zero_distance() {
    let fx = fixture();
    let out = fx.path("rob");
    let o = run(&[
        "robustness", "--dataset", mnist_dir().to_str().unwrap(), "--sigmas", "0", "--count", "1", "--samples", "100",
        "--predictor", &fx.model_spec(), "--out", &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(fx.dir.path().join("rob/records.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image_id,sigma,method,distance");
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let d: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(d, 0.0, "{line}");
    }
}

#[test]
fn missing_input_exits_2_with_json_error() {
    let fx = fixture();
    let o = run(&["--json", "explain", "--image", "/nonexistent.png", "--predictor", &fx.model_spec(), "--out", &fx.path("x")]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["exit_code"], 2);
}

#[test]
fn invalid_edit_exits_2() {
    let fx = fixture();
    let spec = fx.path("bad_edits.json");
    std::fs::write(&spec, r#"[{"op": "expand", "power": -1}]"#).unwrap();
    let o = run(&[
        "--json", "edit", "--image", &fx.path("digit.png"), "--mask", &fx.path("mask.png"), "--spec", &spec, "--predictor",
        &fx.model_spec(), "--out", &fx.path("bad"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["code"], "invalid_config");
}

#[test]
fn unreachable_remote_predictor_exits_3() {
    let fx = fixture();
    let o = run(&[
        "explain", "--image", &fx.path("digit.png"), "--total-k", "4", "--samples", "10", "--predictor",
        "remote:http://127.0.0.1:9,dims=28x28x1", "--out", &fx.path("remote"),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
