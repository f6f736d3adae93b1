use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use deshadow::data::DatasetName;
use deshadow::image::Image;
use deshadow::synth::{synthetic_pair, write_synthetic_dataset};
use tempfile::TempDir;

fn deshadow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deshadow"))
        .args(args)
        .env_remove("DESHADOW_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = deshadow(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    deshadow(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(counts: (usize, usize)) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(dir.path(), DatasetName::Jung, counts, 64, 3).unwrap();
    dir
}

/// Untrained checkpoint: zero training steps.
fn fresh_checkpoint(data: &Path, out: &Path) -> String {
    ok(&[
        "train", "--dataset-root", s(data), "--dataset", "jung", "--size", "0", "--steps", "0", "--out", s(out),
    ]);
    s(&out.join("last.json")).to_string()
}

#[test]
fn decompose_then_reconstruct_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let img = synthetic_pair("p", 50, 37, 1).unwrap().shadow;
    let input = dir.path().join("in.png");
    img.save_png(&input).unwrap();
    let bands = dir.path().join("bands");
    ok(&["decompose", "--input", s(&input), "--levels", "3", "--out", s(&bands)]);
    for f in ["high_0.pfm", "high_1.pfm", "high_2.pfm", "low.pfm", "pyramid.json"] {
        assert!(bands.join(f).is_file(), "{f}");
    }
    assert_eq!(Image::load_pfm(bands.join("low.pfm")).unwrap().dims(), (7, 5));

    let back = dir.path().join("back.pfm");
    ok(&["reconstruct", "--input", s(&bands), "--out", s(&back)]);
    let original = Image::load(&input).unwrap();
    assert!(Image::load_pfm(&back).unwrap().max_abs_diff(&original) < 1e-5);

    let png = dir.path().join("back.png");
    ok(&["reconstruct", "--input", s(&bands.join("pyramid.json")), "--out", s(&png)]);
    assert_eq!(Image::load(&png).unwrap(), original);
}

#[test]
fn decompose_rejects_too_many_levels() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    Image::constant(16, 16, 3, 0.5).unwrap().save_png(&input).unwrap();
    assert_eq!(code(&["decompose", "--input", s(&input), "--levels", "4", "--out", s(dir.path())]), 2);
}

#[test]
fn untrained_model_returns_the_input() {
    let data = dataset((1, 1));
    let ckpt = fresh_checkpoint(data.path(), &data.path().join("run"));
    let input = data.path().join("jung/test/shadow/000.png");
    let out = data.path().join("out.png");
    let trip = data.path().join("trip.png");
    let target = data.path().join("jung/test/target/000.png");
    ok(&[
        "infer", "--checkpoint", &ckpt, "--input", s(&input), "--out", s(&out), "--target", s(&target),
        "--triptych", s(&trip),
    ]);
    assert_eq!(Image::load(&out).unwrap(), Image::load(&input).unwrap());
    assert_eq!(Image::load(&trip).unwrap().dims(), (64, 192));
}

#[test]
fn levels_must_match_checkpoint() {
    let data = dataset((1, 1));
    let ckpt = fresh_checkpoint(data.path(), &data.path().join("run"));
    let input = data.path().join("jung/test/shadow/000.png");
    let out = data.path().join("out.png");
    assert_eq!(code(&["infer", "--checkpoint", &ckpt, "--input", s(&input), "--out", s(&out), "--levels", "2"]), 1);
    assert!(!out.exists());
}

#[test]
fn small_inputs_follow_resize_policy() {
    let data = dataset((1, 1));
    let ckpt = fresh_checkpoint(data.path(), &data.path().join("run"));
    let input = data.path().join("small.png");
    Image::constant(20, 24, 3, 0.25).unwrap().save_png(&input).unwrap();
    let out = data.path().join("out.png");
    assert_eq!(code(&["infer", "--checkpoint", &ckpt, "--input", s(&input), "--out", s(&out)]), 2);
    ok(&[
        "infer", "--checkpoint", &ckpt, "--input", s(&input), "--out", s(&out), "--resize-policy", "resize",
    ]);
    let got = Image::load(&out).unwrap();
    assert_eq!(got.dims(), (20, 24));
    assert!(got.max_abs_diff(&Image::load(&input).unwrap()) <= 1.0 / 255.0 + 1e-6);
}

#[test]
fn eval_and_report() {
    let data = dataset((1, 3));
    let root = data.path();
    let input = root.join("input");
    let stdout = ok(&[
        "eval", "--dataset-root", s(root), "--dataset", "jung", "--size", "0", "--out", s(&input), "--compare-images",
    ]);
    assert!(stdout.starts_with("Input jung test (3 images"), "{stdout}");
    let csv = fs::read_to_string(input.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert_eq!(Image::load(input.join("compare/002.png")).unwrap().dims(), (64, 192));

    let ckpt = fresh_checkpoint(root, &root.join("run"));
    let model = root.join("model");
    ok(&[
        "eval", "--dataset-root", s(root), "--dataset", "jung", "--size", "0", "--checkpoint", &ckpt, "--out", s(&model),
    ]);
    // an untrained model scores exactly like the raw input
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(input.join("metrics.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(model.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(a["aggregate"], b["aggregate"]);
    assert_eq!(b["method"], "Model");

    let table = root.join("table");
    let md = ok(&[
        "report", s(&input.join("metrics.json")), s(&model.join("metrics.json")), "--out", s(&table),
    ]);
    assert!(md.contains("| Input") && md.contains("| Model"), "{md}");
    assert!(table.join("table.csv").is_file() && table.join("table.md").is_file());
}

#[test]
fn train_writes_logs_and_checkpoints() {
    let data = dataset((2, 1));
    let out = data.path().join("run");
    ok(&[
        "train", "--dataset-root", s(data.path()), "--dataset", "jung", "--size", "0", "--crop", "32", "--steps", "4",
        "--eval-every", "2", "--out", s(&out),
    ]);
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("step,l_total,l_mse,l_ssim"));
    assert_eq!(log.lines().count(), 5);
    assert_eq!(fs::read_to_string(out.join("timing.csv")).unwrap().lines().count(), 5);
    for f in ["train_config.json", "eval_log.csv", "last.json", "last.bin", "best.json", "best.bin"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    assert_eq!(code(&["train", "--bogus"]), 1);
    assert_eq!(code(&["train", "--dataset", "jung", "--out", "/tmp/x"]), 1);
    let empty = tempfile::tempdir().unwrap();
    let out = empty.path().join("run");
    assert_eq!(
        code(&["eval", "--dataset-root", s(empty.path()), "--dataset", "kligler", "--out", s(&out)]),
        2
    );
    assert_eq!(code(&["infer", "--checkpoint", "/nonexistent.json", "--input", "a.png", "--out", "b.png"]), 2);
}

#[test]
fn gradcheck_passes_and_flags_corruption() {
    let args = ["gradcheck", "--features", "4", "--heads", "2", "--block", "GIA", "--block", "DGFN"];
    let text = ok(&args);
    assert!(text.lines().last().unwrap().ends_with("pass"), "{text}");
    let mut bad = args.to_vec();
    bad.extend(["--corrupt", "DGFN"]);
    let out = deshadow(&bad);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).lines().any(|l| l.starts_with("DGFN") && l.ends_with("FAIL")));
}
