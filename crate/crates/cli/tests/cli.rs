use std::path::Path;
use std::process::{Command, Output};

use arelu_core::data::idx_paths;
use arelu_core::Dataset;

fn arelu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arelu"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// 8x8 images of two classes: a bright left half or a bright right half.
fn halves(n: usize) -> Dataset {
    let mut pixels = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        for _ in 0..8 {
            for c in 0..8 {
                let bright = (c < 4) == (label == 0);
                pixels.push(if bright {
                    200 + (i % 50) as u8
                } else {
                    (i % 30) as u8
                });
            }
        }
        labels.push(label);
    }
    Dataset::new(pixels, labels, 8, 8).unwrap()
}

fn write_dataset(root: &Path, name: &str) {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    for (split, n) in [("train", 64), ("t10k", 32)] {
        let (images, labels) = idx_paths(&dir, split);
        halves(n).write_idx(&images, &labels).unwrap();
    }
}

fn train_args<'a>(root: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data-dir",
        root,
        "--dataset",
        "halves",
        "--out-dir",
        out,
        "--run-id",
        "r",
        "--epochs",
        "2",
        "--seeds",
        "1",
        "--batch-size",
        "16",
        "--lr",
        "0.01",
        "--set",
        "widths=4,4,4",
    ]
}

#[test]
fn train_writes_a_run_and_evaluate_reads_it_back() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), "halves");
    let root = tmp.path().to_str().unwrap();
    let out = tmp.path().join("runs");
    let out_s = out.to_str().unwrap();

    let o = arelu(&train_args(root, out_s));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("r mean test_acc"));
    let run = out.join("r");
    for f in ["config.txt", "metrics.csv", "seed-1.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ckpt = run.join("seed-1.ckpt");
    let o = arelu(&["evaluate", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("on 32 samples"));

    let o = arelu(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--min-acc",
        "100.1",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unreachable_accuracy_threshold_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), "halves");
    let root = tmp.path().to_str().unwrap();
    let out = tmp.path().join("runs");
    let mut args = train_args(root, out.to_str().unwrap());
    args.extend(["--min-acc", "101"]);
    assert_eq!(arelu(&args).status.code(), Some(3));
}

#[test]
fn divergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), "halves");
    let root = tmp.path().to_str().unwrap();
    let out = tmp.path().join("runs");
    let mut args = train_args(root, out.to_str().unwrap());
    args.extend(["--optimizer", "sgd", "--set", "lr=1e12"]);
    let o = arelu(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(out.join("r").join("seed-1.FAILED").exists());
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(
        arelu(&["train", "--out-dir", out, "--set", "no_such_key=1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        arelu(&["train", "--out-dir", out, "--activation", "nope"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        arelu(&["train", "--out-dir", out, "--epochs", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(arelu(&["train", "--lr", "fast"]).status.code(), Some(1));
    assert_eq!(arelu(&["gradcheck", "--op", "nope"]).status.code(), Some(1));
    assert_eq!(arelu(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(arelu(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dataset_is_a_run_error() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let out = tmp.path().join("runs");
    let o = arelu(&train_args(root, out.to_str().unwrap()));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_reports_each_operation() {
    let o = arelu(&[
        "gradcheck",
        "--op",
        "arelu",
        "--op",
        "relu",
        "--trials",
        "20",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    for op in ["arelu", "relu"] {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(op));
        assert!(line.is_some_and(|l| l.contains("PASS")), "{text}");
    }
}

#[test]
fn convert_builds_an_idx_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    for (class, shade) in [("a", 10u8), ("b", 240u8)] {
        let dir = src.join(class);
        std::fs::create_dir_all(&dir).unwrap();
        let img = image::RgbImage::from_pixel(12, 12, image::Rgb([shade; 3]));
        img.save(dir.join("x.png")).unwrap();
    }
    let prefix = tmp.path().join("out").join("train");
    std::fs::create_dir_all(prefix.parent().unwrap()).unwrap();
    let o = arelu(&[
        "convert",
        "--src",
        src.to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
        "--size",
        "6",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (images, labels) = idx_paths(&tmp.path().join("out"), "train");
    let ds = arelu_core::data::load_idx(&images, &labels).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.image_hw(), (6, 6));
    assert_eq!(ds.labels(), &[0, 1]);
    assert!(ds.pixels()[..36].iter().all(|&p| p == 10));
}
