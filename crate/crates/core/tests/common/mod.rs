#![allow(dead_code)]

use std::path::Path;

use arelu_core::data::idx_paths;
use arelu_core::{Dataset, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8x8 images of four classes, each a bright 3x3 patch in its own quadrant
/// over low noise.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 4) as u8;
        let (r0, c0) = (usize::from(class / 2) * 4, usize::from(class % 2) * 4);
        let (dr, dc) = (rng.random_range(0..2), rng.random_range(0..2));
        for r in 0..8 {
            for c in 0..8 {
                let inside =
                    (r0 + dr..r0 + dr + 3).contains(&r) && (c0 + dc..c0 + dc + 3).contains(&c);
                pixels.push(if inside {
                    rng.random_range(180..=255)
                } else {
                    rng.random_range(0..40)
                });
            }
        }
        labels.push(class);
    }
    Dataset::new(pixels, labels, 8, 8).unwrap()
}

pub fn write_splits(dir: &Path, train: &Dataset, test: &Dataset) {
    std::fs::create_dir_all(dir).unwrap();
    let (ti, tl) = idx_paths(dir, "train");
    train.write_idx(&ti, &tl).unwrap();
    let (vi, vl) = idx_paths(dir, "t10k");
    test.write_idx(&vi, &vl).unwrap();
}

/// A data root holding `synth` (and a differently seeded `synth2`) plus a
/// config pointing at it with a tiny network.
pub fn fixture(root: &Path) -> ExperimentConfig {
    write_splits(
        &root.join("data/synth"),
        &synthetic(256, 1),
        &synthetic(64, 2),
    );
    write_splits(
        &root.join("data/synth2"),
        &synthetic(256, 3),
        &synthetic(64, 4),
    );
    let text = format!(
        "data_dir = {}\ndataset = synth\ntarget_dataset = synth2\nout_dir = {}\n\
         widths = 4,6,8\nlr = 0.01\nbatch_size = 16\nepochs = 2\nseeds = 1,2\n",
        root.join("data").display(),
        root.join("runs").display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

/// Dataset root for the real-data checks: `$ARELU_DATA_DIR`, `/root/data`
/// or `./data`, whichever holds an `mnist` directory.
pub fn real_data_root() -> Option<std::path::PathBuf> {
    let mut candidates = Vec::new();
    if let Some(d) = std::env::var_os("ARELU_DATA_DIR") {
        candidates.push(std::path::PathBuf::from(d));
    }
    candidates.push("/root/data".into());
    candidates.push("data".into());
    candidates
        .into_iter()
        .find(|d| d.join("mnist").join("train-images-idx3-ubyte").exists())
}
