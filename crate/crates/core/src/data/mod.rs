//! Datasets in IDX format, seeded mini-batching and an image-folder converter.

mod convert;
mod idx;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub use convert::{convert_to_idx, luma, resize_bilinear, ConvertReport};
pub use idx::{IMAGES_MAGIC, LABELS_MAGIC};

/// Labeled grayscale images. Pixels are kept as raw bytes and scaled by
/// `1/255` into `[0, 1]` whenever a batch tensor is materialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    height: usize,
    width: usize,
}

impl Dataset {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape {
                dims: vec![height, width],
                reason: "image extents must be >= 1".into(),
            });
        }
        if pixels.len() != labels.len() * height * width {
            return Err(Error::Consistency(format!(
                "{} pixel bytes for {} images of {height}x{width}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            pixels,
            labels,
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_hw(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Per-sample tensor dims, `[1, H, W]`.
    pub fn sample_dims(&self) -> [usize; 3] {
        [1, self.height, self.width]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// One more than the largest label present.
    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Images `[N, 1, H, W]` scaled to `[0, 1]` and their labels, for the given
    /// sample indices.
    pub fn gather<T: Real>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * plane);
        let mut labels = Vec::with_capacity(indices.len());
        let scale = T::of(1.0 / 255.0);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::contract(format!(
                    "sample {i} out of range ({})",
                    self.len()
                )));
            }
            data.extend(
                self.pixels[i * plane..(i + 1) * plane]
                    .iter()
                    .map(|&p| T::of(p as f64) * scale),
            );
            labels.push(self.labels[i] as usize);
        }
        let shape = Shape::new([indices.len(), 1, self.height, self.width])?;
        Ok((Tensor::from_parts(shape, data), labels))
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let plane = self.height * self.width;
        let mut pixels = Vec::with_capacity(indices.len() * plane);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::contract(format!(
                    "sample {i} out of range ({})",
                    self.len()
                )));
            }
            pixels.extend_from_slice(&self.pixels[i * plane..(i + 1) * plane]);
            labels.push(self.labels[i]);
        }
        Dataset::new(pixels, labels, self.height, self.width)
    }

    /// The first `n` samples after a seeded shuffle (all of them if `n >= len`).
    pub fn subset(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.truncate(n.min(self.len()));
        self.select(&order)
    }

    pub fn write_idx(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        idx::write_idx(
            images_path,
            IMAGES_MAGIC,
            &[self.len(), self.height, self.width],
            &self.pixels,
        )?;
        idx::write_idx(labels_path, LABELS_MAGIC, &[self.len()], &self.labels)
    }
}

/// Reads an image/label IDX pair.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = idx::read_idx(images_path, IMAGES_MAGIC)?;
    let labels = idx::read_idx(labels_path, LABELS_MAGIC)?;
    let n_img = images.dims[0];
    let n_lab = labels.dims[0];
    if n_img != n_lab {
        return Err(Error::Consistency(format!(
            "{} has {n_img} images but {} has {n_lab} labels",
            images_path.display(),
            labels_path.display()
        )));
    }
    Dataset::new(
        images.payload,
        labels.payload,
        images.dims[1],
        images.dims[2],
    )
}

/// Conventional file names of a split (`train` or `t10k`) inside `dir`.
pub fn idx_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}-images-idx3-ubyte")),
        dir.join(format!("{split}-labels-idx1-ubyte")),
    )
}

/// Seed of the shuffle for a given epoch.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Index batches over one epoch of a seeded Fisher-Yates permutation.
/// The final partial batch is kept.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchIterator {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(BatchIterator {
            order,
            batch_size,
            pos: 0,
        })
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(batch)
    }
}

pub fn batches(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<BatchIterator> {
    BatchIterator::new(dataset.len(), batch_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> Dataset {
        Dataset::new(vec![0, 255, 255, 0, 0, 0, 255, 255], vec![3, 7], 2, 2).unwrap()
    }

    #[test]
    fn pixels_scale_to_unit_interval() {
        let (x, y) = tiny().gather::<f32>(&[0, 1]).unwrap();
        assert_eq!(x.dims(), &[2, 1, 2, 2]);
        assert_eq!(x.data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(y, vec![3, 7]);
    }

    #[test]
    fn two_sample_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_paths(dir.path(), "train");
        tiny().write_idx(&ip, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back, tiny());
        let raw = std::fs::read(&ip).unwrap();
        assert_eq!(&raw[..4], &[0, 0, 8, 3]);
        assert_eq!(&raw[4..16], &[0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2]);
    }

    #[test]
    fn swapped_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_paths(dir.path(), "train");
        tiny().write_idx(&ip, &lp).unwrap();
        let err = load_idx(&lp, &ip).unwrap_err();
        match err {
            Error::Format { reason, .. } => assert!(reason.contains("0x00000803"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_paths(dir.path(), "train");
        tiny().write_idx(&ip, &lp).unwrap();
        let mut raw = std::fs::read(&ip).unwrap();
        raw.pop();
        std::fs::write(&ip, raw).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Io { .. })));
        std::fs::write(&ip, [0u8, 0]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Io { .. })));
    }

    #[test]
    fn count_mismatch_is_a_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_paths(dir.path(), "train");
        tiny().write_idx(&ip, &lp).unwrap();
        idx::write_idx(&lp, LABELS_MAGIC, &[3], &[1, 2, 3]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
    }

    #[test]
    fn batch_sizes_keep_the_remainder() {
        let sizes: Vec<usize> = BatchIterator::new(10, 4, 0)
            .unwrap()
            .map(|b| b.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(BatchIterator::new(10, 0, 0).is_err());
    }

    #[test]
    fn batch_order_is_seeded() {
        let a: Vec<_> = BatchIterator::new(1000, 64, 5).unwrap().collect();
        let b: Vec<_> = BatchIterator::new(1000, 64, 5).unwrap().collect();
        let c: Vec<_> = BatchIterator::new(1000, 64, 6).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn subset_is_seeded_prefix() {
        let d = Dataset::new((0..20).collect(), (0..20).map(|i| i % 10).collect(), 1, 1).unwrap();
        let s = d.subset(5, 3).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s, d.subset(5, 3).unwrap());
        assert_eq!(d.subset(100, 3).unwrap().len(), 20);
    }

    proptest! {
        #[test]
        fn epoch_visits_every_sample_once(len in 1usize..500, bs in 1usize..70, seed in any::<u64>()) {
            let mut seen: Vec<usize> = BatchIterator::new(len, bs, seed).unwrap().flatten().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..len).collect::<Vec<_>>());
        }

        #[test]
        fn idx_round_trip_is_byte_exact(
            n in 1usize..20, h in 1usize..9, w in 1usize..9, seed in any::<u64>()
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pixels: Vec<u8> = (0..n * h * w).map(|_| rng.random()).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
            let d = Dataset::new(pixels, labels, h, w).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let (ip, lp) = idx_paths(dir.path(), "x");
            d.write_idx(&ip, &lp).unwrap();
            let back = load_idx(&ip, &lp).unwrap();
            prop_assert_eq!(&back, &d);
            let (ip2, lp2) = idx_paths(dir.path(), "y");
            back.write_idx(&ip2, &lp2).unwrap();
            prop_assert_eq!(std::fs::read(&ip).unwrap(), std::fs::read(&ip2).unwrap());
            prop_assert_eq!(std::fs::read(&lp).unwrap(), std::fs::read(&lp2).unwrap());
        }
    }
}
