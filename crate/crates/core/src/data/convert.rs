//! Image folder to IDX conversion: one subdirectory per class, sorted by name
//! to assign labels, grayscale via luma weights, bilinear resize.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertReport {
    pub images_path: PathBuf,
    pub labels_path: PathBuf,
    pub written: usize,
    /// Class directory names in label order.
    pub classes: Vec<String>,
    /// Files that could not be decoded, with the decoder's message.
    pub skipped: Vec<(PathBuf, String)>,
}

/// `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(src: &[u8], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<u8> {
    assert_eq!(src.len(), w * h);
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let at = |x: usize, y: usize| src[y * w + x] as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
            let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        entries.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    entries.sort();
    Ok(entries)
}

fn load_gray(path: &Path, size: usize) -> std::result::Result<Vec<u8>, String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane: Vec<u8> = if img.color().has_color() {
        img.to_rgb8()
            .pixels()
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    } else {
        img.to_luma8().into_raw()
    };
    Ok(resize_bilinear(&plane, w, h, size, size))
}

/// Converts `src/<class>/<image>` into `<out_prefix>-images-idx3-ubyte` and
/// `<out_prefix>-labels-idx1-ubyte`. Undecodable files are skipped and
/// reported; a class directory with no usable image is an error.
pub fn convert_to_idx(src: &Path, out_prefix: &Path, size: usize) -> Result<ConvertReport> {
    if size == 0 {
        return Err(Error::config("target size must be >= 1"));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(src)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::config(format!(
            "{} has no class subdirectories",
            src.display()
        )));
    }
    if class_dirs.len() > 256 {
        return Err(Error::config(format!(
            "{} classes exceed the u8 label range",
            class_dirs.len()
        )));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    let mut classes = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let mut count = 0usize;
        for file in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            match load_gray(&file, size) {
                Ok(plane) => {
                    pixels.extend_from_slice(&plane);
                    labels.push(label as u8);
                    count += 1;
                }
                Err(reason) => {
                    log::warn!("skipping {}: {reason}", file.display());
                    skipped.push((file, reason));
                }
            }
        }
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if count == 0 {
            return Err(Error::Consistency(format!(
                "class directory {name:?} has no readable images"
            )));
        }
        classes.push(name);
    }
    let dataset = Dataset::new(pixels, labels, size, size)?;
    let prefix = out_prefix.to_string_lossy();
    let images_path = PathBuf::from(format!("{prefix}-images-idx3-ubyte"));
    let labels_path = PathBuf::from(format!("{prefix}-labels-idx1-ubyte"));
    dataset.write_idx(&images_path, &labels_path)?;
    Ok(ConvertReport {
        images_path,
        labels_path,
        written: dataset.len(),
        classes,
        skipped,
    })
}
