//! CIFAR-10 binary ingestion with monochrome conversion and resizing.
//!
//! The standard binary distribution stores each record as 1 label byte
//! followed by 3072 pixel bytes (1024 red, 1024 green, 1024 blue, row-major
//! 32x32). Training batches are `data_batch_1.bin` .. `data_batch_5.bin`,
//! the test set is `test_batch.bin`.

use std::fs;
use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Result, UrnError};
use crate::math::Vector;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * CIFAR_PIXELS;
pub const CIFAR_CLASSES: usize = 10;

/// ITU-R BT.601 luminance from `[0, 1]` RGB components.
#[inline]
pub fn rgb_to_luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Bilinear resize of a row-major grayscale image. Source corners map onto
/// target corners, which preserves constants and monotonicity.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, tw: usize, th: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    let mut out = Vec::with_capacity(tw * th);
    let scale_x = if tw > 1 {
        (sw - 1) as f64 / (tw - 1) as f64
    } else {
        0.0
    };
    let scale_y = if th > 1 {
        (sh - 1) as f64 / (th - 1) as f64
    } else {
        0.0
    };
    for ty in 0..th {
        let fy = ty as f64 * scale_y;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for tx in 0..tw {
            let fx = tx as f64 * scale_x;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
            let bottom = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

fn decode_batch_file(path: &Path, target_side: usize) -> Result<(Vec<Vector>, Vec<usize>)> {
    let bytes = fs::read(path)
        .map_err(|e| UrnError::Format(format!("cannot read {}: {e}", path.display())))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(UrnError::Format(format!(
            "{}: length {} is not a multiple of the {}-byte record size \
             (truncated at byte offset {})",
            path.display(),
            bytes.len(),
            CIFAR_RECORD_BYTES,
            bytes.len() - bytes.len() % CIFAR_RECORD_BYTES
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut gray = vec![0.0f64; CIFAR_PIXELS];
    for rec in 0..n {
        let base = rec * CIFAR_RECORD_BYTES;
        let label = bytes[base] as usize;
        if label >= CIFAR_CLASSES {
            return Err(UrnError::Format(format!(
                "{}: invalid label {} at byte offset {}",
                path.display(),
                label,
                base
            )));
        }
        let px = &bytes[base + 1..base + CIFAR_RECORD_BYTES];
        for p in 0..CIFAR_PIXELS {
            let r = px[p] as f64 / 255.0;
            let g = px[CIFAR_PIXELS + p] as f64 / 255.0;
            let b = px[2 * CIFAR_PIXELS + p] as f64 / 255.0;
            gray[p] = rgb_to_luminance(r, g, b);
        }
        let resized = resize_bilinear(&gray, CIFAR_SIDE, CIFAR_SIDE, target_side, target_side);
        inputs.push(Vector::from(resized));
        labels.push(label);
    }
    Ok((inputs, labels))
}

/// Loads the full CIFAR-10 binary distribution from `dir`, converting to
/// monochrome and resizing each image to `target_side x target_side`,
/// flattened row-major.
pub fn load_cifar10_mono(
    dir: &Path,
    target_side: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if target_side == 0 {
        return Err(UrnError::Config("target side must be positive".into()));
    }
    let mut train_inputs = Vec::new();
    let mut train_labels = Vec::new();
    for batch in 1..=5 {
        let (mut i, mut l) = decode_batch_file(&dir.join(format!("data_batch_{batch}.bin")), target_side)?;
        train_inputs.append(&mut i);
        train_labels.append(&mut l);
    }
    let (test_inputs, test_labels) = decode_batch_file(&dir.join("test_batch.bin"), target_side)?;
    let dim = target_side * target_side;
    Ok((
        LabeledDataset {
            inputs: train_inputs,
            labels: train_labels,
            input_dim: dim,
            n_classes: CIFAR_CLASSES,
        },
        LabeledDataset {
            inputs: test_inputs,
            labels: test_labels,
            input_dim: dim,
            n_classes: CIFAR_CLASSES,
        },
    ))
}
