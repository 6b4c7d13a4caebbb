use ndarray::{s, Array2};
use rand::Rng;

use super::{Dataset, DatasetMeta, RawMnist, Variant};
use crate::rng::{seeded, streams};
use crate::{Error, Result};

/// Even/odd task with one concept per digit: `c` is one-hot at the digit and
/// `y = digit mod 2`.
pub fn derive_even_odd(raw: &RawMnist) -> Result<Dataset> {
    let count = raw.len();
    let n = raw.images.pixels_per_image();
    if let Some(&bad) = raw.labels.iter().find(|&&d| d > 9) {
        return Err(Error::InvalidArgument(format!("digit label {bad} outside 0-9")));
    }
    let x = Array2::from_shape_vec(
        (count, n),
        raw.images.pixels.iter().map(|&p| f32::from(p) / 255.0).collect(),
    )
    .map_err(|e| Error::Shape(e.to_string()))?;
    let mut concepts = Array2::zeros((count, 10));
    let mut labels = Vec::with_capacity(count);
    for (i, &digit) in raw.labels.iter().enumerate() {
        concepts[[i, digit as usize]] = 1;
        labels.push(usize::from(digit % 2));
    }
    let meta = DatasetMeta {
        n,
        k: 10,
        o: 2,
        concept_names: (0..10).map(|d| format!("digit_{d}")).collect(),
        variant: Variant::Grey,
        image_shape: Some((1, raw.images.rows, raw.images.cols)),
    };
    Dataset::new(meta, x, concepts, labels)
}

/// Channel that sample `index` is painted into under `seed`.
pub fn rgb_channel_of(seed: u64, index: usize) -> usize {
    seeded(seed, streams::PER_SAMPLE_BASE + index as u64).random_range(0..3)
}

/// Places each grey image into one uniformly drawn colour channel, leaving
/// the other two black. Concepts and labels are untouched.
pub fn colorize_rgb(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let (rows, cols) = single_channel_shape(dataset)?;
    let plane = rows * cols;
    let mut x = Array2::zeros((dataset.len(), 3 * plane));
    for (i, src) in dataset.features().outer_iter().enumerate() {
        let ch = rgb_channel_of(seed, i);
        x.slice_mut(s![i, ch * plane..(ch + 1) * plane]).assign(&src);
    }
    dataset.replace_features(x, rgb_meta(&dataset.meta, Variant::Rgb, rows, cols))
}

/// Replicates the grey channel into all three channels so an RGB-shaped
/// network can consume greyscale images.
pub fn grey_as_rgb(dataset: &Dataset) -> Result<Dataset> {
    let (rows, cols) = single_channel_shape(dataset)?;
    let plane = rows * cols;
    let mut x = Array2::zeros((dataset.len(), 3 * plane));
    for ch in 0..3 {
        x.slice_mut(s![.., ch * plane..(ch + 1) * plane]).assign(dataset.features());
    }
    dataset.replace_features(x, rgb_meta(&dataset.meta, Variant::Grey, rows, cols))
}

fn single_channel_shape(dataset: &Dataset) -> Result<(usize, usize)> {
    match (dataset.meta.variant, dataset.meta.image_shape) {
        (Variant::Grey, Some((1, rows, cols))) if rows * cols == dataset.meta.n => Ok((rows, cols)),
        (variant, shape) => Err(Error::InvalidArgument(format!(
            "expected a single-channel grey image dataset, got {variant} with shape {shape:?}"
        ))),
    }
}

fn rgb_meta(meta: &DatasetMeta, variant: Variant, rows: usize, cols: usize) -> DatasetMeta {
    DatasetMeta {
        n: 3 * rows * cols,
        variant,
        image_shape: Some((3, rows, cols)),
        ..meta.clone()
    }
}
