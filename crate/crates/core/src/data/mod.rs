//! Datasets of `(x, c, y)` triples: features, binary concepts, task class.

mod cache;
pub mod idx;
mod mnist;
mod split;
mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use idx::{load_mnist_idx, RawMnist};
pub use mnist::{colorize_rgb, derive_even_odd, grey_as_rgb, rgb_channel_of};
pub use split::{split, SplitSpec};
pub use synth::synth_concepts;

use crate::{Error, Result};

/// Environment variable overriding where MNIST IDX files are looked up.
pub const DATA_DIR_ENV: &str = "ANYCBM_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Grey,
    Rgb,
    Synthetic,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Grey => "grey",
            Variant::Rgb => "rgb",
            Variant::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grey" | "gray" => Ok(Variant::Grey),
            "rgb" => Ok(Variant::Rgb),
            "synthetic" => Ok(Variant::Synthetic),
            other => Err(Error::InvalidArgument(format!("unknown dataset variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Feature width.
    pub n: usize,
    /// Concept count.
    pub k: usize,
    /// Task class count.
    pub o: usize,
    pub concept_names: Vec<String>,
    pub variant: Variant,
    /// `(channels, rows, cols)` for image data, channel-major layout.
    pub image_shape: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledSample<'a> {
    pub x: ArrayView1<'a, f32>,
    pub c: ArrayView1<'a, u8>,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    x: Array2<f32>,
    concepts: Array2<u8>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, x: Array2<f32>, concepts: Array2<u8>, labels: Vec<usize>) -> Result<Self> {
        let count = labels.len();
        if x.dim() != (count, meta.n) {
            return Err(Error::Shape(format!("features {:?}, expected ({count}, {})", x.dim(), meta.n)));
        }
        if concepts.dim() != (count, meta.k) {
            return Err(Error::Shape(format!("concepts {:?}, expected ({count}, {})", concepts.dim(), meta.k)));
        }
        if meta.concept_names.len() != meta.k {
            return Err(Error::Shape(format!("{} concept names for k = {}", meta.concept_names.len(), meta.k)));
        }
        if concepts.iter().any(|&c| c > 1) {
            return Err(Error::InvalidArgument("concept entries must be 0 or 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= meta.o) {
            return Err(Error::InvalidArgument(format!("label {bad} >= o = {}", meta.o)));
        }
        crate::nn::ensure_finite(&x, "dataset features")?;
        Ok(Self {
            meta,
            x,
            concepts,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.x
    }

    pub fn concepts(&self) -> &Array2<u8> {
        &self.concepts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn concepts_f32(&self) -> Array2<f32> {
        self.concepts.mapv(f32::from)
    }

    pub fn sample(&self, i: usize) -> LabeledSample<'_> {
        LabeledSample {
            x: self.x.row(i),
            c: self.concepts.row(i),
            y: self.labels[i],
        }
    }

    /// New dataset holding rows `indices` in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            meta: self.meta.clone(),
            x: self.x.select(Axis(0), indices),
            concepts: self.concepts.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// First `limit` samples, or everything when `limit` is `None`.
    pub fn truncated(&self, limit: Option<usize>) -> Dataset {
        match limit {
            Some(n) if n < self.len() => self.select(&(0..n).collect::<Vec<_>>()),
            _ => self.clone(),
        }
    }

    /// One-hot task targets, `len x o`.
    pub fn task_one_hot(&self) -> Array2<u8> {
        let mut out = Array2::zeros((self.len(), self.meta.o));
        for (i, &y) in self.labels.iter().enumerate() {
            out[[i, y]] = 1;
        }
        out
    }

    pub(crate) fn replace_features(&self, x: Array2<f32>, meta: DatasetMeta) -> Result<Dataset> {
        Dataset::new(meta, x, self.concepts.clone(), self.labels.clone())
    }
}

/// Train and test halves of the MNIST distribution as parity datasets.
#[derive(Debug, Clone)]
pub struct MnistParity {
    pub train: Dataset,
    pub test: Dataset,
}

/// Directory holding the four MNIST IDX files: `$ANYCBM_DATA_DIR` if set,
/// else `fallback`.
pub fn mnist_dir(fallback: impl AsRef<Path>) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.as_ref().to_path_buf())
}

pub fn load_mnist_parity(dir: impl AsRef<Path>) -> Result<MnistParity> {
    let dir = dir.as_ref();
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok(MnistParity {
        train: derive_even_odd(&train)?,
        test: derive_even_odd(&test)?,
    })
}
