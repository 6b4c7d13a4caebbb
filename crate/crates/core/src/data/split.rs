use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{seeded, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        Self { train, val, test, seed }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidArgument(format!("split fractions {parts:?} outside [0, 1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Seeded shuffle, then a disjoint train/val/test partition. Train and val
/// sizes are rounded; test takes the remainder.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(spec.seed, streams::SPLIT));
    let n_train = ((spec.train * n as f64).round() as usize).min(n);
    let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((dataset.select(train), dataset.select(val), dataset.select(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_concepts;

    #[test]
    fn sizes_for_eighty_ten_ten() {
        let d = synth_concepts(3, 100, 0).unwrap();
        let (a, b, c) = split(&d, SplitSpec::new(0.8, 0.1, 0.1, 4)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
    }

    #[test]
    fn all_train_is_a_permutation() {
        let d = synth_concepts(3, 40, 1).unwrap();
        let (a, b, c) = split(&d, SplitSpec::new(1.0, 0.0, 0.0, 2)).unwrap();
        assert!(b.is_empty() && c.is_empty());
        assert_eq!(a.len(), 40);
        let mut rows: Vec<Vec<u32>> = a.features().outer_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        let mut orig: Vec<Vec<u32>> = d.features().outer_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        rows.sort();
        orig.sort();
        assert_eq!(rows, orig);
    }

    #[test]
    fn same_seed_same_split() {
        let d = synth_concepts(3, 64, 1).unwrap();
        let spec = SplitSpec::new(0.5, 0.25, 0.25, 8);
        assert_eq!(split(&d, spec).unwrap(), split(&d, spec).unwrap());
    }

    #[test]
    fn bad_fractions() {
        let d = synth_concepts(3, 10, 1).unwrap();
        assert!(split(&d, SplitSpec::new(0.8, 0.1, 0.05, 0)).is_err());
        assert!(split(&d, SplitSpec::new(1.2, -0.2, 0.0, 0)).is_err());
    }
}
