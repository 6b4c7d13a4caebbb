use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, DatasetMeta, Variant};
use crate::rng::{seeded, streams};
use crate::{Error, Result};

pub const MAX_SYNTH_CONCEPTS: usize = 12;
const CONCEPT_NOISE: f64 = 0.1;

/// Small dataset with a known concept-to-task map: uniformly random concept
/// bits `c`, features `x = A (c + e)` with `e ~ N(0, 0.1^2)` and a seeded
/// `4k x k` map `A`, task `y = popcount(c) mod 2`.
pub fn synth_concepts(k: usize, count: usize, seed: u64) -> Result<Dataset> {
    if k == 0 || k > MAX_SYNTH_CONCEPTS {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={MAX_SYNTH_CONCEPTS}")));
    }
    let n = 4 * k;
    let unit = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, CONCEPT_NOISE).unwrap();

    let mut map_rng = seeded(seed, streams::SYNTH_MAP);
    let scale = 1.0 / (k as f64).sqrt();
    let map = Array2::from_shape_simple_fn((n, k), || unit.sample(&mut map_rng) * scale);

    let mut rng = seeded(seed, streams::SYNTH_SAMPLES);
    let mut concepts = Array2::<u8>::zeros((count, k));
    let mut noisy = Array2::<f64>::zeros((count, k));
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let mut ones = 0;
        for j in 0..k {
            let bit: bool = rng.random();
            concepts[[i, j]] = u8::from(bit);
            ones += usize::from(bit);
            noisy[[i, j]] = f64::from(u8::from(bit)) + noise.sample(&mut rng);
        }
        labels.push(ones % 2);
    }
    let x = noisy.dot(&map.t()).mapv(|v| v as f32);
    let meta = DatasetMeta {
        n,
        k,
        o: 2,
        concept_names: (0..k).map(|j| format!("c{j}")).collect(),
        variant: Variant::Synthetic,
        image_shape: None,
    };
    Dataset::new(meta, x, concepts, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_popcount_parity() {
        let d = synth_concepts(5, 300, 3).unwrap();
        for i in 0..d.len() {
            let s = d.sample(i);
            let ones: usize = s.c.iter().map(|&b| usize::from(b)).sum();
            assert_eq!(s.y, ones % 2);
        }
        assert_eq!(d.meta.n, 20);
    }

    #[test]
    fn zero_and_three_ones_parity() {
        let d = synth_concepts(4, 500, 11).unwrap();
        let zeros = (0..d.len()).find(|&i| d.sample(i).c.iter().all(|&b| b == 0)).unwrap();
        assert_eq!(d.sample(zeros).y, 0);
        let three = (0..d.len()).find(|&i| d.sample(i).c.iter().filter(|&&b| b == 1).count() == 3).unwrap();
        assert_eq!(d.sample(three).y, 1);
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(synth_concepts(4, 50, 9).unwrap(), synth_concepts(4, 50, 9).unwrap());
        assert_ne!(synth_concepts(4, 50, 9).unwrap(), synth_concepts(4, 50, 10).unwrap());
    }

    #[test]
    fn k_out_of_range() {
        assert!(synth_concepts(0, 10, 0).is_err());
        assert!(synth_concepts(13, 10, 0).is_err());
        assert!(synth_concepts(12, 10, 0).is_ok());
    }
}
