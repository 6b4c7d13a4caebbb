use ndarray::Array2;
use proptest::prelude::*;

use anycbm::data::{colorize_rgb, grey_as_rgb, split, synth_concepts, Dataset, DatasetMeta, SplitSpec, Variant};
use anycbm::eval::{intervene, roc_auc, ConceptFamilies};
use anycbm::nn::{bce_with_logits, mse, softmax_ce, softmax_rows};

fn scored(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2..=max).prop_flat_map(|n| {
        (
            proptest::collection::vec(-50i32..50, n).prop_map(|v| v.into_iter().map(|s| f64::from(s) / 4.0).collect()),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

fn both_classes(labels: &[bool]) -> bool {
    labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-30.0f64..30.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn grey_images(count: usize) -> impl Strategy<Value = Dataset> {
    (
        proptest::collection::vec(0.0f32..=1.0, count * 784),
        proptest::collection::vec(0usize..10, count),
    )
        .prop_map(move |(pixels, digits)| {
            let x = Array2::from_shape_vec((count, 784), pixels).unwrap();
            let c = Array2::from_shape_fn((count, 10), |(i, j)| u8::from(digits[i] == j));
            let y = digits.iter().map(|d| d % 2).collect();
            let meta = DatasetMeta {
                n: 784,
                k: 10,
                o: 2,
                concept_names: (0..10).map(|d| d.to_string()).collect(),
                variant: Variant::Grey,
                image_shape: Some((1, 28, 28)),
            };
            Dataset::new(meta, x, c, y).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn roc_auc_ignores_strictly_monotone_maps((scores, labels) in scored(60)) {
        prop_assume!(both_classes(&labels));
        let base = roc_auc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3) + 2.0 * s - 7.0).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert_eq!(roc_auc(&cubed, &labels).unwrap(), base);
        prop_assert_eq!(roc_auc(&squashed, &labels).unwrap(), base);
    }

    #[test]
    fn roc_auc_complement_sums_to_one((scores, labels) in scored(60)) {
        prop_assume!(both_classes(&labels));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let total = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
    }

    #[test]
    fn intervene_is_idempotent(
        c_hat in proptest::collection::vec(0.0f32..1.0, 6 * 5),
        truth in proptest::collection::vec(0u8..2, 6 * 5),
        groups in proptest::sample::subsequence((0..5).collect::<Vec<usize>>(), 0..=5),
    ) {
        let c_hat = Array2::from_shape_vec((6, 5), c_hat).unwrap();
        let truth = Array2::from_shape_vec((6, 5), truth).unwrap();
        let families = ConceptFamilies::singletons(5);
        let once = intervene(c_hat.view(), truth.view(), &families, &groups).unwrap();
        let twice = intervene(once.view(), truth.view(), &families, &groups).unwrap();
        prop_assert_eq!(&once, &twice);
        for (j, col) in once.columns().into_iter().enumerate() {
            if groups.contains(&j) {
                prop_assert!(col.iter().zip(truth.column(j)).all(|(&v, &t)| v == f32::from(t)));
            } else {
                prop_assert_eq!(col, c_hat.column(j));
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(logits in matrix(4, 5)) {
        for row in softmax_rows(logits.view()).rows() {
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
        }
        let narrow = logits.mapv(|v| v as f32);
        for row in softmax_rows(narrow.view()).rows() {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn losses_are_non_negative(
        logits in matrix(5, 3),
        other in matrix(5, 3),
        bits in proptest::collection::vec(0u8..2, 15),
        classes in proptest::collection::vec(0usize..3, 5),
    ) {
        let targets = Array2::from_shape_vec((5, 3), bits.into_iter().map(f64::from).collect()).unwrap();
        prop_assert!(bce_with_logits(logits.view(), targets.view()).unwrap().0 >= 0.0);
        prop_assert!(softmax_ce(logits.view(), &classes).unwrap().0 >= 0.0);
        prop_assert!(mse(logits.view(), other.view()).unwrap().0 >= 0.0);
    }

    #[test]
    fn splits_preserve_count_and_pairing(count in 20usize..200, train in 0.1f64..0.8, seed in 0u64..1000) {
        let data = synth_concepts(3, count, seed).unwrap();
        let val = (1.0 - train) / 2.0;
        let (a, b, c) = split(&data, SplitSpec::new(train, val, 1.0 - train - val, seed)).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), count);
        for part in [&a, &b, &c] {
            for i in 0..part.len() {
                let s = part.sample(i);
                let ones = s.c.iter().filter(|&&v| v == 1).count();
                prop_assert_eq!(s.y, ones % 2);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn image_variants_keep_samples_and_pairing(data in grey_images(4), seed in 0u64..100) {
        let rgb = colorize_rgb(&data, seed).unwrap();
        let wide = grey_as_rgb(&data).unwrap();
        for derived in [&rgb, &wide] {
            prop_assert_eq!(derived.len(), data.len());
            prop_assert_eq!(derived.concepts(), data.concepts());
            prop_assert_eq!(derived.labels(), data.labels());
            prop_assert_eq!(derived.meta.n, 3 * 784);
        }
        for i in 0..data.len() {
            let s = data.sample(i);
            prop_assert_eq!(s.c.iter().map(|&v| usize::from(v)).sum::<usize>(), 1);
            let digit = s.c.iter().position(|&v| v == 1).unwrap();
            prop_assert_eq!(s.y, digit % 2);
        }
    }
}
