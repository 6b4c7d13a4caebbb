use ndarray::{ArrayView1, ArrayView2, Axis};

use crate::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting one
/// half. Computed from average ranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ROC-AUC scores".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes ({positives} positive, {negatives} negative)"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based ranks of positives, ties sharing their average rank.
    let mut positive_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let tied_positives = order[i..=j].iter().filter(|&&k| labels[k]).count();
        positive_rank_sum += avg_rank * tied_positives as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Unweighted mean of per-column ROC-AUC.
pub fn macro_roc_auc(scores: ArrayView2<f64>, targets: ArrayView2<u8>) -> Result<f64> {
    if scores.dim() != targets.dim() {
        return Err(Error::Shape(format!("scores {:?} vs targets {:?}", scores.dim(), targets.dim())));
    }
    if scores.ncols() == 0 {
        return Err(Error::UndefinedMetric("no columns".into()));
    }
    let mut total = 0.0;
    for (col, (s, t)) in scores.axis_iter(Axis(1)).zip(targets.axis_iter(Axis(1))).enumerate() {
        let labels: Vec<bool> = t.iter().map(|&v| v == 1).collect();
        total += roc_auc(&s.to_vec(), &labels)
            .map_err(|e| Error::UndefinedMetric(format!("column {col}: {e}")))?;
    }
    Ok(total / scores.ncols() as f64)
}

/// Scores for the positive class from task logits: the logit margin for two
/// classes. Rank-equivalent to the softmax probability without its
/// saturation ties.
pub fn binary_task_scores(logits: ArrayView2<f32>) -> Result<Vec<f64>> {
    if logits.ncols() != 2 {
        return Err(Error::Shape(format!("expected 2 task logits, got {}", logits.ncols())));
    }
    Ok(logits
        .outer_iter()
        .map(|r| f64::from(r[1]) - f64::from(r[0]))
        .collect())
}

/// Task ROC-AUC: binary AUC for two classes, one-vs-rest macro otherwise.
pub fn task_auc(logits: ArrayView2<f32>, labels: &[usize]) -> Result<f64> {
    let o = logits.ncols();
    if o == 2 {
        let positive: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return roc_auc(&binary_task_scores(logits)?, &positive);
    }
    let scores = logits.mapv(f64::from);
    let mut onehot = ndarray::Array2::<u8>::zeros(logits.dim());
    for (i, &y) in labels.iter().enumerate() {
        onehot[[i, y]] = 1;
    }
    macro_roc_auc(scores.view(), onehot.view())
}

pub fn accuracy(logits: ArrayView2<f32>, labels: &[usize]) -> f64 {
    let correct = logits
        .outer_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(*row) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

pub fn argmax<F: PartialOrd + Copy>(row: ArrayView1<F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean and standard error (`sd / sqrt(n)` with the `n - 1` sample
/// deviation); the error is 0 for a single value.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt() / n.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn worked_example() {
        // Pairs (pos, neg): (0.35, 0.1) win, (0.35, 0.4) loss, (0.8, 0.1) win, (0.8, 0.4) win.
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(roc_auc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn macro_over_columns() {
        let scores = array![[0.9, 0.5], [0.1, 0.5], [0.8, 0.5], [0.2, 0.5]];
        let targets = array![[1u8, 1], [0, 0], [1, 0], [0, 1]];
        assert_eq!(macro_roc_auc(scores.view(), targets.view()).unwrap(), 0.75);
        let col = scores.column(0).to_vec();
        let one = macro_roc_auc(scores.slice(ndarray::s![.., 0..1]), targets.slice(ndarray::s![.., 0..1])).unwrap();
        assert_eq!(one, roc_auc(&col, &[true, false, true, false]).unwrap());
        let degenerate = array![[1u8, 0], [1, 1]];
        assert!(macro_roc_auc(array![[0.1, 0.2], [0.3, 0.4]].view(), degenerate.view()).is_err());
    }

    #[test]
    fn aggregate_cases() {
        assert_eq!(aggregate(&[2.0, 2.0, 2.0]).unwrap(), (2.0, 0.0));
        assert_eq!(aggregate(&[1.0, 3.0]).unwrap(), (2.0, 1.0));
        assert_eq!(aggregate(&[4.0]).unwrap(), (4.0, 0.0));
        assert!(aggregate(&[]).is_err());
        // Hand arithmetic: mean 3, squared deviations 4+1+0+1+4 = 10, var 2.5,
        // sd sqrt(2.5), stderr sqrt(2.5)/sqrt(5) = sqrt(0.5).
        let (m, se) = aggregate(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m, 3.0);
        assert!((se - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn task_auc_uses_margin() {
        let logits = array![[0.0f32, 1.0], [1.0, 0.0], [0.0, 3.0], [2.0, 0.5]];
        assert_eq!(task_auc(logits.view(), &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(logits.view(), &[1, 0, 1, 1]), 0.75);
    }
}
