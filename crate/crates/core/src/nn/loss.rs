//! Losses return `(mean loss, gradient w.r.t. the prediction)`.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::layer::sigmoid;
use super::Scalar;
use crate::{Error, Result};

pub fn softmax_rows<F: Scalar>(logits: ArrayView2<F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean binary cross-entropy on logits, in the overflow-free form
/// `max(z, 0) - z t + ln(1 + e^{-|z|})`.
pub fn bce_with_logits<F: Scalar>(logits: ArrayView2<F>, targets: ArrayView2<F>) -> Result<(F, Array2<F>)> {
    same_shape(logits, targets)?;
    if let Some(bad) = targets.iter().find(|&&t| t != F::zero() && t != F::one()) {
        return Err(Error::InvalidArgument(format!("BCE target {bad} not in {{0, 1}}")));
    }
    let count = F::from_usize(logits.len()).unwrap();
    let mut total = F::zero();
    let mut grad = Array2::zeros(logits.dim());
    Zip::from(&mut grad)
        .and(logits)
        .and(targets)
        .for_each(|g, &z, &t| {
            total = total + z.max(F::zero()) - z * t + (-z.abs()).exp().ln_1p();
            *g = (sigmoid(z) - t) / count;
        });
    Ok((total / count, grad))
}

/// Mean softmax cross-entropy over rows.
pub fn softmax_ce<F: Scalar>(logits: ArrayView2<F>, classes: &[usize]) -> Result<(F, Array2<F>)> {
    let (rows, cols) = logits.dim();
    if classes.len() != rows {
        return Err(Error::Shape(format!("{rows} logit rows but {} class labels", classes.len())));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= cols) {
        return Err(Error::InvalidArgument(format!("class index {bad} out of range for {cols} classes")));
    }
    let batch = F::from_usize(rows).unwrap();
    let mut grad = softmax_rows(logits);
    let mut total = F::zero();
    for ((mut g_row, z_row), &class) in grad
        .axis_iter_mut(Axis(0))
        .zip(logits.axis_iter(Axis(0)))
        .zip(classes)
    {
        let max = z_row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let lse = max + z_row.iter().fold(F::zero(), |acc, &v| acc + (v - max).exp()).ln();
        total = total + lse - z_row[class];
        g_row[class] -= F::one();
        g_row.mapv_inplace(|v| v / batch);
    }
    Ok((total / batch, grad))
}

/// Mean over every entry of `(pred - target)^2`.
pub fn mse<F: Scalar>(pred: ArrayView2<F>, target: ArrayView2<F>) -> Result<(F, Array2<F>)> {
    same_shape(pred, target)?;
    let count = F::from_usize(pred.len()).unwrap();
    let two = F::from_f64_lossy(2.0);
    let mut total = F::zero();
    let mut grad = Array2::zeros(pred.dim());
    Zip::from(&mut grad)
        .and(pred)
        .and(target)
        .for_each(|g, &p, &t| {
            let d = p - t;
            total += d * d;
            *g = two * d / count;
        });
    Ok((total / count, grad))
}

fn same_shape<F>(a: ArrayView2<F>, b: ArrayView2<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}
