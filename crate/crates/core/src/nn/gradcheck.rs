use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{bce_with_logits, mse, softmax_ce, Activation, FeedForwardNet, LayerSpec};
use crate::rng::seeded;
use crate::Result;

/// Loss head used when verifying gradients.
#[derive(Debug, Clone)]
pub enum CheckLoss {
    Bce(Array2<f64>),
    SoftmaxCe(Vec<usize>),
    Mse(Array2<f64>),
}

impl CheckLoss {
    pub fn evaluate(&self, output: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        match self {
            CheckLoss::Bce(t) => bce_with_logits(output, t.view()),
            CheckLoss::SoftmaxCe(c) => softmax_ce(output, c),
            CheckLoss::Mse(t) => mse(output, t.view()),
        }
    }
}

/// Largest relative disagreement between backprop and central differences
/// over every parameter, `|a - n| / max(1e-12, |a| + |n|)`.
pub fn grad_check(net: &FeedForwardNet<f64>, batch: ArrayView2<f64>, loss: &CheckLoss, h: f64) -> Result<f64> {
    let trace = net.forward(batch)?;
    let (_, out_grad) = loss.evaluate(trace.output().view())?;
    let grads = net.backward(&trace, out_grad.view())?;
    let analytic: Vec<f64> = grads
        .weights
        .iter()
        .zip(&grads.biases)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
        .collect();

    let mut probe = net.clone();
    let eval = |n: &FeedForwardNet<f64>| -> Result<f64> {
        let out = n.predict(batch)?;
        Ok(loss.evaluate(out.view())?.0)
    };

    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(i).expect("parameter index in range");
        *probe.param_mut(i).unwrap() = original + h;
        let plus = eval(&probe)?;
        *probe.param_mut(i).unwrap() = original - h;
        let minus = eval(&probe)?;
        *probe.param_mut(i).unwrap() = original;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Hidden activation, output activation and loss for one suite entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CheckCombo {
    pub hidden: Activation,
    pub output: Activation,
    pub loss: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub combo: CheckCombo,
    pub nets: usize,
    pub worst: f64,
}

/// Every layer/loss pairing the models use, plus sigmoid and softmax
/// outputs under MSE so each activation's backward pass is covered.
pub fn check_combos() -> Vec<CheckCombo> {
    let heads = [
        (Activation::Identity, "bce"),
        (Activation::Identity, "softmax_ce"),
        (Activation::Identity, "mse"),
        (Activation::Sigmoid, "mse"),
        (Activation::Softmax, "mse"),
    ];
    let mut out = Vec::new();
    for hidden in [Activation::Relu, Activation::Sigmoid, Activation::Identity] {
        for (output, loss) in heads {
            out.push(CheckCombo { hidden, output, loss });
        }
    }
    out
}

/// Runs [`grad_check`] on `nets` random small networks per combo. Biases are
/// randomized so ReLU kinks are not parked at zero input.
pub fn grad_check_suite(nets: usize, seed: u64, h: f64) -> Result<Vec<CheckOutcome>> {
    check_combos()
        .into_iter()
        .enumerate()
        .map(|(ci, combo)| {
            let mut rng = seeded(seed, 1000 + ci as u64);
            let mut worst = 0.0f64;
            for _ in 0..nets {
                let depth = rng.random_range(1..=3);
                let mut widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=6)).collect();
                if combo.loss == "softmax_ce" || combo.output == Activation::Softmax {
                    widths[depth] = widths[depth].max(2);
                }
                let specs = LayerSpec::chain(&widths, combo.hidden, combo.output);
                let mut net = FeedForwardNet::<f64>::new(&specs, &mut rng)?;
                for layer in net.layers_mut() {
                    layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
                }
                let rows = rng.random_range(1..=5);
                let out_dim = widths[depth];
                let x = Array2::from_shape_simple_fn((rows, widths[0]), || StandardNormal.sample(&mut rng));
                let loss = match combo.loss {
                    "bce" => CheckLoss::Bce(Array2::from_shape_simple_fn((rows, out_dim), || {
                        f64::from(u8::from(rng.random_bool(0.5)))
                    })),
                    "softmax_ce" => CheckLoss::SoftmaxCe((0..rows).map(|_| rng.random_range(0..out_dim)).collect()),
                    _ => CheckLoss::Mse(Array2::from_shape_simple_fn((rows, out_dim), || {
                        rng.random_range(-1.0..1.0)
                    })),
                };
                worst = worst.max(grad_check(&net, x.view(), &loss, h)?);
            }
            Ok(CheckOutcome { combo, nets, worst })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, LayerSpec};
    use crate::rng::seeded;
    use ndarray::Array1;
    use rand::Rng;

    #[test]
    fn linear_net_is_essentially_exact() {
        let mut rng = seeded(11, 0);
        let specs = LayerSpec::chain(&[3, 4, 2], Activation::Identity, Activation::Identity);
        let net = FeedForwardNet::<f64>::new(&specs, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-1.0..1.0));
        let err = grad_check(&net, x.view(), &CheckLoss::Mse(t), 1e-5).unwrap();
        assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn zero_weights_still_check_bias_path() {
        let spec = LayerSpec::new(3, 2, Activation::Identity);
        let layer = Dense::from_parts(spec, Array2::zeros((2, 3)), Array1::from(vec![0.3, -0.2])).unwrap();
        let net = FeedForwardNet::from_layers(vec![layer]).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let err = grad_check(&net, x.view(), &CheckLoss::SoftmaxCe(vec![0, 1, 1, 0]), 1e-5).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }
}
