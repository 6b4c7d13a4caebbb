use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
    /// Row-wise softmax; only meaningful on an output layer.
    Softmax,
}

impl Activation {
    pub fn apply<F: Scalar>(self, pre: &Array2<F>) -> Array2<F> {
        match self {
            Activation::Relu => pre.mapv(|z| if z > F::zero() { z } else { F::zero() }),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::Identity => pre.clone(),
            Activation::Softmax => super::loss::softmax_rows(pre.view()),
        }
    }

    /// Maps the gradient w.r.t. the activation output back to the
    /// pre-activation, given both sides of the forward pass.
    pub fn backprop<F: Scalar>(
        self,
        pre: &Array2<F>,
        post: &Array2<F>,
        grad_post: ArrayView2<F>,
    ) -> Array2<F> {
        match self {
            Activation::Relu => {
                let mut out = grad_post.to_owned();
                Zip::from(&mut out).and(pre).for_each(|g, &z| {
                    if z <= F::zero() {
                        *g = F::zero();
                    }
                });
                out
            }
            Activation::Sigmoid => {
                let mut out = grad_post.to_owned();
                Zip::from(&mut out)
                    .and(post)
                    .for_each(|g, &s| *g = *g * s * (F::one() - s));
                out
            }
            Activation::Identity => grad_post.to_owned(),
            Activation::Softmax => {
                let mut out = grad_post.to_owned();
                for (mut g_row, s_row) in out.axis_iter_mut(Axis(0)).zip(post.axis_iter(Axis(0))) {
                    let dot = g_row
                        .iter()
                        .zip(s_row.iter())
                        .fold(F::zero(), |acc, (&g, &s)| acc + g * s);
                    Zip::from(&mut g_row)
                        .and(&s_row)
                        .for_each(|g, &s| *g = s * (*g - dot));
                }
                out
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Logistic function, split by sign so neither branch overflows.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    /// Builds a chain `widths[0] -> widths[1] -> ...` with `hidden` on every
    /// layer but the last, which gets `output`.
    pub fn chain(widths: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
        let n = widths.len().saturating_sub(1);
        (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                LayerSpec::new(widths[i], widths[i + 1], act)
            })
            .collect()
    }
}

/// Affine map followed by an element-wise activation. Weight shape is
/// `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub spec: LayerSpec,
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    /// Kaiming-uniform for ReLU layers, Xavier-uniform otherwise; zero bias.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(Error::InvalidArgument("layer dims must be > 0".into()));
        }
        let fan_in = spec.in_dim as f64;
        let fan_out = spec.out_dim as f64;
        let limit = match spec.activation {
            Activation::Relu => (6.0 / fan_in).sqrt(),
            _ => (6.0 / (fan_in + fan_out)).sqrt(),
        };
        let weight = Array2::from_shape_simple_fn((spec.out_dim, spec.in_dim), || {
            F::from_f64_lossy(rng.random_range(-limit..limit))
        });
        Ok(Self {
            spec,
            weight,
            bias: Array1::zeros(spec.out_dim),
        })
    }

    pub fn from_parts(spec: LayerSpec, weight: Array2<F>, bias: Array1<F>) -> Result<Self> {
        if weight.dim() != (spec.out_dim, spec.in_dim) || bias.len() != spec.out_dim {
            return Err(Error::Shape(format!(
                "layer {}->{} given weight {:?} and bias {}",
                spec.in_dim,
                spec.out_dim,
                weight.dim(),
                bias.len()
            )));
        }
        Ok(Self { spec, weight, bias })
    }

    pub fn pre_activation(&self, input: ArrayView2<F>) -> Array2<F> {
        let mut pre = input.dot(&self.weight.t());
        pre += &self.bias;
        pre
    }

    pub fn forward(&self, input: ArrayView2<F>) -> Array2<F> {
        let pre = self.pre_activation(input);
        self.spec.activation.apply(&pre)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn cast<G: Scalar>(&self) -> Dense<G> {
        Dense {
            spec: self.spec,
            weight: self.weight.mapv(|v| G::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN))),
            bias: self.bias.mapv(|v| G::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let out = Activation::Sigmoid.apply(&array![[0.0f64]]);
        assert_eq!(out[[0, 0]], 0.5);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
    }

    #[test]
    fn relu_zeroes_negatives() {
        let out = Activation::Relu.apply(&array![[-1.0f32, 0.0, 2.5]]);
        assert_eq!(out, array![[0.0, 0.0, 2.5]]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let out = Activation::Softmax.apply(&array![[4.0f64, 4.0, 4.0]]);
        for v in out.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn chain_assigns_output_activation_last() {
        let specs = LayerSpec::chain(&[4, 3, 2], Activation::Relu, Activation::Identity);
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0], LayerSpec::new(4, 3, Activation::Relu));
        assert_eq!(specs[1], LayerSpec::new(3, 2, Activation::Identity));
    }

    #[test]
    fn from_parts_rejects_transposed_weight() {
        let spec = LayerSpec::new(3, 2, Activation::Identity);
        let err = Dense::from_parts(spec, Array2::<f32>::zeros((3, 2)), Array1::zeros(2));
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
