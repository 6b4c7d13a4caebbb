use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{ensure_finite, Dense, LayerSpec, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet<F> {
    layers: Vec<Dense<F>>,
}

/// Everything a forward pass produced that `backward` needs.
///
/// `activations[0]` is the input batch and `activations[i + 1]` the output of
/// layer `i`; `pre[i]` is layer `i`'s pre-activation.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    pub activations: Vec<Array2<F>>,
    pub pre: Vec<Array2<F>>,
    widths: Vec<usize>,
}

impl<F: Scalar> Trace<F> {
    pub fn output(&self) -> &Array2<F> {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Per-parameter gradients, plus the gradient w.r.t. the network input so
/// callers can chain networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
    pub input: Array2<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(net: &FeedForwardNet<F>, batch: usize) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            input: Array2::zeros((batch, net.in_dim())),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: F) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
        self.input.mapv_inplace(|v| v * factor);
    }
}

impl<F: Scalar> FeedForwardNet<F> {
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        validate_chain(specs)?;
        let layers = specs
            .iter()
            .map(|&spec| Dense::init(spec, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<F>>) -> Result<Self> {
        let specs: Vec<_> = layers.iter().map(|l| l.spec).collect();
        validate_chain(&specs)?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<F>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    /// Width of activation index `idx`: 0 is the input, `i` the output of
    /// layer `i - 1`.
    pub fn width_at(&self, idx: usize) -> Option<usize> {
        match idx {
            0 => Some(self.in_dim()),
            i if i <= self.layers.len() => Some(self.layers[i - 1].spec.out_dim),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn forward(&self, batch: ArrayView2<F>) -> Result<Trace<F>> {
        self.check_input(batch, 0)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(batch.to_owned());
        for layer in &self.layers {
            let z = layer.pre_activation(activations.last().unwrap().view());
            let a = layer.spec.activation.apply(&z);
            pre.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            pre,
            widths: self.widths(),
        })
    }

    /// Inference-only pass over layers `start..end`, i.e. from activation
    /// index `start` to activation index `end`. Identity when equal.
    pub fn forward_range(&self, batch: ArrayView2<F>, start: usize, end: usize) -> Result<Array2<F>> {
        if start > end || end > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "layer range {start}..{end} outside 0..={}",
                self.layers.len()
            )));
        }
        self.check_input(batch, start)?;
        let mut current = batch.to_owned();
        for layer in &self.layers[start..end] {
            current = layer.forward(current.view());
        }
        Ok(current)
    }

    pub fn predict(&self, batch: ArrayView2<F>) -> Result<Array2<F>> {
        self.forward_range(batch, 0, self.layers.len())
    }

    /// Reverse pass. `output_grad` is the gradient of the loss w.r.t. the
    /// final layer's post-activation output.
    pub fn backward(&self, trace: &Trace<F>, output_grad: ArrayView2<F>) -> Result<Gradients<F>> {
        if trace.widths != self.widths() || trace.pre.len() != self.layers.len() {
            return Err(Error::Shape("trace was produced by a different network".into()));
        }
        let out = trace.output();
        if output_grad.dim() != out.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                output_grad.dim(),
                out.dim()
            )));
        }

        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut grad = output_grad.to_owned();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let dz = layer
                .spec
                .activation
                .backprop(&trace.pre[i], &trace.activations[i + 1], grad.view());
            weights.push(dz.t().dot(&trace.activations[i]));
            biases.push(dz.sum_axis(Axis(0)));
            grad = dz.dot(&layer.weight);
        }
        weights.reverse();
        biases.reverse();
        Ok(Gradients {
            weights,
            biases,
            input: grad,
        })
    }

    pub fn cast<G: Scalar>(&self) -> FeedForwardNet<G> {
        FeedForwardNet {
            layers: self.layers.iter().map(Dense::cast).collect(),
        }
    }

    /// Flat view of every parameter, weights then bias per layer.
    pub fn params(&self) -> impl Iterator<Item = &F> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable access to the `idx`-th parameter in [`params`](Self::params) order.
    pub fn param_mut(&mut self, mut idx: usize) -> Option<&mut F> {
        for layer in &mut self.layers {
            let w = layer.weight.len();
            if idx < w {
                let cols = layer.weight.ncols();
                return layer.weight.get_mut((idx / cols, idx % cols));
            }
            idx -= w;
            let b = layer.bias.len();
            if idx < b {
                return layer.bias.get_mut(idx);
            }
            idx -= b;
        }
        None
    }

    fn widths(&self) -> Vec<usize> {
        (0..=self.layers.len()).filter_map(|i| self.width_at(i)).collect()
    }

    fn check_input(&self, batch: ArrayView2<F>, at: usize) -> Result<()> {
        let expected = self.width_at(at).unwrap_or(0);
        if batch.ncols() != expected {
            return Err(Error::Shape(format!(
                "batch has {} columns, layer expects {expected}",
                batch.ncols()
            )));
        }
        ensure_finite(&batch, "network input")
    }
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    }
    for pair in specs.windows(2) {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::Shape(format!(
                "layer output {} feeds layer input {}",
                pair[0].out_dim, pair[1].in_dim
            )));
        }
    }
    Ok(())
}
