use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{FeedForwardNet, Gradients, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    m_w: Vec<Array2<F>>,
    v_w: Vec<Array2<F>>,
    m_b: Vec<Array1<F>>,
    v_b: Vec<Array1<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(net: &FeedForwardNet<F>, config: AdamConfig) -> Self {
        let layers = net.layers();
        Self {
            config,
            step: 0,
            m_w: layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            v_w: layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            m_b: layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            v_b: layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. The network is untouched on error.
    pub fn step(&mut self, net: &mut FeedForwardNet<F>, grads: &Gradients<F>) -> Result<()> {
        if grads.weights.len() != self.m_w.len() || grads.biases.len() != self.m_b.len() {
            return Err(Error::Shape("gradient layer count does not match optimizer".into()));
        }
        for (g, m) in grads.weights.iter().zip(&self.m_w) {
            if g.dim() != m.dim() {
                return Err(Error::Shape(format!("weight gradient {:?} vs {:?}", g.dim(), m.dim())));
            }
        }
        for (g, m) in grads.biases.iter().zip(&self.m_b) {
            if g.len() != m.len() {
                return Err(Error::Shape(format!("bias gradient {} vs {}", g.len(), m.len())));
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to Adam".into()));
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = F::from_f64_lossy(c.beta1);
        let b2 = F::from_f64_lossy(c.beta2);
        let one = F::one();
        let corr1 = F::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = F::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = F::from_f64_lossy(c.lr);
        let eps = F::from_f64_lossy(c.eps);

        let update = |p: &mut F, m: &mut F, v: &mut F, g: F| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&mut self.m_w[i])
                .and(&mut self.v_w[i])
                .and(&grads.weights[i])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.m_b[i])
                .and(&mut self.v_b[i])
                .and(&grads.biases[i])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, LayerSpec};
    use ndarray::array;

    fn scalar_net(w: f64) -> FeedForwardNet<f64> {
        let spec = LayerSpec::new(1, 1, Activation::Identity);
        FeedForwardNet::from_layers(vec![Dense::from_parts(spec, array![[w]], array![0.0]).unwrap()]).unwrap()
    }

    fn grads(g: f64) -> Gradients<f64> {
        Gradients {
            weights: vec![array![[g]]],
            biases: vec![array![0.0]],
            input: array![[0.0]],
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = scalar_net(0.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        adam.step(&mut net, &grads(1.0)).unwrap();
        let delta = net.layers()[0].weight[[0, 0]];
        assert!((delta - (-1e-3 / (1.0 + 1e-8))).abs() < 1e-18);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net(0.7);
        let mut adam = Adam::new(&net, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut net, &grads(0.0)).unwrap();
        }
        assert_eq!(net.layers()[0].weight[[0, 0]], 0.7);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        // Hand evaluation of the moment recurrences with g = 1 on both steps.
        let (lr, b1, b2, eps) = (1e-3f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        let mut net = scalar_net(0.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        adam.step(&mut net, &grads(1.0)).unwrap();
        let after_one = net.layers()[0].weight[[0, 0]];
        adam.step(&mut net, &grads(1.0)).unwrap();
        let after_two = net.layers()[0].weight[[0, 0]];
        assert_eq!(after_two, p);
        // Bias correction makes a constant gradient take equal steps.
        assert!(((after_two - after_one) - after_one).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_is_rejected_without_update() {
        let mut net = scalar_net(0.5);
        let mut adam = Adam::new(&net, AdamConfig::default());
        assert!(matches!(adam.step(&mut net, &grads(f64::NAN)), Err(Error::NonFinite(_))));
        assert_eq!(net.layers()[0].weight[[0, 0]], 0.5);
        assert_eq!(adam.step_count(), 0);
    }
}
