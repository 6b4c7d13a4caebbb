//! The opaque end-to-end classifier and its tap points.
//!
//! Activation indices count from the input: index 0 is `x`, index `i` is the
//! output of dense layer `i - 1`. `tap_l` and `tap_q` are such indices and
//! `phi` is the sub-network between them.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{net_from_tensors, net_tensors, Checkpoint};
use crate::data::{Dataset, Variant};
use crate::eval::task_auc;
use crate::nn::{softmax_ce, Activation, FeedForwardNet, LayerSpec};
use crate::par::Execution;
use crate::rng::{seeded, streams};
use crate::train::{batched, fit, TrainConfig, TrainLog};
use crate::{Error, Result};

const PREFIX: &str = "bb.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxConfig {
    pub hidden: Vec<usize>,
    pub tap_l: usize,
    pub tap_q: usize,
    pub train: TrainConfig,
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            tap_l: 1,
            tap_q: 2,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    kind: String,
    layers: Vec<LayerSpec>,
    tap_l: usize,
    tap_q: usize,
    variant: Option<Variant>,
    val_task_auc: Option<f64>,
}

/// A trained classifier whose parameters can no longer change. The only way
/// to get one is [`train_blackbox`] or loading a checkpoint, and neither
/// hands out mutable access to the network.
#[derive(Debug, Clone)]
pub struct BlackBoxModel {
    net: FeedForwardNet<f32>,
    tap_l: usize,
    tap_q: usize,
    variant: Option<Variant>,
    val_task_auc: Option<f64>,
    hash: String,
}

impl BlackBoxModel {
    /// Freezes `net` with the given taps.
    pub fn freeze(net: FeedForwardNet<f32>, tap_l: usize, tap_q: usize, variant: Option<Variant>) -> Result<Self> {
        if tap_l > tap_q || tap_q > net.depth() {
            return Err(Error::InvalidArgument(format!(
                "taps must satisfy 0 <= tap_l ({tap_l}) <= tap_q ({tap_q}) <= {}",
                net.depth()
            )));
        }
        let mut model = Self {
            net,
            tap_l,
            tap_q,
            variant,
            val_task_auc: None,
            hash: String::new(),
        };
        model.hash = model.compute_hash();
        Ok(model)
    }

    pub fn net(&self) -> &FeedForwardNet<f32> {
        &self.net
    }

    pub fn tap_l(&self) -> usize {
        self.tap_l
    }

    pub fn tap_q(&self) -> usize {
        self.tap_q
    }

    pub fn is_frozen(&self) -> bool {
        true
    }

    pub fn variant(&self) -> Option<Variant> {
        self.variant
    }

    pub fn val_task_auc(&self) -> Option<f64> {
        self.val_task_auc
    }

    /// Number of activation indices, i.e. dense layers + 1.
    pub fn layer_count(&self) -> usize {
        self.net.depth() + 1
    }

    pub fn width_at(&self, idx: usize) -> Result<usize> {
        self.net
            .width_at(idx)
            .ok_or_else(|| Error::InvalidArgument(format!("layer index {idx} >= {}", self.layer_count())))
    }

    /// Hash recorded when this model was frozen or loaded.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Rehashes the current parameters from scratch.
    pub fn compute_hash(&self) -> String {
        self.to_checkpoint().hash()
    }

    /// Activation at `layer_idx` for every row of `x`.
    pub fn embed(&self, x: ArrayView2<f32>, layer_idx: usize) -> Result<Array2<f32>> {
        self.width_at(layer_idx)?;
        self.run(x, 0, layer_idx)
    }

    /// Maps `h_l` (activation `tap_l`) to activation `tap_q`.
    pub fn phi(&self, h_l: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.run(h_l, self.tap_l, self.tap_q)
    }

    /// Runs the rest of the network from activation `from_layer` to logits.
    pub fn head_forward(&self, h: ArrayView2<f32>, from_layer: usize) -> Result<Array2<f32>> {
        self.width_at(from_layer)?;
        self.run(h, from_layer, self.net.depth())
    }

    /// Runs layers between two activation indices.
    pub fn run(&self, h: ArrayView2<f32>, from: usize, to: usize) -> Result<Array2<f32>> {
        batched(h, Execution::Parallel, |chunk| self.net.forward_range(chunk, from, to))
    }

    pub fn logits(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.head_forward(x, 0)
    }

    pub fn task_auc(&self, dataset: &Dataset) -> Result<f64> {
        task_auc(self.logits(dataset.features().view())?.view(), dataset.labels())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Metadata {
            kind: "blackbox".into(),
            layers: self.net.specs(),
            tap_l: self.tap_l,
            tap_q: self.tap_q,
            variant: self.variant,
            val_task_auc: self.val_task_auc,
        };
        Checkpoint::new(net_tensors(PREFIX, &self.net), &meta).expect("metadata serializes")
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: Metadata = ckpt.metadata()?;
        if meta.kind != "blackbox" {
            return Err(Error::format("checkpoint", format!("expected a blackbox, found {:?}", meta.kind)));
        }
        let net = net_from_tensors(PREFIX, &meta.layers, ckpt)?;
        let mut model = Self::freeze(net, meta.tap_l, meta.tap_q, meta.variant)?;
        model.val_task_auc = meta.val_task_auc;
        model.hash = ckpt.hash();
        Ok(model)
    }
}

/// Supervised softmax cross-entropy training on task labels only.
pub fn train_blackbox(train: &Dataset, val: &Dataset, config: &BlackBoxConfig) -> Result<(BlackBoxModel, TrainLog)> {
    let mut widths = vec![train.meta.n];
    widths.extend(&config.hidden);
    widths.push(train.meta.o);
    let specs = LayerSpec::chain(&widths, Activation::Relu, Activation::Identity);
    if config.tap_l > config.tap_q || config.tap_q > specs.len() {
        return Err(Error::InvalidArgument(format!(
            "taps {}..{} invalid for {} layers",
            config.tap_l,
            config.tap_q,
            specs.len()
        )));
    }
    let seed = config.train.seed;
    let mut net = FeedForwardNet::new(&specs, &mut seeded(seed, streams::INIT))?;
    let mut log = TrainLog::default();
    let labels = train.labels();
    fit(
        &mut net,
        train.features(),
        &config.train,
        &mut seeded(seed, streams::SHUFFLE),
        "blackbox",
        &mut log,
        |out, idx| {
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            softmax_ce(out, &y)
        },
        |net| validation_auc(net, val),
    )?;
    let mut model = BlackBoxModel::freeze(net, config.tap_l, config.tap_q, Some(train.meta.variant))?;
    model.val_task_auc = log.last_val("blackbox");
    model.hash = model.compute_hash();
    Ok((model, log))
}

fn validation_auc(net: &FeedForwardNet<f32>, val: &Dataset) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let logits = batched(val.features().view(), Execution::Parallel, |c| net.predict(c))?;
    Ok(task_auc(logits.view(), val.labels()).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_concepts, SplitSpec};

    fn small_model() -> (BlackBoxModel, Dataset) {
        let data = synth_concepts(4, 600, 1).unwrap();
        let (train, val, _) = split(&data, SplitSpec::new(0.8, 0.2, 0.0, 0)).unwrap();
        let config = BlackBoxConfig {
            hidden: vec![20, 12, 8],
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            ..BlackBoxConfig::default()
        };
        (train_blackbox(&train, &val, &config).unwrap().0, data)
    }

    #[test]
    fn input_tap_is_identity() {
        let (model, data) = small_model();
        let x = data.features().view();
        assert_eq!(model.embed(x, 0).unwrap(), x.to_owned());
        assert_eq!(model.embed(x, 2).unwrap(), model.embed(x, 2).unwrap());
        assert!(model.embed(x, 5).is_err());
    }

    #[test]
    fn phi_matches_direct_embedding() {
        let (model, data) = small_model();
        let x = data.features().view();
        let h_l = model.embed(x, model.tap_l()).unwrap();
        assert_eq!(model.phi(h_l.view()).unwrap(), model.embed(x, model.tap_q()).unwrap());
        assert!(model.phi(x).is_err());
    }

    #[test]
    fn head_forward_composes_at_every_layer() {
        let (model, data) = small_model();
        let x = data.features().view();
        let full = model.logits(x).unwrap();
        for j in 0..model.layer_count() {
            let h = model.embed(x, j).unwrap();
            assert_eq!(model.head_forward(h.view(), j).unwrap(), full, "layer {j}");
        }
        let last = model.layer_count() - 1;
        assert_eq!(model.head_forward(full.view(), last).unwrap(), full);
    }

    #[test]
    fn identity_phi_when_taps_coincide() {
        let (model, data) = small_model();
        let same = BlackBoxModel::freeze(model.net().clone(), 2, 2, None).unwrap();
        let h = same.embed(data.features().view(), 2).unwrap();
        assert_eq!(same.phi(h.view()).unwrap(), h);
        assert!(BlackBoxModel::freeze(model.net().clone(), 3, 2, None).is_err());
    }

    #[test]
    fn zero_input_through_zero_bias_relu_stays_zero() {
        let mut rng = seeded(0, 0);
        let specs = LayerSpec::chain(&[4, 6, 5, 2], Activation::Relu, Activation::Identity);
        let net = FeedForwardNet::<f32>::new(&specs, &mut rng).unwrap();
        let model = BlackBoxModel::freeze(net, 1, 2, None).unwrap();
        let out = model.phi(Array2::zeros((3, 6)).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_keeps_hash() {
        let (model, data) = small_model();
        let ckpt = model.to_checkpoint();
        let back = BlackBoxModel::from_checkpoint(&ckpt).unwrap();
        assert_eq!(back.hash(), model.hash());
        assert_eq!(back.net(), model.net());
        assert_eq!(back.logits(data.features().view()).unwrap(), model.logits(data.features().view()).unwrap());
    }
}
