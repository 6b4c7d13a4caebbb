//! Minibatch training loop shared by every model kind.

use ndarray::{concatenate, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::{bce_with_logits, sigmoid, Adam, AdamConfig, FeedForwardNet};
use crate::par::{map_chunks, Execution};
use crate::rng::Rng;
use crate::{Error, Result};

/// Rows per chunk for batched inference.
pub const INFERENCE_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn push(&mut self, stage: &str, epoch: usize, loss: f64, val_metric: Option<f64>) {
        log::debug!("{stage} epoch {epoch}: loss {loss:.5} val {val_metric:?}");
        self.records.push(EpochRecord {
            stage: stage.to_string(),
            epoch,
            loss,
            val_metric,
        });
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.records.extend(other.records);
    }

    pub fn last_val(&self, stage: &str) -> Option<f64> {
        self.records
            .iter()
            .rev()
            .find(|r| r.stage == stage)
            .and_then(|r| r.val_metric)
    }
}

/// Shuffled index batches covering `0..n` once.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Fits `net` on rows of `inputs`. `loss` maps `(network output, batch
/// indices)` to `(mean loss, gradient w.r.t. output)`; `validate` runs after
/// every epoch.
#[allow(clippy::too_many_arguments)]
pub fn fit<L, V>(
    net: &mut FeedForwardNet<f32>,
    inputs: &Array2<f32>,
    config: &TrainConfig,
    shuffle_rng: &mut Rng,
    stage: &str,
    log: &mut TrainLog,
    mut loss: L,
    mut validate: V,
) -> Result<()>
where
    L: FnMut(ArrayView2<f32>, &[usize]) -> Result<(f32, Array2<f32>)>,
    V: FnMut(&FeedForwardNet<f32>) -> Result<Option<f64>>,
{
    let mut adam = Adam::new(net, config.adam);
    for epoch in 0..config.epochs {
        let mut total = 0.0f64;
        let mut seen = 0usize;
        for batch in epoch_batches(inputs.nrows(), config.batch_size, shuffle_rng) {
            let x = inputs.select(Axis(0), &batch);
            let trace = net.forward(x.view())?;
            let (value, grad) = loss(trace.output().view(), &batch)?;
            if !value.is_finite() {
                return Err(Error::Divergence(format!("{stage}: loss {value} at epoch {epoch}")));
            }
            let grads = net.backward(&trace, grad.view())?;
            adam.step(net, &grads)
                .map_err(|e| Error::Divergence(format!("{stage}: {e}")))?;
            total += f64::from(value) * batch.len() as f64;
            seen += batch.len();
        }
        let val = validate(net)?;
        log.push(stage, epoch, total / seen.max(1) as f64, val);
    }
    Ok(())
}

/// Concept-side supervision for [`fit_joint`].
pub struct ConceptTargets<'a> {
    pub concepts: &'a Array2<f32>,
    pub weight: f32,
}

/// Trains `encoder` and `decoder` end to end through a sigmoid bottleneck:
/// `weight_c * BCE(encoder(x), c) + weight_out * loss(decoder(sigmoid(encoder(x))))`.
#[allow(clippy::too_many_arguments)]
pub fn fit_joint<L, V>(
    encoder: &mut FeedForwardNet<f32>,
    decoder: &mut FeedForwardNet<f32>,
    inputs: &Array2<f32>,
    concepts: ConceptTargets<'_>,
    weight_out: f32,
    config: &TrainConfig,
    shuffle_rng: &mut Rng,
    stage: &str,
    log: &mut TrainLog,
    mut decoder_loss: L,
    mut validate: V,
) -> Result<()>
where
    L: FnMut(ArrayView2<f32>, &[usize]) -> Result<(f32, Array2<f32>)>,
    V: FnMut(&FeedForwardNet<f32>, &FeedForwardNet<f32>) -> Result<Option<f64>>,
{
    let mut enc_opt = Adam::new(encoder, config.adam);
    let mut dec_opt = Adam::new(decoder, config.adam);
    for epoch in 0..config.epochs {
        let mut total = 0.0f64;
        let mut seen = 0usize;
        for batch in epoch_batches(inputs.nrows(), config.batch_size, shuffle_rng) {
            let x = inputs.select(Axis(0), &batch);
            let c = concepts.concepts.select(Axis(0), &batch);
            let enc_trace = encoder.forward(x.view())?;
            let logits = enc_trace.output();
            let (loss_c, grad_c) = bce_with_logits(logits.view(), c.view())?;
            let probs = logits.mapv(sigmoid);
            let dec_trace = decoder.forward(probs.view())?;
            let (loss_out, grad_out) = decoder_loss(dec_trace.output().view(), &batch)?;
            let value = concepts.weight * loss_c + weight_out * loss_out;
            if !value.is_finite() {
                return Err(Error::Divergence(format!("{stage}: loss {value} at epoch {epoch}")));
            }
            let dec_grads = decoder.backward(&dec_trace, (grad_out * weight_out).view())?;
            let mut enc_out_grad = grad_c * concepts.weight;
            Zip::from(&mut enc_out_grad)
                .and(&dec_grads.input)
                .and(&probs)
                .for_each(|g, &d, &p| *g += d * p * (1.0 - p));
            let enc_grads = encoder.backward(&enc_trace, enc_out_grad.view())?;
            dec_opt.step(decoder, &dec_grads)
                .map_err(|e| Error::Divergence(format!("{stage}: {e}")))?;
            enc_opt.step(encoder, &enc_grads)
                .map_err(|e| Error::Divergence(format!("{stage}: {e}")))?;
            total += f64::from(value) * batch.len() as f64;
            seen += batch.len();
        }
        let val = validate(encoder, decoder)?;
        log.push(stage, epoch, total / seen.max(1) as f64, val);
    }
    Ok(())
}

/// Applies `f` to row chunks of `x` and stacks the results.
pub fn batched<F>(x: ArrayView2<f32>, exec: Execution, f: F) -> Result<Array2<f32>>
where
    F: Fn(ArrayView2<f32>) -> Result<Array2<f32>> + Sync + Send,
{
    if x.nrows() <= INFERENCE_CHUNK {
        return f(x);
    }
    let parts = map_chunks(x.nrows(), INFERENCE_CHUNK, exec, |r| f(x.slice(ndarray::s![r, ..])))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}
