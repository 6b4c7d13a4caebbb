//! Standard concept bottleneck baseline: a concept encoder `g: X -> C`
//! followed by a task predictor `f: C -> Y`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{net_from_tensors, net_tensors, Checkpoint};
use crate::data::Dataset;
use crate::eval::{macro_roc_auc, task_auc};
use crate::nn::{bce_with_logits, sigmoid, softmax_ce, Activation, FeedForwardNet, LayerSpec};
use crate::par::Execution;
use crate::rng::{seeded, streams};
use crate::train::{batched, fit, fit_joint, ConceptTargets, TrainConfig, TrainLog};
use crate::{Error, Result};

/// How a concept encoder and its downstream map are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Each half is fitted on ground truth alone.
    #[default]
    Independent,
    /// The encoder is fitted first; the downstream map then sees its frozen
    /// predictions.
    Sequential,
    /// Both halves are fitted together through the bottleneck.
    Joint,
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMode::Independent => "independent",
            TrainingMode::Sequential => "sequential",
            TrainingMode::Joint => "joint",
        })
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(TrainingMode::Independent),
            "sequential" => Ok(TrainingMode::Sequential),
            "joint" => Ok(TrainingMode::Joint),
            other => Err(Error::InvalidArgument(format!("unknown training mode {other:?}"))),
        }
    }
}

/// What the concept-consuming network saw while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Rows fed to the concept-consuming network across all epochs.
    pub rows_seen: usize,
    /// Of those, rows that were not a vertex of `{0, 1}^k`.
    pub non_vertex_rows: usize,
}

impl Provenance {
    pub(crate) fn observe(inputs: ArrayView2<f32>, epochs: usize) -> Self {
        let non_vertex = inputs
            .outer_iter()
            .filter(|r| r.iter().any(|&v| v != 0.0 && v != 1.0))
            .count();
        Self {
            rows_seen: inputs.nrows() * epochs,
            non_vertex_rows: non_vertex * epochs,
        }
    }

    pub fn only_vertices(&self) -> bool {
        self.non_vertex_rows == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbmConfig {
    pub g_hidden: Vec<usize>,
    pub f_hidden: Vec<usize>,
    pub lambda_c: f32,
    pub lambda_y: f32,
    pub train: TrainConfig,
    /// Epochs for `f` when it is fitted on its own.
    pub f_epochs: usize,
}

impl Default for CbmConfig {
    fn default() -> Self {
        Self {
            g_hidden: vec![256, 128],
            f_hidden: vec![32],
            lambda_c: 1.0,
            lambda_y: 1.0,
            train: TrainConfig {
                epochs: 16,
                ..TrainConfig::default()
            },
            f_epochs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    kind: String,
    g_layers: Vec<LayerSpec>,
    f_layers: Vec<LayerSpec>,
    mode: TrainingMode,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbmModel {
    g: FeedForwardNet<f32>,
    f: FeedForwardNet<f32>,
    mode: TrainingMode,
    provenance: Provenance,
}

impl CbmModel {
    pub fn new(g: FeedForwardNet<f32>, f: FeedForwardNet<f32>, mode: TrainingMode) -> Result<Self> {
        if g.out_dim() != f.in_dim() {
            return Err(Error::Shape(format!("g emits {} concepts, f expects {}", g.out_dim(), f.in_dim())));
        }
        Ok(Self {
            g,
            f,
            mode,
            provenance: Provenance {
                rows_seen: 0,
                non_vertex_rows: 0,
            },
        })
    }

    pub fn g(&self) -> &FeedForwardNet<f32> {
        &self.g
    }

    pub fn f(&self) -> &FeedForwardNet<f32> {
        &self.f
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn k(&self) -> usize {
        self.g.out_dim()
    }

    /// Activation index of `g`'s last hidden layer, where evaluation noise
    /// is injected.
    pub fn penultimate(&self) -> usize {
        self.g.depth() - 1
    }

    pub fn g_activation(&self, x: ArrayView2<f32>, layer: usize) -> Result<Array2<f32>> {
        batched(x, Execution::Parallel, |c| self.g.forward_range(c, 0, layer))
    }

    /// Concept probabilities from an activation of `g` at index `layer`.
    pub fn concepts_from(&self, h: ArrayView2<f32>, layer: usize) -> Result<Array2<f32>> {
        let logits = batched(h, Execution::Parallel, |c| self.g.forward_range(c, layer, self.g.depth()))?;
        Ok(logits.mapv(sigmoid))
    }

    pub fn concept_logits(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        batched(x, Execution::Parallel, |c| self.g.predict(c))
    }

    /// `f` applied to any width-`k` concept vector: predicted, ground truth,
    /// or a mix.
    pub fn task_from_concepts(&self, c: ArrayView2<f32>) -> Result<Array2<f32>> {
        batched(c, Execution::Parallel, |chunk| self.f.predict(chunk))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = net_tensors("g.", &self.g);
        tensors.extend(net_tensors("f.", &self.f));
        let meta = Metadata {
            kind: "cbm".into(),
            g_layers: self.g.specs(),
            f_layers: self.f.specs(),
            mode: self.mode,
            provenance: self.provenance,
        };
        Checkpoint::new(tensors, &meta).expect("metadata serializes")
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: Metadata = ckpt.metadata()?;
        if meta.kind != "cbm" {
            return Err(Error::format("checkpoint", format!("expected a cbm, found {:?}", meta.kind)));
        }
        let g = net_from_tensors("g.", &meta.g_layers, ckpt)?;
        let f = net_from_tensors("f.", &meta.f_layers, ckpt)?;
        let mut model = Self::new(g, f, meta.mode)?;
        model.provenance = meta.provenance;
        Ok(model)
    }
}

/// `(concept probabilities, task logits)` with `c_hat = sigmoid(g(x))` and
/// `y_hat = f(c_hat)`.
pub fn cbm_predict(model: &CbmModel, x: ArrayView2<f32>) -> Result<(Array2<f32>, Array2<f32>)> {
    let c_hat = model.concept_logits(x)?.mapv(sigmoid);
    let y_hat = model.task_from_concepts(c_hat.view())?;
    Ok((c_hat, y_hat))
}

/// Clean task and concept ROC-AUC of a CBM on `dataset`.
pub fn cbm_scores(model: &CbmModel, dataset: &Dataset) -> Result<(f64, f64)> {
    let (c_hat, y_hat) = cbm_predict(model, dataset.features().view())?;
    let task = task_auc(y_hat.view(), dataset.labels())?;
    let concept = macro_roc_auc(c_hat.mapv(f64::from).view(), dataset.concepts().view())?;
    Ok((task, concept))
}

pub fn train_cbm(train: &Dataset, val: &Dataset, config: &CbmConfig, mode: TrainingMode) -> Result<(CbmModel, TrainLog)> {
    let (n, k, o) = (train.meta.n, train.meta.k, train.meta.o);
    if k == 0 {
        return Err(Error::InvalidArgument("CBM training needs concept labels".into()));
    }
    let mut g_widths = vec![n];
    g_widths.extend(&config.g_hidden);
    g_widths.push(k);
    let mut f_widths = vec![k];
    f_widths.extend(&config.f_hidden);
    f_widths.push(o);
    let seed = config.train.seed;
    let mut g = FeedForwardNet::new(
        &LayerSpec::chain(&g_widths, Activation::Relu, Activation::Identity),
        &mut seeded(seed, streams::INIT),
    )?;
    let mut f = FeedForwardNet::new(
        &LayerSpec::chain(&f_widths, Activation::Relu, Activation::Identity),
        &mut seeded(seed, streams::SECOND_INIT),
    )?;

    let concepts = train.concepts_f32();
    let labels = train.labels();
    let task_loss = |out: ArrayView2<f32>, idx: &[usize]| {
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        softmax_ce(out, &y)
    };
    let mut log = TrainLog::default();

    let provenance = match mode {
        TrainingMode::Joint => {
            fit_joint(
                &mut g,
                &mut f,
                train.features(),
                ConceptTargets {
                    concepts: &concepts,
                    weight: config.lambda_c,
                },
                config.lambda_y,
                &config.train,
                &mut seeded(seed, streams::SHUFFLE),
                "cbm.joint",
                &mut log,
                task_loss,
                |g, f| val_task_auc(g, f, val),
            )?;
            // f consumed sigmoid outputs of g throughout.
            Provenance {
                rows_seen: train.len() * config.train.epochs,
                non_vertex_rows: train.len() * config.train.epochs,
            }
        }
        TrainingMode::Independent | TrainingMode::Sequential => {
            fit(
                &mut g,
                train.features(),
                &config.train,
                &mut seeded(seed, streams::SHUFFLE),
                "cbm.g",
                &mut log,
                |out, idx| bce_with_logits(out, concepts.select(Axis(0), idx).view()),
                |g| val_concept_auc(g, val),
            )?;
            let f_inputs = if mode == TrainingMode::Independent {
                concepts.clone()
            } else {
                batched(train.features().view(), Execution::Parallel, |c| g.predict(c))?.mapv(sigmoid)
            };
            let f_config = TrainConfig {
                epochs: config.f_epochs,
                ..config.train.clone()
            };
            fit(
                &mut f,
                &f_inputs,
                &f_config,
                &mut seeded(seed, streams::SECOND_SHUFFLE),
                "cbm.f",
                &mut log,
                task_loss,
                |f| val_task_auc(&g, f, val),
            )?;
            Provenance::observe(f_inputs.view(), f_config.epochs)
        }
    };
    let mut model = CbmModel::new(g, f, mode)?;
    model.provenance = provenance;
    Ok((model, log))
}

fn val_concept_auc(g: &FeedForwardNet<f32>, val: &Dataset) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let logits = batched(val.features().view(), Execution::Parallel, |c| g.predict(c))?;
    Ok(macro_roc_auc(logits.mapv(f64::from).view(), val.concepts().view()).ok())
}

fn val_task_auc(g: &FeedForwardNet<f32>, f: &FeedForwardNet<f32>, val: &Dataset) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let c = batched(val.features().view(), Execution::Parallel, |c| g.predict(c))?.mapv(sigmoid);
    let y = batched(c.view(), Execution::Parallel, |c| f.predict(c))?;
    Ok(task_auc(y.view(), val.labels()).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_concepts, SplitSpec};

    fn synth_split() -> (Dataset, Dataset) {
        let data = synth_concepts(4, 800, 2).unwrap();
        let (train, val, _) = split(&data, SplitSpec::new(0.75, 0.25, 0.0, 1)).unwrap();
        (train, val)
    }

    fn quick_config() -> CbmConfig {
        CbmConfig {
            g_hidden: vec![16],
            f_hidden: vec![16],
            train: TrainConfig {
                epochs: 2,
                batch_size: 32,
                ..TrainConfig::default()
            },
            f_epochs: 2,
            ..CbmConfig::default()
        }
    }

    #[test]
    fn independent_f_sees_only_vertices() {
        let (train, val) = synth_split();
        let (model, _) = train_cbm(&train, &val, &quick_config(), TrainingMode::Independent).unwrap();
        assert!(model.provenance().only_vertices());
        assert_eq!(model.provenance().rows_seen, train.len() * 2);
        let (seq, _) = train_cbm(&train, &val, &quick_config(), TrainingMode::Sequential).unwrap();
        assert!(!seq.provenance().only_vertices());
    }

    #[test]
    fn predictions_are_deterministic_and_bounded() {
        let (train, val) = synth_split();
        let (model, _) = train_cbm(&train, &val, &quick_config(), TrainingMode::Joint).unwrap();
        let x = val.features().view();
        let (c1, y1) = cbm_predict(&model, x).unwrap();
        let (c2, y2) = cbm_predict(&model, x).unwrap();
        assert_eq!((c1.clone(), y1), (c2, y2));
        assert!(c1.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(c1.ncols(), 4);
    }

    #[test]
    fn ground_truth_substitution_feeds_f_directly() {
        let (train, val) = synth_split();
        let (model, _) = train_cbm(&train, &val, &quick_config(), TrainingMode::Independent).unwrap();
        let truth = val.concepts_f32();
        let direct = model.f().predict(truth.view()).unwrap();
        assert_eq!(model.task_from_concepts(truth.view()).unwrap(), direct);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (train, val) = synth_split();
        let (model, _) = train_cbm(&train, &val, &quick_config(), TrainingMode::Sequential).unwrap();
        let back = CbmModel::from_checkpoint(&model.to_checkpoint()).unwrap();
        assert_eq!(back, model);
        assert!(back.to_checkpoint().tensors.iter().all(|t| t.name.starts_with("g.") || t.name.starts_with("f.")));
    }

    #[test]
    fn mode_text_round_trip() {
        for m in [TrainingMode::Independent, TrainingMode::Sequential, TrainingMode::Joint] {
            assert_eq!(m.to_string().parse::<TrainingMode>().unwrap(), m);
        }
        assert!("other".parse::<TrainingMode>().is_err());
    }
}
