//! Post-hoc concept bottleneck attached to a frozen black box.
//!
//! A concept predictor `psi_c` reads activation `tap_l` of the black box and
//! emits concept logits; a decoder `psi_y` maps concept probabilities back to
//! activation `tap_q`. Together they stand in for the black-box segment
//! `phi` between the two taps, so `psi_y(psi_c(h_l))` should land where
//! `phi(h_l)` does. The rest of the black box then turns the reconstructed
//! activation into task logits, which is what makes concept interventions
//! steer the original model.
//!
//! The black box is only ever borrowed immutably here. Heads record the
//! hash of the black box they were fitted against and refuse to run with
//! any other.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBoxModel;
use crate::cbm::{Provenance, TrainingMode};
use crate::checkpoint::{net_from_tensors, net_tensors, Checkpoint};
use crate::data::Dataset;
use crate::eval::{macro_roc_auc, task_auc};
use crate::nn::{bce_with_logits, mse, sigmoid, Activation, FeedForwardNet, LayerSpec};
use crate::par::Execution;
use crate::rng::{seeded, streams};
use crate::train::{batched, fit, fit_joint, ConceptTargets, TrainConfig, TrainLog};
use crate::{Error, Result};

/// Largest `k` for which the vertex lattice `{0,1}^k` is enumerated.
pub const MAX_ENUMERATED_CONCEPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnyCbmConfig {
    pub psi_c_hidden: Vec<usize>,
    pub psi_y_hidden: Vec<usize>,
    /// Concept loss weight in joint mode.
    pub lambda_c: f32,
    /// Reconstruction loss weight in joint mode. Activations at `tap_q` are
    /// small next to the concept logits, so the reconstruction term gets
    /// the larger weight.
    pub lambda_r: f32,
    pub train: TrainConfig,
}

impl Default for AnyCbmConfig {
    fn default() -> Self {
        Self {
            psi_c_hidden: vec![64],
            psi_y_hidden: vec![64],
            lambda_c: 1.0,
            lambda_r: 4.0,
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    kind: String,
    psi_c_layers: Vec<LayerSpec>,
    psi_y_layers: Vec<LayerSpec>,
    mode: TrainingMode,
    tap_l: usize,
    tap_q: usize,
    blackbox_hash: String,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnyCbmHeads {
    psi_c: FeedForwardNet<f32>,
    psi_y: FeedForwardNet<f32>,
    mode: TrainingMode,
    tap_l: usize,
    tap_q: usize,
    blackbox_hash: String,
    provenance: Provenance,
}

/// Output of [`anycbm_predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnyCbmPrediction {
    /// Concept probabilities `sigmoid(psi_c(h_l))`.
    pub concepts: Array2<f32>,
    /// Reconstructed activation `psi_y(concepts)` at `tap_q`.
    pub h_q: Array2<f32>,
    /// Black-box task logits computed from `h_q`.
    pub logits: Array2<f32>,
}

impl AnyCbmHeads {
    /// Pairs two networks with `blackbox`, checking widths against its taps.
    pub fn new(
        blackbox: &BlackBoxModel,
        psi_c: FeedForwardNet<f32>,
        psi_y: FeedForwardNet<f32>,
        mode: TrainingMode,
    ) -> Result<Self> {
        let width_l = blackbox.width_at(blackbox.tap_l())?;
        let width_q = blackbox.width_at(blackbox.tap_q())?;
        if psi_c.in_dim() != width_l {
            return Err(Error::Shape(format!("psi_c reads {} values, tap_l is {width_l} wide", psi_c.in_dim())));
        }
        if psi_y.out_dim() != width_q {
            return Err(Error::Shape(format!("psi_y emits {} values, tap_q is {width_q} wide", psi_y.out_dim())));
        }
        if psi_c.out_dim() != psi_y.in_dim() {
            return Err(Error::Shape(format!(
                "psi_c emits {} concepts, psi_y expects {}",
                psi_c.out_dim(),
                psi_y.in_dim()
            )));
        }
        Ok(Self {
            psi_c,
            psi_y,
            mode,
            tap_l: blackbox.tap_l(),
            tap_q: blackbox.tap_q(),
            blackbox_hash: blackbox.hash().to_string(),
            provenance: Provenance {
                rows_seen: 0,
                non_vertex_rows: 0,
            },
        })
    }

    pub fn psi_c(&self) -> &FeedForwardNet<f32> {
        &self.psi_c
    }

    pub fn psi_y(&self) -> &FeedForwardNet<f32> {
        &self.psi_y
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.psi_c.out_dim()
    }

    pub fn taps(&self) -> (usize, usize) {
        (self.tap_l, self.tap_q)
    }

    pub fn blackbox_hash(&self) -> &str {
        &self.blackbox_hash
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn param_count(&self) -> usize {
        self.psi_c.param_count() + self.psi_y.param_count()
    }

    /// Fails unless `blackbox` is the model these heads were trained on.
    pub fn check_pair(&self, blackbox: &BlackBoxModel) -> Result<()> {
        if blackbox.hash() != self.blackbox_hash {
            return Err(Error::HashMismatch {
                expected: self.blackbox_hash.clone(),
                actual: blackbox.hash().to_string(),
            });
        }
        Ok(())
    }

    pub fn concept_logits(&self, h_l: ArrayView2<f32>) -> Result<Array2<f32>> {
        batched(h_l, Execution::Parallel, |c| self.psi_c.predict(c))
    }

    pub fn concepts(&self, h_l: ArrayView2<f32>) -> Result<Array2<f32>> {
        Ok(self.concept_logits(h_l)?.mapv(sigmoid))
    }

    /// `psi_y` on any width-`k` concept vector.
    pub fn reconstruct(&self, concepts: ArrayView2<f32>) -> Result<Array2<f32>> {
        batched(concepts, Execution::Parallel, |c| self.psi_y.predict(c))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = net_tensors("psi_c.", &self.psi_c);
        tensors.extend(net_tensors("psi_y.", &self.psi_y));
        let meta = Metadata {
            kind: "anycbm".into(),
            psi_c_layers: self.psi_c.specs(),
            psi_y_layers: self.psi_y.specs(),
            mode: self.mode,
            tap_l: self.tap_l,
            tap_q: self.tap_q,
            blackbox_hash: self.blackbox_hash.clone(),
            provenance: self.provenance,
        };
        Checkpoint::new(tensors, &meta).expect("metadata serializes")
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: Metadata = ckpt.metadata()?;
        if meta.kind != "anycbm" {
            return Err(Error::format("checkpoint", format!("expected anycbm heads, found {:?}", meta.kind)));
        }
        Ok(Self {
            psi_c: net_from_tensors("psi_c.", &meta.psi_c_layers, ckpt)?,
            psi_y: net_from_tensors("psi_y.", &meta.psi_y_layers, ckpt)?,
            mode: meta.mode,
            tap_l: meta.tap_l,
            tap_q: meta.tap_q,
            blackbox_hash: meta.blackbox_hash,
            provenance: meta.provenance,
        })
    }
}

/// Fits `psi_c` and `psi_y` against a frozen black box using inputs and
/// concept labels only; task labels are never read.
///
/// * independent: `psi_c` on BCE to the concepts, `psi_y` on MSE from the
///   ground-truth concept vectors to `phi(h_l)`.
/// * sequential: as independent, but `psi_y` reads `psi_c`'s frozen
///   probabilities.
/// * joint: `lambda_c * BCE + lambda_r * MSE(psi_y(psi_c(h_l)), phi(h_l))`.
pub fn train_anycbm(
    blackbox: &BlackBoxModel,
    train: &Dataset,
    val: &Dataset,
    config: &AnyCbmConfig,
    mode: TrainingMode,
) -> Result<(AnyCbmHeads, TrainLog)> {
    let k = train.meta.k;
    if k == 0 {
        return Err(Error::InvalidArgument("head training needs concept labels".into()));
    }
    let width_l = blackbox.width_at(blackbox.tap_l())?;
    let width_q = blackbox.width_at(blackbox.tap_q())?;
    if train.meta.n != blackbox.net().in_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features, black box reads {}",
            train.meta.n,
            blackbox.net().in_dim()
        )));
    }

    let h_l = blackbox.embed(train.features().view(), blackbox.tap_l())?;
    let h_q = blackbox.phi(h_l.view())?;
    let val_h_l = blackbox.embed(val.features().view(), blackbox.tap_l())?;
    let val_h_q = blackbox.phi(val_h_l.view())?;
    let concepts = train.concepts_f32();

    let mut c_widths = vec![width_l];
    c_widths.extend(&config.psi_c_hidden);
    c_widths.push(k);
    let mut y_widths = vec![k];
    y_widths.extend(&config.psi_y_hidden);
    y_widths.push(width_q);
    let seed = config.train.seed;
    let mut psi_c = FeedForwardNet::new(
        &LayerSpec::chain(&c_widths, Activation::Relu, Activation::Identity),
        &mut seeded(seed, streams::INIT),
    )?;
    let mut psi_y = FeedForwardNet::new(
        &LayerSpec::chain(&y_widths, Activation::Relu, Activation::Identity),
        &mut seeded(seed, streams::SECOND_INIT),
    )?;

    let recon_loss = |out: ArrayView2<f32>, idx: &[usize]| mse(out, h_q.select(Axis(0), idx).view());
    let mut log = TrainLog::default();

    let provenance = match mode {
        TrainingMode::Joint => {
            fit_joint(
                &mut psi_c,
                &mut psi_y,
                &h_l,
                ConceptTargets {
                    concepts: &concepts,
                    weight: config.lambda_c,
                },
                config.lambda_r,
                &config.train,
                &mut seeded(seed, streams::SHUFFLE),
                "anycbm.joint",
                &mut log,
                recon_loss,
                |c, y| val_relative_reconstruction(c, y, &val_h_l, &val_h_q),
            )?;
            Provenance {
                rows_seen: train.len() * config.train.epochs,
                non_vertex_rows: train.len() * config.train.epochs,
            }
        }
        TrainingMode::Independent | TrainingMode::Sequential => {
            fit(
                &mut psi_c,
                &h_l,
                &config.train,
                &mut seeded(seed, streams::SHUFFLE),
                "anycbm.psi_c",
                &mut log,
                |out, idx| bce_with_logits(out, concepts.select(Axis(0), idx).view()),
                |c| val_concept_auc(c, &val_h_l, val),
            )?;
            let y_inputs = if mode == TrainingMode::Independent {
                concepts.clone()
            } else {
                batched(h_l.view(), Execution::Parallel, |c| psi_c.predict(c))?.mapv(sigmoid)
            };
            fit(
                &mut psi_y,
                &y_inputs,
                &config.train,
                &mut seeded(seed, streams::SECOND_SHUFFLE),
                "anycbm.psi_y",
                &mut log,
                recon_loss,
                |y| val_relative_reconstruction(&psi_c, y, &val_h_l, &val_h_q),
            )?;
            Provenance::observe(y_inputs.view(), config.train.epochs)
        }
    };

    let mut heads = AnyCbmHeads::new(blackbox, psi_c, psi_y, mode)?;
    heads.provenance = provenance;
    Ok((heads, log))
}

pub fn anycbm_predict(blackbox: &BlackBoxModel, heads: &AnyCbmHeads, x: ArrayView2<f32>) -> Result<AnyCbmPrediction> {
    heads.check_pair(blackbox)?;
    let h_l = blackbox.embed(x, heads.tap_l)?;
    let concepts = heads.concepts(h_l.view())?;
    let h_q = heads.reconstruct(concepts.view())?;
    let logits = blackbox.head_forward(h_q.view(), heads.tap_q)?;
    Ok(AnyCbmPrediction { concepts, h_q, logits })
}

/// Clean task and concept ROC-AUC of the black box read through the heads.
pub fn anycbm_scores(blackbox: &BlackBoxModel, heads: &AnyCbmHeads, dataset: &Dataset) -> Result<(f64, f64)> {
    let pred = anycbm_predict(blackbox, heads, dataset.features().view())?;
    let task = task_auc(pred.logits.view(), dataset.labels())?;
    let concept = macro_roc_auc(pred.concepts.mapv(f64::from).view(), dataset.concepts().view())?;
    Ok((task, concept))
}

/// How far the concept path lands from the black-box path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutationReport {
    /// Mean over samples of `||psi_y(psi_c(h_l)) - phi(h_l)||^2`.
    pub mean_sq_error: f64,
    /// Mean over samples of `||phi(h_l)||^2`.
    pub reference_energy: f64,
    /// `mean_sq_error / reference_energy`.
    pub relative: f64,
    /// Mean squared error per `tap_q` dimension.
    pub per_dim: Vec<f64>,
}

pub fn commutation_error(blackbox: &BlackBoxModel, heads: &AnyCbmHeads, x: ArrayView2<f32>) -> Result<CommutationReport> {
    heads.check_pair(blackbox)?;
    commutation_error_with(blackbox, x, |h_l| {
        let c = heads.concepts(h_l)?;
        heads.reconstruct(c.view())
    })
}

/// Commutation error of an arbitrary stand-in for `phi`.
pub fn commutation_error_with<M>(blackbox: &BlackBoxModel, x: ArrayView2<f32>, map: M) -> Result<CommutationReport>
where
    M: Fn(ArrayView2<f32>) -> Result<Array2<f32>>,
{
    let h_l = blackbox.embed(x, blackbox.tap_l())?;
    let target = blackbox.phi(h_l.view())?;
    let approx = map(h_l.view())?;
    if approx.dim() != target.dim() {
        return Err(Error::Shape(format!("map produced {:?}, phi {:?}", approx.dim(), target.dim())));
    }
    let diff = (&approx - &target).mapv(|v| f64::from(v) * f64::from(v));
    let rows = target.nrows().max(1) as f64;
    let mean_sq_error = diff.sum() / rows;
    let reference_energy = target.mapv(|v| f64::from(v) * f64::from(v)).sum() / rows;
    let per_dim = diff.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
    Ok(CommutationReport {
        mean_sq_error,
        reference_energy,
        relative: mean_sq_error / reference_energy.max(f64::MIN_POSITIVE),
        per_dim,
    })
}

/// Round-trip and lattice-injectivity checks for heads fitted with
/// coinciding taps, where the concept path should reproduce its input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    /// Mean over samples of `||psi_y(psi_c(h)) - h||^2`.
    pub roundtrip_mse: f64,
    /// Mean over samples of `||h||^2`.
    pub input_energy: f64,
    pub relative: f64,
    /// Number of enumerated concept vertices, `2^k`, or 0 when `k` is too
    /// large to enumerate.
    pub vertices: usize,
    /// Smallest Euclidean distance between `psi_y` images of two distinct
    /// vertices.
    pub min_vertex_distance: Option<f64>,
    /// True when every vertex has a distinct image.
    pub injective_on_vertices: Option<bool>,
}

pub fn identity_roundtrip_suite(blackbox: &BlackBoxModel, heads: &AnyCbmHeads, x: ArrayView2<f32>) -> Result<RoundtripReport> {
    heads.check_pair(blackbox)?;
    if heads.tap_l != heads.tap_q {
        return Err(Error::InvalidArgument(format!(
            "round trip needs coinciding taps, heads use {}..{}",
            heads.tap_l, heads.tap_q
        )));
    }
    let h = blackbox.embed(x, heads.tap_l)?;
    let back = heads.reconstruct(heads.concepts(h.view())?.view())?;
    let rows = h.nrows().max(1) as f64;
    let roundtrip_mse = (&back - &h).mapv(|v| f64::from(v).powi(2)).sum() / rows;
    let input_energy = h.mapv(|v| f64::from(v).powi(2)).sum() / rows;

    let lattice = vertex_images(heads.psi_y())?;
    let (vertices, min_vertex_distance) = match &lattice {
        Some(images) => (images.nrows(), Some(min_pairwise_distance(images.view()))),
        None => (0, None),
    };
    Ok(RoundtripReport {
        roundtrip_mse,
        input_energy,
        relative: roundtrip_mse / input_energy.max(f64::MIN_POSITIVE),
        vertices,
        min_vertex_distance,
        injective_on_vertices: min_vertex_distance.map(|d| d > 0.0),
    })
}

/// Every vertex of `{0,1}^k` in binary counting order, one per row.
pub fn concept_vertices(k: usize) -> Array2<f32> {
    let count = 1usize << k;
    Array2::from_shape_fn((count, k), |(v, j)| ((v >> j) & 1) as f32)
}

/// `psi_y` applied to every vertex, or `None` when `k` exceeds
/// [`MAX_ENUMERATED_CONCEPTS`].
pub fn vertex_images(psi_y: &FeedForwardNet<f32>) -> Result<Option<Array2<f32>>> {
    let k = psi_y.in_dim();
    if k > MAX_ENUMERATED_CONCEPTS {
        return Ok(None);
    }
    Ok(Some(psi_y.predict(concept_vertices(k).view())?))
}

pub fn min_pairwise_distance(points: ArrayView2<f32>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.nrows() {
        for j in (i + 1)..points.nrows() {
            let d = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

fn val_concept_auc(psi_c: &FeedForwardNet<f32>, val_h_l: &Array2<f32>, val: &Dataset) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let logits = batched(val_h_l.view(), Execution::Parallel, |c| psi_c.predict(c))?;
    Ok(macro_roc_auc(logits.mapv(f64::from).view(), val.concepts().view()).ok())
}

fn val_relative_reconstruction(
    psi_c: &FeedForwardNet<f32>,
    psi_y: &FeedForwardNet<f32>,
    val_h_l: &Array2<f32>,
    val_h_q: &Array2<f32>,
) -> Result<Option<f64>> {
    if val_h_l.nrows() == 0 {
        return Ok(None);
    }
    let c = batched(val_h_l.view(), Execution::Parallel, |c| psi_c.predict(c))?.mapv(sigmoid);
    let back = batched(c.view(), Execution::Parallel, |c| psi_y.predict(c))?;
    let err = (&back - val_h_q).mapv(|v| f64::from(v).powi(2)).sum();
    let energy = val_h_q.mapv(|v| f64::from(v).powi(2)).sum();
    Ok(Some(err / energy.max(f64::MIN_POSITIVE)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{train_blackbox, BlackBoxConfig};
    use crate::data::{split, synth_concepts, SplitSpec};
    use ndarray::Array1;

    fn setup() -> (BlackBoxModel, Dataset, Dataset) {
        let data = synth_concepts(4, 800, 3).unwrap();
        let (train, val, _) = split(&data, SplitSpec::new(0.75, 0.25, 0.0, 0)).unwrap();
        let config = BlackBoxConfig {
            hidden: vec![24, 16],
            tap_l: 1,
            tap_q: 2,
            train: TrainConfig {
                epochs: 3,
                batch_size: 32,
                ..TrainConfig::default()
            },
        };
        let (bb, _) = train_blackbox(&train, &val, &config).unwrap();
        (bb, train, val)
    }

    fn quick() -> AnyCbmConfig {
        AnyCbmConfig {
            psi_c_hidden: vec![16],
            psi_y_hidden: vec![16],
            train: TrainConfig {
                epochs: 2,
                batch_size: 32,
                ..TrainConfig::default()
            },
            ..AnyCbmConfig::default()
        }
    }

    #[test]
    fn widths_are_enforced_at_construction() {
        let (bb, _, _) = setup();
        let mut rng = seeded(0, 0);
        let good_c = FeedForwardNet::new(&LayerSpec::chain(&[24, 4], Activation::Relu, Activation::Identity), &mut rng).unwrap();
        let good_y = FeedForwardNet::new(&LayerSpec::chain(&[4, 16], Activation::Relu, Activation::Identity), &mut rng).unwrap();
        let bad_y = FeedForwardNet::new(&LayerSpec::chain(&[4, 15], Activation::Relu, Activation::Identity), &mut rng).unwrap();
        assert!(AnyCbmHeads::new(&bb, good_c.clone(), good_y, TrainingMode::Independent).is_ok());
        assert!(AnyCbmHeads::new(&bb, good_c, bad_y, TrainingMode::Independent).is_err());
    }

    #[test]
    fn training_leaves_black_box_bytes_alone() {
        let (bb, train, val) = setup();
        let before = bb.to_checkpoint().to_bytes();
        for mode in [TrainingMode::Independent, TrainingMode::Sequential, TrainingMode::Joint] {
            let (heads, _) = train_anycbm(&bb, &train, &val, &quick(), mode).unwrap();
            assert_eq!(heads.blackbox_hash(), bb.hash());
        }
        assert_eq!(bb.to_checkpoint().to_bytes(), before);
        assert_eq!(bb.compute_hash(), bb.hash());
    }

    #[test]
    fn independent_psi_y_trains_on_vertices_only() {
        let (bb, train, val) = setup();
        let (ind, _) = train_anycbm(&bb, &train, &val, &quick(), TrainingMode::Independent).unwrap();
        assert!(ind.provenance().only_vertices());
        let (seq, _) = train_anycbm(&bb, &train, &val, &quick(), TrainingMode::Sequential).unwrap();
        assert!(!seq.provenance().only_vertices());
    }

    #[test]
    fn predict_is_deterministic_and_rejects_foreign_black_box() {
        let (bb, train, val) = setup();
        let (heads, _) = train_anycbm(&bb, &train, &val, &quick(), TrainingMode::Independent).unwrap();
        let x = val.features().view();
        let a = anycbm_predict(&bb, &heads, x).unwrap();
        assert_eq!(a, anycbm_predict(&bb, &heads, x).unwrap());
        assert_eq!(a.concepts.ncols(), 4);
        assert_eq!(a.h_q.ncols(), 16);

        let other_cfg = BlackBoxConfig {
            hidden: vec![24, 16],
            train: TrainConfig {
                epochs: 1,
                seed: 99,
                ..TrainConfig::default()
            },
            ..BlackBoxConfig::default()
        };
        let (other, _) = train_blackbox(&train, &val, &other_cfg).unwrap();
        assert!(matches!(anycbm_predict(&other, &heads, x), Err(Error::HashMismatch { .. })));
    }

    #[test]
    fn phi_itself_commutes_exactly() {
        let (bb, _, val) = setup();
        let report = commutation_error_with(&bb, val.features().view(), |h| bb.phi(h)).unwrap();
        assert_eq!(report.mean_sq_error, 0.0);
        assert_eq!(report.relative, 0.0);
        assert!(report.per_dim.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn roundtrip_requires_identity_taps() {
        let (bb, train, val) = setup();
        let (heads, _) = train_anycbm(&bb, &train, &val, &quick(), TrainingMode::Joint).unwrap();
        assert!(identity_roundtrip_suite(&bb, &heads, val.features().view()).is_err());
    }

    #[test]
    fn constant_decoder_is_flagged_non_injective() {
        let spec = LayerSpec::new(4, 3, Activation::Identity);
        let layer = crate::nn::Dense::from_parts(spec, Array2::zeros((3, 4)), Array1::from(vec![1.0, 2.0, 3.0])).unwrap();
        let psi_y = FeedForwardNet::from_layers(vec![layer]).unwrap();
        let images = vertex_images(&psi_y).unwrap().unwrap();
        assert_eq!(images.nrows(), 16);
        assert_eq!(min_pairwise_distance(images.view()), 0.0);
    }

    #[test]
    fn vertices_enumerate_the_lattice() {
        let v = concept_vertices(3);
        assert_eq!(v.nrows(), 8);
        let mut rows: Vec<Vec<u8>> = v.outer_iter().map(|r| r.iter().map(|&x| x as u8).collect()).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 8);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (bb, train, val) = setup();
        let (heads, _) = train_anycbm(&bb, &train, &val, &quick(), TrainingMode::Independent).unwrap();
        let ckpt = heads.to_checkpoint();
        assert!(ckpt.tensors.iter().all(|t| t.name.starts_with("psi_c.") || t.name.starts_with("psi_y.")));
        assert_eq!(AnyCbmHeads::from_checkpoint(&ckpt).unwrap(), heads);
    }
}
