use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, macro_roc_auc, task_auc};
use crate::anycbm::AnyCbmHeads;
use crate::blackbox::BlackBoxModel;
use crate::cbm::CbmModel;
use crate::data::Dataset;
use crate::par::{map_ordered, Execution};
use crate::rng::{seeded, streams};
use crate::{Error, Result};

/// Noise scale in units of per-dimension training stddev.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Partition of concept indices into groups that are intervened on together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptFamilies {
    groups: Vec<Vec<usize>>,
    k: usize,
}

impl ConceptFamilies {
    /// Every concept is its own family.
    pub fn singletons(k: usize) -> Self {
        Self {
            groups: (0..k).map(|i| vec![i]).collect(),
            k,
        }
    }

    /// Groups must be non-empty, disjoint, and within `0..k`.
    pub fn new(groups: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let mut seen = vec![false; k];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty concept family".into()));
            }
            for &c in g {
                if c >= k || seen[c] {
                    return Err(Error::InvalidArgument(format!("concept {c} out of range or in two families")));
                }
                seen[c] = true;
            }
        }
        Ok(Self { groups, k })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn group(&self, id: usize) -> Option<&[usize]> {
        self.groups.get(id).map(Vec::as_slice)
    }

    /// Concept mask covering `group_ids`.
    pub fn mask(&self, group_ids: &[usize]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.k];
        for &id in group_ids {
            let group = self
                .group(id)
                .ok_or_else(|| Error::InvalidArgument(format!("concept family {id} >= {}", self.len())))?;
            for &c in group {
                mask[c] = true;
            }
        }
        Ok(mask)
    }
}

/// One intervention setting. Intervened concepts always take their
/// ground-truth value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub group_ids: Vec<usize>,
    pub noise_sigma: f64,
    /// Activation index receiving noise; must precede the concept predictor.
    pub noise_layer: usize,
}

impl InterventionSpec {
    pub fn new(group_ids: Vec<usize>, noise_sigma: f64, noise_layer: usize) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
        }
        Ok(Self {
            group_ids,
            noise_sigma,
            noise_layer,
        })
    }

    pub fn validate(&self, families: &ConceptFamilies, tap_l: usize) -> Result<()> {
        if self.noise_layer >= tap_l {
            return Err(Error::InvalidArgument(format!(
                "noise layer {} must come before tap {tap_l}",
                self.noise_layer
            )));
        }
        families.mask(&self.group_ids).map(|_| ())
    }
}

/// Replaces the concepts in `group_ids` with hard ground-truth values and
/// leaves the rest of `c_hat` alone.
pub fn intervene(
    c_hat: ArrayView2<f32>,
    c_true: ArrayView2<u8>,
    families: &ConceptFamilies,
    group_ids: &[usize],
) -> Result<Array2<f32>> {
    if c_hat.dim() != c_true.dim() || c_hat.ncols() != families.k() {
        return Err(Error::Shape(format!(
            "predicted {:?}, true {:?}, families over {} concepts",
            c_hat.dim(),
            c_true.dim(),
            families.k()
        )));
    }
    let mask = families.mask(group_ids)?;
    let mut out = c_hat.to_owned();
    for (mut row, truth) in out.outer_iter_mut().zip(c_true.outer_iter()) {
        for (j, &on) in mask.iter().enumerate() {
            if on {
                row[j] = f32::from(truth[j]);
            }
        }
    }
    Ok(out)
}

/// Per-dimension standard deviation of training activations at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub std: Array1<f32>,
}

impl NoiseProfile {
    pub fn from_activations(h: ArrayView2<f32>) -> Result<Self> {
        if h.nrows() < 2 {
            return Err(Error::InvalidArgument("noise profile needs at least two rows".into()));
        }
        let std = h.mapv(f64::from).std_axis(Axis(0), 1.0).mapv(|v| v as f32);
        Ok(Self { std })
    }
}

/// `h + eps` with `eps[i, d] ~ N(0, (sigma * s_d)^2)`, drawn row-major from
/// one seeded stream. `sigma == 0` returns `h` unchanged.
pub fn perturb_embedding(h: ArrayView2<f32>, profile: &NoiseProfile, sigma: f64, seed: u64) -> Result<Array2<f32>> {
    if h.ncols() != profile.std.len() {
        return Err(Error::Shape(format!("{} columns, profile has {}", h.ncols(), profile.std.len())));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut out = h.to_owned();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = seeded(seed, streams::NOISE);
    for mut row in out.outer_iter_mut() {
        for (v, &s) in row.iter_mut().zip(profile.std.iter()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += (z * sigma * f64::from(s)) as f32;
        }
    }
    Ok(out)
}

/// A model that exposes a noise site, a concept layer and a
/// concept-to-task map, which is all the intervention protocol needs.
pub trait ConceptModel: Sync {
    fn k(&self) -> usize;
    /// Activation index (in the model's own numbering) where noise goes.
    fn noise_site(&self) -> usize;
    fn site_activations(&self, x: ArrayView2<f32>) -> Result<Array2<f32>>;
    /// Concept probabilities from activations at the noise site.
    fn concepts_from_site(&self, h: ArrayView2<f32>) -> Result<Array2<f32>>;
    fn task_from_concepts(&self, c: ArrayView2<f32>) -> Result<Array2<f32>>;
}

impl ConceptModel for CbmModel {
    fn k(&self) -> usize {
        CbmModel::k(self)
    }

    fn noise_site(&self) -> usize {
        self.penultimate()
    }

    fn site_activations(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.g_activation(x, self.penultimate())
    }

    fn concepts_from_site(&self, h: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.concepts_from(h, self.penultimate())
    }

    fn task_from_concepts(&self, c: ArrayView2<f32>) -> Result<Array2<f32>> {
        CbmModel::task_from_concepts(self, c)
    }
}

/// A black box read through its AnyCBM heads.
#[derive(Debug, Clone, Copy)]
pub struct AnyCbmPair<'a> {
    pub blackbox: &'a BlackBoxModel,
    pub heads: &'a AnyCbmHeads,
    pub noise_layer: usize,
}

impl<'a> AnyCbmPair<'a> {
    pub fn new(blackbox: &'a BlackBoxModel, heads: &'a AnyCbmHeads, noise_layer: usize) -> Result<Self> {
        heads.check_pair(blackbox)?;
        let (tap_l, _) = heads.taps();
        if noise_layer >= tap_l {
            return Err(Error::InvalidArgument(format!("noise layer {noise_layer} must come before tap {tap_l}")));
        }
        Ok(Self {
            blackbox,
            heads,
            noise_layer,
        })
    }
}

impl ConceptModel for AnyCbmPair<'_> {
    fn k(&self) -> usize {
        self.heads.k()
    }

    fn noise_site(&self) -> usize {
        self.noise_layer
    }

    fn site_activations(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.blackbox.embed(x, self.noise_layer)
    }

    fn concepts_from_site(&self, h: ArrayView2<f32>) -> Result<Array2<f32>> {
        let h_l = self.blackbox.run(h, self.noise_layer, self.heads.taps().0)?;
        self.heads.concepts(h_l.view())
    }

    fn task_from_concepts(&self, c: ArrayView2<f32>) -> Result<Array2<f32>> {
        let h_q = self.heads.reconstruct(c)?;
        self.blackbox.head_forward(h_q.view(), self.heads.taps().1)
    }
}

/// Aggregate of one prefix size across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub num_groups: usize,
    pub mean: f64,
    pub stderr: f64,
    pub seeds: Vec<u64>,
}

/// One (seed, prefix size) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub num_groups: usize,
    pub task_auc: f64,
    pub concept_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    /// Seed-major, then prefix size.
    pub rows: Vec<CurveRow>,
    /// Task ROC-AUC per prefix size, `0..=families.len()`.
    pub points: Vec<CurvePoint>,
}

/// For each seed: perturb activations at the model's noise site, draw a
/// random family order, and score the task after intervening on every
/// prefix of that order.
pub fn intervention_curve<M: ConceptModel + ?Sized>(
    model: &M,
    dataset: &Dataset,
    families: &ConceptFamilies,
    profile: &NoiseProfile,
    sigma: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<CurveResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("intervention curve needs at least one seed".into()));
    }
    if families.k() != model.k() {
        return Err(Error::Shape(format!("families over {} concepts, model has {}", families.k(), model.k())));
    }
    let clean = model.site_activations(dataset.features().view())?;
    let per_seed = map_ordered(seeds, exec, |&seed| -> Result<Vec<CurveRow>> {
        let noisy = perturb_embedding(clean.view(), profile, sigma, seed)?;
        let c_hat = model.concepts_from_site(noisy.view())?;
        let mut order: Vec<usize> = (0..families.len()).collect();
        order.shuffle(&mut seeded(seed, streams::GROUP_ORDER));
        (0..=order.len())
            .map(|m| {
                let mixed = intervene(c_hat.view(), dataset.concepts().view(), families, &order[..m])?;
                let logits = model.task_from_concepts(mixed.view())?;
                Ok(CurveRow {
                    seed,
                    num_groups: m,
                    task_auc: task_auc(logits.view(), dataset.labels())?,
                    concept_auc: macro_roc_auc(mixed.mapv(f64::from).view(), dataset.concepts().view())?,
                })
            })
            .collect()
    });
    let rows: Vec<CurveRow> = per_seed.into_iter().collect::<Result<Vec<_>>>()?.concat();
    let points = (0..=families.len())
        .map(|m| {
            let values: Vec<f64> = rows.iter().filter(|r| r.num_groups == m).map(|r| r.task_auc).collect();
            let (mean, stderr) = aggregate(&values)?;
            Ok(CurvePoint {
                num_groups: m,
                mean,
                stderr,
                seeds: seeds.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveResult { rows, points })
}
