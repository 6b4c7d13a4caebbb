//! Metrics and the concept-intervention protocol.

mod intervention;
mod metrics;

pub use intervention::{
    intervene, intervention_curve, perturb_embedding, AnyCbmPair, ConceptFamilies, ConceptModel, CurvePoint,
    CurveResult, CurveRow, InterventionSpec, NoiseProfile, DEFAULT_SIGMA,
};
pub use metrics::{accuracy, aggregate, argmax, binary_task_scores, macro_roc_auc, roc_auc, task_auc};
