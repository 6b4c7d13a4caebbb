//! Dense feedforward networks with hand-written reverse-mode gradients.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32`
//! and verifies gradients in `f64`.

mod adam;
mod gradcheck;
mod layer;
mod loss;
mod net;

use std::fmt::{Debug, Display};

use ndarray::{ArrayBase, Data, Dimension, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_combos, grad_check, grad_check_suite, CheckCombo, CheckLoss, CheckOutcome};
pub use layer::{sigmoid, Activation, Dense, LayerSpec};
pub use loss::{bce_with_logits, mse, softmax_ce, softmax_rows};
pub use net::{FeedForwardNet, Gradients, Trace};

use crate::{Error, Result};

pub trait Scalar:
    Float + NumAssign + LinalgScalar + ScalarOperand + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}

/// Rejects any NaN or infinity in `a`, naming `what` in the error.
pub fn ensure_finite<S, D, F>(a: &ArrayBase<S, D>, what: &str) -> Result<()>
where
    S: Data<Elem = F>,
    D: Dimension,
    F: Scalar,
{
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
