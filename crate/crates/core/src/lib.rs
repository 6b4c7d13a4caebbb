//! Concept bottlenecks for any trained feedforward classifier.
//!
//! A [`blackbox::BlackBoxModel`] is trained once and frozen. [`anycbm`]
//! fits a concept predictor and a decoder between two of its hidden layers
//! so predictions can be read, and steered, through human concepts. The
//! [`cbm`] module holds the conventional concept bottleneck baseline, and
//! [`eval`] the metrics and intervention protocol used to compare them.

pub mod anycbm;
pub mod blackbox;
pub mod cbm;
pub mod checkpoint;
pub mod data;
mod error;
pub mod eval;
pub mod experiments;
pub mod nn;
pub mod par;
pub mod rng;
pub mod train;

pub use cbm::TrainingMode;
pub use error::{Error, Result};
