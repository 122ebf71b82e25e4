//! Ensemble fusion for the outputs of several pretrained vision-language
//! classifiers.
//!
//! Three fusion strategies are provided, each suited to a different amount of
//! available data and compute:
//!
//! * [`zero_shot`]: confidence-aware weighting of the weaker models, with the
//!   strongest ("anchor") model kept at weight 1.0. Needs no labels.
//! * [`training_free`]: static per-model weights chosen by searching a grid
//!   for the best accuracy on a small labeled set.
//! * [`swig`] + [`train`]: a small two-layer gating network that maps the
//!   concatenated image features of every model to per-sample weights.
//!
//! [`protocols`] wires these into the usual evaluation set-ups (zero-shot,
//! base-to-new, cross-dataset, domain generalization).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, manifests,
//! threading and the command line live in the `vlme` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
#[cfg(feature = "fixtures")]
pub mod fixtures;
pub mod matrix;
pub mod protocols;
pub mod scoring;
pub mod swig;
pub mod train;
pub mod training_free;
pub mod zero_shot;

pub use dataset::{EnsembleData, ModelOutputs};
pub use error::{Error, Result};
pub use matrix::{ClassEmbeddings, FeatureMatrix, LabelVector, Matrix, ProbMatrix, ScoreMatrix};
