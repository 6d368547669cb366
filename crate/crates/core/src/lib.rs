//! Fixed equiangular-frame classifiers for long-tailed classification.
//!
//! The library provides the pieces of a two-stage training recipe built
//! around a classifier whose weight vectors are *maximally and equally
//! separated* (a simplex equiangular tight frame):
//!
//! - [`frame`]: closed-form and iterative constructors for unit-norm
//!   weight frames, plus verification and serialization.
//! - [`loss`]: class-frequency margin priors, the margin-adjusted
//!   cross-entropy loss, and a soft-target distillation loss with exact
//!   gradients.
//! - [`sampling`]: repeat-factor up-sampling of samples containing rare
//!   classes and instance-frequency prior estimation.
//! - [`head`]: the trainable classification head — an affine projector
//!   feeding the fixed frame, with optional multiple background centers.
//! - [`bench`]: a synthetic long-tailed task generator and the trainers
//!   (fixed-margin stage, distillation stage, reference baselines) with
//!   geometry diagnostics.
//!
//! All randomness is derived from explicit seeds through [`seeds`]; every
//! operation is deterministic given its inputs.

pub mod bench;
pub mod error;
pub mod frame;
pub mod head;
pub mod loss;
pub mod sampling;
pub mod seeds;

pub use error::{Error, Result};
