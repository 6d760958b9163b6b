//! Polarized elementary embeddings for domain generalization.
//!
//! A category-classifying and a domain-classifying embedding are trained
//! jointly; a per-sample cosine penalty and an embedding-index discriminator
//! push their features apart. The crate bundles a small dense numeric engine
//! with hand-derived gradients, synthetic multi-domain datasets, the
//! leave-one-domain-out trainer, and the diagnostics used to inspect the
//! resulting representations.
//!
//! The numeric engine is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix everything to `f64`, which is what the rest of the crate uses.

pub mod analysis;
pub mod datagen;
pub mod error;
pub mod gradsuite;
pub mod nncore;
pub mod poem;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{LabError, Result};
pub use scalar::Scalar;

pub type Tensor2 = nncore::Matrix<f64>;
pub type MlpParams = nncore::Mlp<f64>;
pub type OptimizerState = nncore::AdamW<f64>;
pub type SvdResult = nncore::SvdResult<f64>;
pub type PoemModel = poem::PoemModel<f64>;
pub type CategoryModel = poem::CategoryModel<f64>;
pub type Batch = poem::Batch<f64>;
pub type LossBreakdown = poem::LossBreakdown<f64>;
