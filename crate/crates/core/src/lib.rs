//! Quality-aware set-based face matching for surveillance video: detection
//! tracking and target-face association, exemplar and subspace template
//! representations, subspace similarity metrics and open-set identification
//! evaluation.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the pipeline
//! layer works in `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod assignment;
pub mod associate;
pub mod config;
pub mod dataset;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod quality;
pub mod scalar;
pub mod similarity;
pub mod svm;
pub mod synth;
pub mod track;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type Template64 = types::Template<f64>;
pub type Template32 = types::Template<f32>;
pub type Subspace64 = aggregate::Subspace<f64>;
pub type Subspace32 = aggregate::Subspace<f32>;
pub type Representation64 = similarity::TemplateRepresentation<f64>;
pub type BoundingBox64 = types::BoundingBox<f64>;
