//! Corpus reliability toolkit for underwater fish detection datasets.
//!
//! The pipeline ingests heterogeneous labelled image collections into a
//! single-class manifest, removes duplicates, draws a stratified split,
//! computes per-image visual and scene diagnostics, scores detector output
//! and attributes recall to image conditions.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiations.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod dedup;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod harmonize;
pub mod image;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod split;
pub mod structure;
pub mod toy;

pub use error::{Error, Result};
pub use model::{Annotation, ImageRecord, Manifest, NormalizedBox, SourceDescriptor, Split};
pub use scalar::Scalar;

pub type Box64 = model::NormalizedBox<f64>;
pub type Box32 = model::NormalizedBox<f32>;
pub type Image64 = image::RgbImage<f64>;
pub type Image32 = image::RgbImage<f32>;
pub type Detection64 = eval::Detection<f64>;
pub type Detection32 = eval::Detection<f32>;
pub type Diagnostics64 = diagnostics::DiagnosticVector<f64>;
