//! Sparse identification of governing PDEs from noisy field data.
//!
//! The pipeline builds a weak-form candidate library, screens it with
//! model-X knockoffs aggregated through e-BH, prunes the survivors with
//! SHAP-ranked recursive elimination, and picks the final equation among
//! best-subset alternatives by multi-criteria ranking.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod knockoff;
pub mod linalg;
mod par;
pub mod pdegen;
pub mod pipeline;
pub mod regress;
pub mod rfe;
pub mod screen;
pub mod seed;
pub mod select;
pub mod stats;
pub mod weaklib;

pub use error::{Error, Result};
pub use field::{Axis, Field};
