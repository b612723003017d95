//! Clickbait scoring for social-media posts.
//!
//! The pipeline reads line-delimited JSON corpora ([`corpus`]), normalizes
//! each text field ([`textprep`]), encodes it as sparse 1–3-gram counts
//! ([`features`]), trains one L2-regularized linear SVR per field and target
//! ([`linear`]) and stacks their out-of-fold predictions with an
//! extremely-randomized-trees regressor ([`ensemble`]). [`eval`] holds the
//! metrics and report tables.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod linear;
pub mod persist;
pub mod textprep;

pub use error::{Error, Result};
pub use exec::Exec;
