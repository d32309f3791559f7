//! Normalized Kähler-Ricci flow on model Kähler surfaces, with the curvature
//! integrals, Chern-Weil numbers, and energy functionals needed to check the
//! Miyaoka-Yau inequality along the flow.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chern;
pub mod cli;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod models;

pub use error::{Error, Result};
