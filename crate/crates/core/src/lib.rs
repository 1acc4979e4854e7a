//! Numerical core for non-parametric mean curvature flow and the minimal
//! surface system on higher-codimension graphs `u: Ω ⊂ ℝⁿ → ℝᵐ`.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! grid (lattice Ω, fields) → operators (jets, residuals, curvature)
//!                          → geometry (metric, singular values, *ω, area)
//!                          → flow / elliptic (time stepping, Picard solves)
//!                          → analysis (rescaling, density ratios, refinement)
//! ```
//!
//! All reductions are deterministic: results are bit-identical for any
//! thread count (see [`exec`]).

// index loops run over several parallel per-node arrays and mirror the
// tensor index notation; negated comparisons are NaN-rejecting guards
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::manual_range_contains)]

pub mod analysis;
pub mod elliptic;
pub mod error;
pub mod exec;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod scenarios;

pub use error::CoreError;
pub use grid::{BoundaryMode, DomainGrid, GraphField, MaskShape, NodeClass};

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, CoreError>;

/// Maximum supported base dimension n.
pub const MAX_DIM: usize = 4;

/// Formats a float with 17 significant digits, the interchange format used
/// by every CSV and JSON artifact this crate writes.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}
