//! Numerical arrival-time solver for mean convex level set flow in Riemannian
//! ambient spaces.
//!
//! The continuous problem is the doubly regularized Dirichlet problem
//!
//! ```text
//! div( Du / √(ε² + |Du|²) ) + κ / √(ε² + |Du|²) = σ u   in Int(K₀),
//! u = 0                                                  on ∂K₀,
//! ```
//!
//! whose κ = 1 solutions are graphs of σ-damped translating solitons.
//! Existence is realized as a κ-homotopy from the trivial solution; σ → 0 and
//! ε → 0 sweeps with warm starts recover the arrival time of the flow on the
//! region where it stays finite. Curvature diagnostics of the graphs and of
//! the level sets feed exponential-in-time bound checks on min H and
//! max |A|/H.

pub mod config;
pub mod curvature;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod metric;
pub mod oracle;
pub mod pde;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
