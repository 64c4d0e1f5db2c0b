//! Goal-oriented space-time adaptive finite element solver for linear
//! convection-diffusion-reaction equations on the unit square.
//!
//! The discretization is a discontinuous Galerkin method of degree `r` in
//! time combined with continuous bilinear/biquadratic/bicubic elements of
//! degree `p` on quadrilateral meshes in space, with optional streamline
//! upwind (SUPG) stabilization for convection-dominated regimes. A dual
//! (adjoint) problem in enriched spaces drives a dual-weighted residual
//! error estimator that splits the goal-functional error into temporal and
//! spatial parts; an equilibrated marking strategy then refines the time
//! partition and the per-slab meshes adaptively.

// Index-based loops are kept where they mirror the block-matrix index
// algebra, and negated comparisons like `!(x > 0.0)` are deliberate so that
// NaN inputs fall into the rejection branch.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod config;
pub mod dual;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod primal;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod space;
pub mod sparse;
pub mod time;

pub use error::{Error, Result};
