//! Finite element solver for the steady generalized Navier-Stokes equations
//! with (p, delta)-structure extra stress on the unit square, including
//! divergence-reconstructed convection and a manufactured-solution
//! convergence study.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod assembly;
mod dense;
pub mod elements;
pub mod error;
pub mod integrate;
pub mod mesh;
pub mod nfun;
pub mod solver;
pub mod spaces;
pub mod study;

pub use error::{Error, Result};
pub use mesh::Mesh;
pub use nfun::{FlowLaw, Tensor2};
