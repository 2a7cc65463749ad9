//! Reference elements, quadrature and geometric transforms.

pub mod piola;
pub mod quadrature;
pub mod reference;

pub use piola::{piola_push, AffineMap};
pub use quadrature::{edge_quadrature, triangle_quadrature, QuadratureRule};
pub use reference::{eval_rt_basis, eval_scalar_basis, Family, ReferenceBasis};

/// Quadrature degree for the stress and convection integrals.
pub const NONLINEAR_DEGREE: usize = 8;
/// Quadrature degree for linear and bilinear forms.
pub const LINEAR_DEGREE: usize = 6;
/// Quadrature degree for error norms.
pub const ERROR_DEGREE: usize = 10;
/// Quadrature degree for edge moments.
pub const EDGE_DEGREE: usize = 8;
