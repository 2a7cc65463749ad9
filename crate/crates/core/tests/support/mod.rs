//! Checks shared by the integration tests and the acceptance runner. Each
//! check returns `Err` with a diagnostic instead of panicking. The quadrature
//! loops below only use the public per-cell evaluators, so errors are
//! measured independently of the library's own norm routines.
#![allow(dead_code)]

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
    ($cond:expr) => {
        let holds: bool = $cond;
        if !holds {
            return Err(stringify!($cond).to_string());
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr $(, $($msg:tt)+)?) => {{
        let (a, b) = (&$a, &$b);
        if a != b {
            #[allow(unused_mut)]
            let mut msg = format!("{} = {a:?} differs from {b:?}", stringify!($a));
            $(msg = format!("{msg}: {}", format!($($msg)+));)?
            return Err(msg);
        }
    }};
}

pub mod cancellations;
pub mod jacobian;
pub mod nfun;
pub mod patch;
pub mod reconstruction;

use nsfem::elements::{triangle_quadrature, AffineMap};
use nsfem::spaces::{ElementPair, FeSystem};
use nsfem::{Mesh, Tensor2};

pub type Point = [f64; 2];

/// Sums `f(k, l, x) * weight` over every cell and quadrature point.
pub fn integrate(sys: &FeSystem, degree: usize, mut f: impl FnMut(usize, [f64; 3], Point) -> f64) -> f64 {
    let rule = triangle_quadrature(degree).unwrap();
    let mut total = 0.0;
    for k in 0..sys.mesh.num_triangles() {
        let map = AffineMap::for_cell(&sys.mesh, k);
        for (i, l) in rule.points.iter().enumerate() {
            let x = map.map([l[1], l[2]]);
            total += rule.weights[i] * map.det.abs() * f(k, *l, x);
        }
    }
    total
}

/// Broken `W^{1,2}` error of a discrete velocity against `(v, grad v)`.
pub fn velocity_h1_error(sys: &FeSystem, coeffs: &[f64], exact: impl Fn(Point) -> ([f64; 2], Tensor2)) -> f64 {
    integrate(sys, 8, |k, l, x| {
        let (vh, gh) = sys.eval_velocity(coeffs, k, l);
        let (v, g) = exact(x);
        let dv = [vh[0] - v[0], vh[1] - v[1]];
        let dg = gh - g;
        dv[0] * dv[0] + dv[1] * dv[1] + dg.ddot(&dg)
    })
    .sqrt()
}

pub fn pressure_l2_error(sys: &FeSystem, coeffs: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    integrate(sys, 8, |k, l, x| (sys.eval_pressure(coeffs, k, l) - exact(x)).powi(2)).sqrt()
}

pub fn system(level: usize, pair: ElementPair) -> FeSystem {
    FeSystem::new(Mesh::unit_square(level), pair)
}
