//! Basis functions on the reference triangle with vertices (0,0), (1,0), (0,1).
//!
//! Local edge `i` is opposite local vertex `i` and runs from vertex `i + 1`
//! to vertex `i + 2` (indices mod 3).

use super::quadrature::{edge_quadrature, triangle_quadrature};
use crate::dense::invert_in_place;
use std::sync::OnceLock;

/// Families of reference shape functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    P1,
    P2,
    CellBubble,
    EdgeBubbleNormal,
    P0,
    P1dg,
    Rt0,
    Rt1,
}

impl Family {
    pub fn dof_count(self) -> usize {
        match self {
            Family::P1 | Family::P1dg | Family::EdgeBubbleNormal | Family::Rt0 => 3,
            Family::P2 => 6,
            Family::CellBubble | Family::P0 => 1,
            Family::Rt1 => 8,
        }
    }

    pub fn is_vector(self) -> bool {
        matches!(self, Family::Rt0 | Family::Rt1)
    }
}

pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
pub const REF_GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Outward unit normal of reference edge `i`.
pub fn reference_normal(i: usize) -> [f64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[s, s], [-1.0, 0.0], [0.0, -1.0]][i]
}

pub fn barycentric(x: [f64; 2]) -> [f64; 3] {
    [1.0 - x[0] - x[1], x[0], x[1]]
}

/// Values and gradients of a scalar family expressed through barycentric
/// coordinates `l` and their (constant) gradients `g`. Writes into the
/// leading `dof_count` entries of the output slices.
pub fn scalar_basis(family: Family, l: [f64; 3], g: &[[f64; 2]; 3], vals: &mut [f64], grads: &mut [[f64; 2]]) {
    let lin = |a: f64, ga: [f64; 2]| [a * ga[0], a * ga[1]];
    match family {
        Family::P1 | Family::P1dg => {
            vals[..3].copy_from_slice(&l);
            grads[..3].copy_from_slice(g);
        }
        Family::P0 => {
            vals[0] = 1.0;
            grads[0] = [0.0, 0.0];
        }
        Family::P2 => {
            for i in 0..3 {
                vals[i] = l[i] * (2.0 * l[i] - 1.0);
                grads[i] = lin(4.0 * l[i] - 1.0, g[i]);
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                vals[3 + i] = 4.0 * l[a] * l[b];
                grads[3 + i] = [4.0 * (l[a] * g[b][0] + l[b] * g[a][0]), 4.0 * (l[a] * g[b][1] + l[b] * g[a][1])];
            }
        }
        Family::CellBubble => {
            vals[0] = 27.0 * l[0] * l[1] * l[2];
            grads[0] = [0, 1].map(|d| 27.0 * (g[0][d] * l[1] * l[2] + l[0] * g[1][d] * l[2] + l[0] * l[1] * g[2][d]));
        }
        Family::EdgeBubbleNormal => {
            for i in 0..3 {
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                vals[i] = l[a] * l[b];
                grads[i] = [l[a] * g[b][0] + l[b] * g[a][0], l[a] * g[b][1] + l[b] * g[a][1]];
            }
        }
        Family::Rt0 | Family::Rt1 => panic!("{family:?} is a vector-valued family"),
    }
}

/// Values and reference gradients of a scalar family at reference point `x`.
pub fn eval_scalar_basis(family: Family, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let n = family.dof_count();
    let mut vals = vec![0.0; n];
    let mut grads = vec![[0.0; 2]; n];
    scalar_basis(family, barycentric(x), &REF_GRAD_LAMBDA, &mut vals, &mut grads);
    (vals, grads)
}

// Monomial spanning sets of RT0 and RT1: value and divergence.
fn rt_monomial(k: usize, m: usize, x: [f64; 2]) -> ([f64; 2], f64) {
    let [px, py] = x;
    match (k, m) {
        (0, 0) | (1, 0) => ([1.0, 0.0], 0.0),
        (0, 1) | (1, 3) => ([0.0, 1.0], 0.0),
        (0, 2) => ([px, py], 2.0),
        (1, 1) => ([px, 0.0], 1.0),
        (1, 2) => ([py, 0.0], 0.0),
        (1, 4) => ([0.0, px], 0.0),
        (1, 5) => ([0.0, py], 1.0),
        (1, 6) => ([px * px, px * py], 3.0 * px),
        (1, 7) => ([px * py, py * py], 3.0 * py),
        _ => unreachable!("no RT{k} monomial {m}"),
    }
}

/// Applies the reference DOF functionals of RT`k` to `f`.
///
/// RT0: flux through edge `i`. RT1: edge moments against the barycentric
/// coordinates of the edge endpoints (`2i`: vertex `i+1`, `2i+1`: vertex
/// `i+2`), then the interior moments `int f_x`, `int f_y`.
pub fn rt_dofs<F: Fn([f64; 2]) -> [f64; 2]>(k: usize, f: F) -> Vec<f64> {
    let eq = edge_quadrature(6).expect("supported degree");
    let mut out = Vec::with_capacity(if k == 0 { 3 } else { 8 });
    for i in 0..3 {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        let (pa, pb) = (REF_VERTICES[a], REF_VERTICES[b]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let n = reference_normal(i);
        let mut moments = [0.0; 2];
        let mut flux = 0.0;
        for (q, w) in eq.points.iter().zip(&eq.weights) {
            let s = q[1];
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let v = f(x);
            let fn_ = (v[0] * n[0] + v[1] * n[1]) * w * len;
            flux += fn_;
            moments[0] += fn_ * (1.0 - s);
            moments[1] += fn_ * s;
        }
        if k == 0 {
            out.push(flux);
        } else {
            out.extend(moments);
        }
    }
    if k == 1 {
        let tq = triangle_quadrature(6).expect("supported degree");
        let mut m = [0.0; 2];
        for (i, w) in tq.weights.iter().enumerate() {
            let v = f(tq.reference_point(i));
            m[0] += w * v[0];
            m[1] += w * v[1];
        }
        out.extend(m);
    }
    out
}

struct RtTable {
    n: usize,
    // coeff[m * n + j]: weight of monomial m in shape function j
    coeff: Vec<f64>,
}

fn rt_table(k: usize) -> &'static RtTable {
    static TABLES: [OnceLock<RtTable>; 2] = [OnceLock::new(), OnceLock::new()];
    TABLES[k].get_or_init(|| {
        let n = if k == 0 { 3 } else { 8 };
        // dof matrix D[i][m] = dof_i(monomial_m)
        let mut d = vec![0.0; n * n];
        for m in 0..n {
            let col = rt_dofs(k, |x| rt_monomial(k, m, x).0);
            for i in 0..n {
                d[i * n + m] = col[i];
            }
        }
        assert!(invert_in_place(n, &mut d), "RT{k} dof matrix is singular");
        RtTable { n, coeff: d }
    })
}

/// Reference RT`k` shape functions dual to [`rt_dofs`]: values and divergences.
pub fn eval_rt_basis(k: usize, x: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let t = rt_table(k);
    let mut vals = vec![[0.0; 2]; t.n];
    let mut divs = vec![0.0; t.n];
    rt_basis_into(k, x, &mut vals, &mut divs);
    (vals, divs)
}

pub(crate) fn rt_basis_into(k: usize, x: [f64; 2], vals: &mut [[f64; 2]], divs: &mut [f64]) {
    let t = rt_table(k);
    for j in 0..t.n {
        vals[j] = [0.0; 2];
        divs[j] = 0.0;
    }
    for m in 0..t.n {
        let (v, dv) = rt_monomial(k, m, x);
        for j in 0..t.n {
            let c = t.coeff[m * t.n + j];
            vals[j][0] += c * v[0];
            vals[j][1] += c * v[1];
            divs[j] += c * dv;
        }
    }
}

/// Evaluates a reference basis of any family: scalar families return their
/// values in the first component, gradients are reported for scalar
/// families and divergences for RT families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceBasis {
    pub family: Family,
}

impl ReferenceBasis {
    pub fn new(family: Family) -> Self {
        ReferenceBasis { family }
    }

    pub fn dof_count(&self) -> usize {
        self.family.dof_count()
    }

    pub fn eval_scalar(&self, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        eval_scalar_basis(self.family, x)
    }

    pub fn eval_rt(&self, x: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
        match self.family {
            Family::Rt0 => eval_rt_basis(0, x),
            Family::Rt1 => eval_rt_basis(1, x),
            f => panic!("{f:?} is a scalar family"),
        }
    }
}
