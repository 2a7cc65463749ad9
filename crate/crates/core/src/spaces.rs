//! Global finite element spaces: velocity/pressure pairs with their
//! Raviart-Thomas reconstruction space, DOF numbering, interpolation and
//! field evaluation.

use crate::elements::quadrature::{edge_quadrature, triangle_quadrature};
use crate::elements::reference::{rt_basis_into, scalar_basis, Family};
use crate::elements::{AffineMap, EDGE_DEGREE, LINEAR_DEGREE};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::nfun::Tensor2;
use std::fmt;
use std::str::FromStr;

pub const MAX_VELOCITY_LOCAL: usize = 14;
pub const MAX_RECON_LOCAL: usize = 8;
pub const MAX_PRESSURE_LOCAL: usize = 3;

/// Inf-sup stable velocity/pressure pairs with discontinuous pressure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementPair {
    /// First-order Bernardi-Raugel: `P1^2` plus normal edge bubbles, `P0` pressure, RT0.
    Br1P0,
    /// `P2^2` velocity, `P0` pressure, RT0.
    P2P0,
    /// Conforming Crouzeix-Raviart: `(P2 + cell bubble)^2`, discontinuous `P1`, RT1.
    CcrP1dg,
}

impl ElementPair {
    pub const ALL: [ElementPair; 3] = [ElementPair::Br1P0, ElementPair::P2P0, ElementPair::CcrP1dg];

    /// Polynomial degree of the reconstruction space (RT0 or RT1).
    pub fn recon_degree(self) -> usize {
        match self {
            ElementPair::Br1P0 | ElementPair::P2P0 => 0,
            ElementPair::CcrP1dg => 1,
        }
    }

    pub fn recon_family(self) -> Family {
        if self.recon_degree() == 0 {
            Family::Rt0
        } else {
            Family::Rt1
        }
    }

    pub fn pressure_family(self) -> Family {
        match self {
            ElementPair::Br1P0 | ElementPair::P2P0 => Family::P0,
            ElementPair::CcrP1dg => Family::P1dg,
        }
    }

    pub fn velocity_local(self) -> usize {
        match self {
            ElementPair::Br1P0 => 9,
            ElementPair::P2P0 => 12,
            ElementPair::CcrP1dg => 14,
        }
    }

    pub fn recon_local(self) -> usize {
        self.recon_family().dof_count()
    }

    pub fn pressure_local(self) -> usize {
        self.pressure_family().dof_count()
    }

    pub fn tag(self) -> &'static str {
        match self {
            ElementPair::Br1P0 => "br1",
            ElementPair::P2P0 => "p2p0",
            ElementPair::CcrP1dg => "ccr",
        }
    }
}

impl fmt::Display for ElementPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ElementPair {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "br1" | "br1_p0" => Ok(ElementPair::Br1P0),
            "p2p0" | "p2_p0" => Ok(ElementPair::P2P0),
            "ccr" | "ccr_p1dg" => Ok(ElementPair::CcrP1dg),
            other => Err(format!("unknown element `{other}` (expected br1, p2p0 or ccr)")),
        }
    }
}

/// Which block of the global unknown a field lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Recon,
    Pressure,
}

/// DOF numbering for one mesh level. The global unknown is blocked as
/// `[velocity | reconstruction | pressure | multiplier]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub pair: ElementPair,
    pub n_velocity: usize,
    pub n_recon: usize,
    pub n_pressure: usize,
    velocity_cells: Vec<usize>,
    recon_cells: Vec<usize>,
    recon_signs: Vec<f64>,
    pressure_cells: Vec<usize>,
    /// Sorted velocity DOFs supported on the boundary.
    pub dirichlet: Vec<usize>,
    pub is_dirichlet: Vec<bool>,
}

impl DofMap {
    pub fn build(mesh: &Mesh, pair: ElementPair) -> DofMap {
        let (nv, ne, nt) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_triangles());
        let topo = &mesh.topology;
        let n_velocity = match pair {
            ElementPair::Br1P0 => 2 * nv + ne,
            ElementPair::P2P0 => 2 * (nv + ne),
            ElementPair::CcrP1dg => 2 * (nv + ne) + 2 * nt,
        };
        let n_recon = if pair.recon_degree() == 0 { ne } else { 2 * ne + 2 * nt };
        let n_pressure = nt * pair.pressure_local();

        let mut velocity_cells = Vec::with_capacity(nt * pair.velocity_local());
        let mut recon_cells = Vec::with_capacity(nt * pair.recon_local());
        let mut recon_signs = Vec::with_capacity(nt * pair.recon_local());
        let mut pressure_cells = Vec::with_capacity(n_pressure);
        for (k, tri) in mesh.triangles.iter().enumerate() {
            let edges = topo.triangle_edges[k];
            match pair {
                ElementPair::Br1P0 => {
                    for v in tri {
                        velocity_cells.extend([2 * v, 2 * v + 1]);
                    }
                    velocity_cells.extend(edges.iter().map(|e| 2 * nv + e));
                }
                ElementPair::P2P0 | ElementPair::CcrP1dg => {
                    let mut nodes: Vec<usize> = tri.to_vec();
                    nodes.extend(edges.iter().map(|e| nv + e));
                    if pair == ElementPair::CcrP1dg {
                        nodes.push(nv + ne + k);
                    }
                    for n in nodes {
                        velocity_cells.extend([2 * n, 2 * n + 1]);
                    }
                }
            }
            let signs = topo.edge_signs[k];
            if pair.recon_degree() == 0 {
                recon_cells.extend(edges);
                recon_signs.extend(signs);
            } else {
                for i in 0..3 {
                    let e = &topo.edges[edges[i]];
                    for j in 0..2 {
                        let gv = tri[(i + 1 + j) % 3];
                        recon_cells.push(2 * edges[i] + usize::from(gv != e.vertices[0]));
                        recon_signs.push(signs[i]);
                    }
                }
                recon_cells.extend([2 * ne + 2 * k, 2 * ne + 2 * k + 1]);
                recon_signs.extend([1.0, 1.0]);
            }
            let np = pair.pressure_local();
            pressure_cells.extend((0..np).map(|a| np * k + a));
        }

        let mut is_dirichlet = vec![false; n_velocity];
        for &v in &topo.boundary_vertices {
            match pair {
                ElementPair::Br1P0 | ElementPair::P2P0 | ElementPair::CcrP1dg => {
                    is_dirichlet[2 * v] = true;
                    is_dirichlet[2 * v + 1] = true;
                }
            }
        }
        for &e in &topo.boundary_edges {
            match pair {
                ElementPair::Br1P0 => is_dirichlet[2 * nv + e] = true,
                ElementPair::P2P0 | ElementPair::CcrP1dg => {
                    is_dirichlet[2 * (nv + e)] = true;
                    is_dirichlet[2 * (nv + e) + 1] = true;
                }
            }
        }
        let dirichlet = (0..n_velocity).filter(|&i| is_dirichlet[i]).collect();
        DofMap {
            pair,
            n_velocity,
            n_recon,
            n_pressure,
            velocity_cells,
            recon_cells,
            recon_signs,
            pressure_cells,
            dirichlet,
            is_dirichlet,
        }
    }

    pub fn recon_offset(&self) -> usize {
        self.n_velocity
    }

    pub fn pressure_offset(&self) -> usize {
        self.n_velocity + self.n_recon
    }

    pub fn multiplier_index(&self) -> usize {
        self.n_velocity + self.n_recon + self.n_pressure
    }

    /// Total size of the augmented system.
    pub fn total(&self) -> usize {
        self.multiplier_index() + 1
    }

    pub fn velocity_dofs(&self, k: usize) -> &[usize] {
        let n = self.pair.velocity_local();
        &self.velocity_cells[n * k..n * (k + 1)]
    }

    pub fn recon_dofs(&self, k: usize) -> &[usize] {
        let n = self.pair.recon_local();
        &self.recon_cells[n * k..n * (k + 1)]
    }

    pub fn recon_signs(&self, k: usize) -> &[f64] {
        let n = self.pair.recon_local();
        &self.recon_signs[n * k..n * (k + 1)]
    }

    pub fn pressure_dofs(&self, k: usize) -> &[usize] {
        let n = self.pair.pressure_local();
        &self.pressure_cells[n * k..n * (k + 1)]
    }

    pub fn len(&self, kind: FieldKind) -> usize {
        match kind {
            FieldKind::Velocity => self.n_velocity,
            FieldKind::Recon => self.n_recon,
            FieldKind::Pressure => self.n_pressure,
        }
    }
}

/// Element pair, reconstruction space and DOF maps on one mesh level.
#[derive(Clone, Debug)]
pub struct FeSystem {
    pub mesh: Mesh,
    pub pair: ElementPair,
    pub dofs: DofMap,
}

/// Coefficient vector of one field.
#[derive(Clone, Debug, PartialEq)]
pub struct FeField {
    pub kind: FieldKind,
    pub coeffs: Vec<f64>,
}

/// Point value of a field with its first-order derivative information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldValue {
    Velocity { value: [f64; 2], grad: Tensor2 },
    Recon { value: [f64; 2], div: f64 },
    Pressure { value: f64 },
}

/// Physical basis functions of one cell.
#[derive(Clone, Debug)]
pub struct CellBasis {
    pub pair: ElementPair,
    pub map: AffineMap,
    pub grad_lambda: [[f64; 2]; 3],
    normals: [[f64; 2]; 3],
    signs: [f64; 3],
}

impl CellBasis {
    pub fn new(sys: &FeSystem, k: usize) -> CellBasis {
        let map = AffineMap::for_cell(&sys.mesh, k);
        let topo = &sys.mesh.topology;
        let normals = topo.triangle_edges[k].map(|e| topo.edges[e].normal);
        CellBasis { pair: sys.pair, map, grad_lambda: map.grad_lambda(), normals, signs: topo.edge_signs[k] }
    }

    /// Velocity shape functions at barycentric point `l`; `grads[j][a][b] = d_b phi_j,a`.
    pub fn velocity(&self, l: [f64; 3], vals: &mut [[f64; 2]], grads: &mut [Tensor2]) {
        let mut sv = [0.0; 7];
        let mut sg = [[0.0; 2]; 7];
        let g = &self.grad_lambda;
        let mut push_lagrange = |n_nodes: usize, sv: &[f64], sg: &[[f64; 2]]| {
            for n in 0..n_nodes {
                for c in 0..2 {
                    let mut v = [0.0; 2];
                    v[c] = sv[n];
                    let mut t = Tensor2::ZERO;
                    t.0[c] = sg[n];
                    vals[2 * n + c] = v;
                    grads[2 * n + c] = t;
                }
            }
        };
        match self.pair {
            ElementPair::Br1P0 => {
                scalar_basis(Family::P1, l, g, &mut sv, &mut sg);
                push_lagrange(3, &sv, &sg);
                scalar_basis(Family::EdgeBubbleNormal, l, g, &mut sv, &mut sg);
                for i in 0..3 {
                    let n = self.normals[i];
                    vals[6 + i] = [sv[i] * n[0], sv[i] * n[1]];
                    grads[6 + i] = Tensor2::outer(n, sg[i]);
                }
            }
            ElementPair::P2P0 => {
                scalar_basis(Family::P2, l, g, &mut sv, &mut sg);
                push_lagrange(6, &sv, &sg);
            }
            ElementPair::CcrP1dg => {
                scalar_basis(Family::P2, l, g, &mut sv, &mut sg);
                scalar_basis(Family::CellBubble, l, g, &mut sv[6..], &mut sg[6..]);
                push_lagrange(7, &sv, &sg);
            }
        }
    }

    /// Reconstruction shape functions (Piola-mapped, globally signed, dual to
    /// the physical DOF functionals) at barycentric point `l`.
    pub fn recon(&self, l: [f64; 3], vals: &mut [[f64; 2]], divs: &mut [f64]) {
        let k = self.pair.recon_degree();
        let n = self.pair.recon_local();
        let mut rv = [[0.0; 2]; 8];
        let mut rd = [0.0; 8];
        rt_basis_into(k, [l[1], l[2]], &mut rv, &mut rd);
        let per_edge = k + 1;
        for j in 0..3 * per_edge {
            let s = self.signs[j / per_edge];
            let (v, d) = self.map.piola(rv[j], rd[j]);
            vals[j] = [s * v[0], s * v[1]];
            divs[j] = s * d;
        }
        if k == 1 {
            // interior moments transform with J: combine with J^{-1}
            let (v6, d6) = self.map.piola(rv[6], rd[6]);
            let (v7, d7) = self.map.piola(rv[7], rd[7]);
            let inv = self.map.inv;
            for d in 0..2 {
                let (a, b) = (inv[0][d], inv[1][d]);
                vals[6 + d] = [a * v6[0] + b * v7[0], a * v6[1] + b * v7[1]];
                divs[6 + d] = a * d6 + b * d7;
            }
        }
        debug_assert_eq!(n, 3 * per_edge + 2 * k);
    }

    pub fn pressure(&self, l: [f64; 3], vals: &mut [f64]) {
        match self.pair.pressure_family() {
            Family::P0 => vals[0] = 1.0,
            _ => vals[..3].copy_from_slice(&l),
        }
    }
}

/// Basis values of one cell at every point of a quadrature rule.
#[derive(Clone, Debug, Default)]
pub struct CellTables {
    pub weights: Vec<f64>,
    pub points: Vec<Point>,
    pub nv: usize,
    pub nz: usize,
    pub nq: usize,
    pub v_val: Vec<[f64; 2]>,
    pub v_grad: Vec<Tensor2>,
    pub z_val: Vec<[f64; 2]>,
    pub z_div: Vec<f64>,
    pub q_val: Vec<f64>,
}

impl CellTables {
    pub fn build(sys: &FeSystem, k: usize, degree: usize) -> CellTables {
        let mut t = CellTables::default();
        t.fill(sys, k, degree);
        t
    }

    pub fn fill(&mut self, sys: &FeSystem, k: usize, degree: usize) {
        let rule = triangle_quadrature(degree).expect("quadrature degree in range");
        let basis = CellBasis::new(sys, k);
        let (nv, nz, nq) = (sys.pair.velocity_local(), sys.pair.recon_local(), sys.pair.pressure_local());
        let npts = rule.len();
        self.nv = nv;
        self.nz = nz;
        self.nq = nq;
        self.weights.clear();
        self.points.clear();
        self.v_val.resize(npts * nv, [0.0; 2]);
        self.v_grad.resize(npts * nv, Tensor2::ZERO);
        self.z_val.resize(npts * nz, [0.0; 2]);
        self.z_div.resize(npts * nz, 0.0);
        self.q_val.resize(npts * nq, 0.0);
        for (i, l) in rule.points.iter().enumerate() {
            self.weights.push(rule.weights[i] * basis.map.det);
            self.points.push(basis.map.map([l[1], l[2]]));
            basis.velocity(*l, &mut self.v_val[i * nv..(i + 1) * nv], &mut self.v_grad[i * nv..(i + 1) * nv]);
            basis.recon(*l, &mut self.z_val[i * nz..(i + 1) * nz], &mut self.z_div[i * nz..(i + 1) * nz]);
            basis.pressure(*l, &mut self.q_val[i * nq..(i + 1) * nq]);
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl FeSystem {
    pub fn new(mesh: Mesh, pair: ElementPair) -> FeSystem {
        let dofs = DofMap::build(&mesh, pair);
        FeSystem { mesh, pair, dofs }
    }

    pub fn zero_field(&self, kind: FieldKind) -> FeField {
        FeField { kind, coeffs: vec![0.0; self.dofs.len(kind)] }
    }

    /// Velocity value and gradient at a barycentric point of cell `k`.
    pub fn eval_velocity(&self, coeffs: &[f64], k: usize, l: [f64; 3]) -> ([f64; 2], Tensor2) {
        let basis = CellBasis::new(self, k);
        let mut vals = [[0.0; 2]; MAX_VELOCITY_LOCAL];
        let mut grads = [Tensor2::ZERO; MAX_VELOCITY_LOCAL];
        basis.velocity(l, &mut vals, &mut grads);
        let mut v = [0.0; 2];
        let mut g = Tensor2::ZERO;
        for (j, &dof) in self.dofs.velocity_dofs(k).iter().enumerate() {
            let c = coeffs[dof];
            v[0] += c * vals[j][0];
            v[1] += c * vals[j][1];
            g += c * grads[j];
        }
        (v, g)
    }

    pub fn eval_recon(&self, coeffs: &[f64], k: usize, l: [f64; 3]) -> ([f64; 2], f64) {
        let basis = CellBasis::new(self, k);
        let mut vals = [[0.0; 2]; MAX_RECON_LOCAL];
        let mut divs = [0.0; MAX_RECON_LOCAL];
        basis.recon(l, &mut vals, &mut divs);
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for (j, &dof) in self.dofs.recon_dofs(k).iter().enumerate() {
            let c = coeffs[dof];
            v[0] += c * vals[j][0];
            v[1] += c * vals[j][1];
            d += c * divs[j];
        }
        (v, d)
    }

    pub fn eval_pressure(&self, coeffs: &[f64], k: usize, l: [f64; 3]) -> f64 {
        let basis = CellBasis::new(self, k);
        let mut vals = [0.0; MAX_PRESSURE_LOCAL];
        basis.pressure(l, &mut vals);
        self.dofs.pressure_dofs(k).iter().enumerate().map(|(j, &dof)| coeffs[dof] * vals[j]).sum()
    }

    /// Evaluates `field` at reference point `x_hat` of cell `k`.
    pub fn eval_field(&self, field: &FeField, k: usize, x_hat: [f64; 2]) -> Result<FieldValue> {
        let expected = self.dofs.len(field.kind);
        if field.coeffs.len() != expected {
            return Err(Error::DimensionMismatch { what: "field coefficients", expected, found: field.coeffs.len() });
        }
        let l = [1.0 - x_hat[0] - x_hat[1], x_hat[0], x_hat[1]];
        Ok(match field.kind {
            FieldKind::Velocity => {
                let (value, grad) = self.eval_velocity(&field.coeffs, k, l);
                FieldValue::Velocity { value, grad }
            }
            FieldKind::Recon => {
                let (value, div) = self.eval_recon(&field.coeffs, k, l);
                FieldValue::Recon { value, div }
            }
            FieldKind::Pressure => FieldValue::Pressure { value: self.eval_pressure(&field.coeffs, k, l) },
        })
    }

    /// Canonical velocity interpolation. `f(k, x)` evaluates the target at a
    /// point `x` of cell `k` (the cell context lets piecewise fields from a
    /// coarser level be interpolated through the refinement lineage). With
    /// `boundary_only`, interior DOFs are left at zero.
    pub fn interpolate_velocity<F>(&self, f: F, boundary_only: bool) -> Vec<f64>
    where
        F: Fn(usize, Point) -> [f64; 2],
    {
        let mesh = &self.mesh;
        let topo = &mesh.topology;
        let mut out = vec![0.0; self.dofs.n_velocity];
        let mut done = vec![false; self.dofs.n_velocity];
        let eq = edge_quadrature(EDGE_DEGREE).expect("supported degree");
        for k in 0..mesh.triangles.len() {
            let p = mesh.triangle_points(k);
            let vertex_vals = [0, 1, 2].map(|i| f(k, p[i]));
            let dofs = self.dofs.velocity_dofs(k);
            for i in 0..3 {
                for c in 0..2 {
                    let d = dofs[2 * i + c];
                    if !done[d] && (!boundary_only || self.dofs.is_dirichlet[d]) {
                        out[d] = vertex_vals[i][c];
                        done[d] = true;
                    }
                }
            }
            let edges = topo.triangle_edges[k];
            let mut mid_vals = [[0.0; 2]; 3];
            for i in 0..3 {
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                let mid = [0.5 * (p[a][0] + p[b][0]), 0.5 * (p[a][1] + p[b][1])];
                mid_vals[i] = f(k, mid);
                match self.pair {
                    ElementPair::Br1P0 => {
                        let d = dofs[6 + i];
                        if done[d] || (boundary_only && !self.dofs.is_dirichlet[d]) {
                            continue;
                        }
                        let edge = &topo.edges[edges[i]];
                        let n = edge.normal;
                        let len = crate::mesh::dist(p[a], p[b]);
                        let mut flux = 0.0;
                        for (q, w) in eq.points.iter().zip(&eq.weights) {
                            let x = [q[0] * p[a][0] + q[1] * p[b][0], q[0] * p[a][1] + q[1] * p[b][1]];
                            let g = f(k, x);
                            flux += w * len * (g[0] * n[0] + g[1] * n[1]);
                        }
                        let lin = 0.5
                            * len
                            * ((vertex_vals[a][0] + vertex_vals[b][0]) * n[0]
                                + (vertex_vals[a][1] + vertex_vals[b][1]) * n[1]);
                        // int_F lambda_a lambda_b ds = |F| / 6
                        out[d] = (flux - lin) / (len / 6.0);
                        done[d] = true;
                    }
                    ElementPair::P2P0 | ElementPair::CcrP1dg => {
                        for c in 0..2 {
                            let d = dofs[2 * (3 + i) + c];
                            if !done[d] && (!boundary_only || self.dofs.is_dirichlet[d]) {
                                out[d] = mid_vals[i][c];
                                done[d] = true;
                            }
                        }
                    }
                }
            }
            if self.pair == ElementPair::CcrP1dg && !boundary_only {
                let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
                let fc = f(k, centroid);
                for c in 0..2 {
                    // P2 nodal interpolant at the centroid: -1/9 per vertex, 4/9 per midpoint
                    let p2: f64 = (0..3).map(|i| -vertex_vals[i][c] / 9.0 + 4.0 * mid_vals[i][c] / 9.0).sum();
                    out[dofs[12 + c]] = fc[c] - p2;
                }
            }
        }
        out
    }

    /// Canonical interpolation of boundary data `g` (interior DOFs zero).
    pub fn interpolate_boundary<G: Fn(Point) -> [f64; 2]>(&self, g: G) -> FeField {
        FeField { kind: FieldKind::Velocity, coeffs: self.interpolate_velocity(|_, x| g(x), true) }
    }

    /// Pressure interpolation: cell means for `P0`, vertex values for `P1dg`.
    pub fn interpolate_pressure<F: Fn(usize, Point) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs.n_pressure];
        let rule = triangle_quadrature(LINEAR_DEGREE).expect("supported degree");
        for k in 0..self.mesh.num_triangles() {
            let dofs = self.dofs.pressure_dofs(k);
            let p = self.mesh.triangle_points(k);
            match self.pair.pressure_family() {
                Family::P0 => {
                    let map = AffineMap::for_cell(&self.mesh, k);
                    let mean: f64 =
                        (0..rule.len()).map(|i| 2.0 * rule.weights[i] * f(k, map.map(rule.reference_point(i)))).sum();
                    out[dofs[0]] = mean;
                }
                _ => {
                    for a in 0..3 {
                        out[dofs[a]] = f(k, p[a]);
                    }
                }
            }
        }
        out
    }

    /// Fortin interpolation of a discrete velocity into the RT space: edge
    /// moments of the normal component (and interior means for RT1).
    pub fn reconstruct(&self, velocity: &[f64]) -> Vec<f64> {
        let mesh = &self.mesh;
        let topo = &mesh.topology;
        let k_rt = self.pair.recon_degree();
        let mut out = vec![0.0; self.dofs.n_recon];
        let eq = edge_quadrature(EDGE_DEGREE).expect("supported degree");
        for (e, edge) in topo.edges.iter().enumerate() {
            let k = edge.triangles[0].expect("every edge has a triangle");
            let tri = mesh.triangles[k];
            let i = (0..3).find(|&i| topo.triangle_edges[k][i] == e).expect("edge belongs to its triangle");
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            let len = crate::mesh::dist(mesh.vertices[tri[a]], mesh.vertices[tri[b]]);
            let n = edge.normal;
            let mut m = [0.0; 2];
            let mut flux = 0.0;
            for (q, w) in eq.points.iter().zip(&eq.weights) {
                let mut l = [0.0; 3];
                l[a] = q[0];
                l[b] = q[1];
                let (v, _) = self.eval_velocity(velocity, k, l);
                let vn = w * len * (v[0] * n[0] + v[1] * n[1]);
                flux += vn;
                // moments against the barycentric coordinate of each endpoint
                let lo_is_a = tri[a] == edge.vertices[0];
                m[0] += vn * if lo_is_a { l[a] } else { l[b] };
                m[1] += vn * if lo_is_a { l[b] } else { l[a] };
            }
            if k_rt == 0 {
                out[e] = flux;
            } else {
                out[2 * e] = m[0];
                out[2 * e + 1] = m[1];
            }
        }
        if k_rt == 1 {
            let ne = mesh.num_edges();
            let rule = triangle_quadrature(LINEAR_DEGREE).expect("supported degree");
            for k in 0..mesh.num_triangles() {
                let det = AffineMap::for_cell(mesh, k).det;
                let mut m = [0.0; 2];
                for (i, l) in rule.points.iter().enumerate() {
                    let (v, _) = self.eval_velocity(velocity, k, *l);
                    m[0] += rule.weights[i] * det * v[0];
                    m[1] += rule.weights[i] * det * v[1];
                }
                out[2 * ne + 2 * k] = m[0];
                out[2 * ne + 2 * k + 1] = m[1];
            }
        }
        out
    }

    pub fn domain_area(&self) -> f64 {
        (0..self.mesh.num_triangles()).map(|k| self.mesh.area(k)).sum()
    }

    /// Mean divergence `(1/|Omega|) int div g_b^h dx` of a discrete velocity.
    pub fn compatible_divergence_datum(&self, g_b: &FeField) -> Result<f64> {
        if g_b.kind != FieldKind::Velocity || g_b.coeffs.len() != self.dofs.n_velocity {
            return Err(Error::DimensionMismatch {
                what: "boundary datum",
                expected: self.dofs.n_velocity,
                found: g_b.coeffs.len(),
            });
        }
        let rule = triangle_quadrature(LINEAR_DEGREE).expect("supported degree");
        let mut total = 0.0;
        for k in 0..self.mesh.num_triangles() {
            let det = AffineMap::for_cell(&self.mesh, k).det;
            for (i, l) in rule.points.iter().enumerate() {
                let (_, g) = self.eval_velocity(&g_b.coeffs, k, *l);
                total += rule.weights[i] * det * g.trace();
            }
        }
        Ok(total / self.domain_area())
    }
}
