//! Residual and analytic Jacobian of the augmented discrete problem, the
//! manufactured forcing functional and the convective trilinear forms.
//!
//! Unknown layout: `[velocity | reconstruction | pressure | multiplier]`.
//! Row blocks:
//! * momentum rows tested with velocity basis functions (Dirichlet rows hold
//!   `v_i - g_i`),
//! * reconstruction rows `z_m - l_m(v)` where `l_m` are the RT moment
//!   functionals (identity rows when the reconstruction is unused),
//! * divergence rows `(div v - g1 + lambda, y)`,
//! * one gauge row `(q, 1)`.

use crate::elements::quadrature::{edge_quadrature, triangle_quadrature};
use crate::elements::{EDGE_DEGREE, LINEAR_DEGREE, NONLINEAR_DEGREE};
use crate::error::{Error, Result};
use crate::mesh::{dist, Point};
use crate::nfun::{stress, stress_and_tangent_coeffs, FlowLaw, Tensor2};
use crate::solver::{Ordering, Symbolic};
use crate::spaces::{CellBasis, CellTables, ElementPair, FeField, FeSystem, FieldKind, MAX_VELOCITY_LOCAL};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

mod sparse;
pub use sparse::SparseMatrix;

/// Treatment of the convective term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvectiveMode {
    /// `-(v (x) z, grad w)` with `z` the RT reconstruction unknown.
    Reconstruction,
    /// Skew-symmetrized form with the `g1` correction.
    Temam,
    /// Stokes-type problem without convection.
    None,
}

impl ConvectiveMode {
    pub fn tag(self) -> &'static str {
        match self {
            ConvectiveMode::Reconstruction => "reconstruction",
            ConvectiveMode::Temam => "temam",
            ConvectiveMode::None => "none",
        }
    }
}

impl fmt::Display for ConvectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ConvectiveMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "reconstruction" | "recon" => Ok(ConvectiveMode::Reconstruction),
            "temam" => Ok(ConvectiveMode::Temam),
            "none" => Ok(ConvectiveMode::None),
            other => Err(format!("unknown convective mode `{other}` (expected reconstruction, temam or none)")),
        }
    }
}

/// Discrete unknowns of the augmented problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub v: FeField,
    pub z: FeField,
    pub q: FeField,
    pub lambda: f64,
}

impl SystemState {
    pub fn zeros(sys: &FeSystem) -> SystemState {
        SystemState {
            v: sys.zero_field(FieldKind::Velocity),
            z: sys.zero_field(FieldKind::Recon),
            q: sys.zero_field(FieldKind::Pressure),
            lambda: 0.0,
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.v.coeffs.len() + self.z.coeffs.len() + self.q.coeffs.len() + 1);
        x.extend_from_slice(&self.v.coeffs);
        x.extend_from_slice(&self.z.coeffs);
        x.extend_from_slice(&self.q.coeffs);
        x.push(self.lambda);
        x
    }

    pub fn from_vector(sys: &FeSystem, x: &[f64]) -> Result<SystemState> {
        let d = &sys.dofs;
        check_len("state vector", d.total(), x.len())?;
        let (a, b, c) = (d.recon_offset(), d.pressure_offset(), d.multiplier_index());
        Ok(SystemState {
            v: FeField { kind: FieldKind::Velocity, coeffs: x[..a].to_vec() },
            z: FeField { kind: FieldKind::Recon, coeffs: x[a..b].to_vec() },
            q: FeField { kind: FieldKind::Pressure, coeffs: x[b..c].to_vec() },
            lambda: x[c],
        })
    }

    fn check(&self, sys: &FeSystem) -> Result<()> {
        check_len("velocity coefficients", sys.dofs.n_velocity, self.v.coeffs.len())?;
        check_len("reconstruction coefficients", sys.dofs.n_recon, self.z.coeffs.len())?;
        check_len("pressure coefficients", sys.dofs.n_pressure, self.q.coeffs.len())
    }
}

/// Data of one discrete problem: boundary interpolant, divergence datum and
/// the momentum forcing functional.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemData {
    pub boundary: FeField,
    pub g1: f64,
    /// `L(w_i)` for every velocity basis function (Dirichlet entries ignored).
    pub rhs: Vec<f64>,
}

impl ProblemData {
    pub fn homogeneous(sys: &FeSystem) -> ProblemData {
        ProblemData { boundary: sys.zero_field(FieldKind::Velocity), g1: 0.0, rhs: vec![0.0; sys.dofs.n_velocity] }
    }

    fn check(&self, sys: &FeSystem) -> Result<()> {
        check_len("boundary coefficients", sys.dofs.n_velocity, self.boundary.coeffs.len())?;
        check_len("forcing functional", sys.dofs.n_velocity, self.rhs.len())
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}

/// Thread pool for element loops, capped by `NSFEM_THREADS` when set.
pub fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("NSFEM_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).unwrap_or(0);
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
    })
}

const NONE_POS: u32 = u32::MAX;
const BATCH: usize = 256;

/// Assembly context for one `(mesh, pair, mode)`: holds the fixed sparsity
/// pattern and the scatter maps.
#[derive(Clone, Debug)]
pub struct Assembler<'a> {
    pub sys: &'a FeSystem,
    pub mode: ConvectiveMode,
    pattern: SparseMatrix,
    n_loc: usize,
    cell_pos: Vec<u32>,
    /// Local reconstruction rows each cell contributes to (`true` = owned).
    owned_recon: Vec<bool>,
    /// `int_K y_a dx` for every pressure basis function.
    pressure_moments: Vec<f64>,
    dirichlet_pos: Vec<usize>,
    recon_diag_pos: Vec<usize>,
    lambda_col_pos: Vec<usize>,
    gauge_row_pos: Vec<usize>,
    symbolic: OnceLock<Symbolic>,
}

impl<'a> Assembler<'a> {
    pub fn new(sys: &'a FeSystem, mode: ConvectiveMode) -> Assembler<'a> {
        let d = &sys.dofs;
        let pair = sys.pair;
        let (nv, nz, nq) = (pair.velocity_local(), pair.recon_local(), pair.pressure_local());
        let n_loc = nv + nz + nq;
        let nt = sys.mesh.num_triangles();
        let recon_active = mode == ConvectiveMode::Reconstruction;
        let topo = &sys.mesh.topology;

        let mut owned_recon = vec![false; nt * nz];
        for k in 0..nt {
            for i in 0..3 {
                let owner = topo.edges[topo.triangle_edges[k][i]].triangles[0] == Some(k);
                let per_edge = pair.recon_degree() + 1;
                for j in 0..per_edge {
                    owned_recon[k * nz + i * per_edge + j] = owner;
                }
            }
            for m in 3 * (pair.recon_degree() + 1)..nz {
                owned_recon[k * nz + m] = true;
            }
        }

        let n = d.total();
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        let globals = |k: usize| -> Vec<usize> {
            let mut g = Vec::with_capacity(n_loc);
            g.extend_from_slice(d.velocity_dofs(k));
            g.extend(d.recon_dofs(k).iter().map(|&m| m + d.recon_offset()));
            g.extend(d.pressure_dofs(k).iter().map(|&a| a + d.pressure_offset()));
            g
        };
        let local_coupled = |k: usize, r: usize, c: usize, owned: &[bool]| -> bool {
            let kind = |i: usize| {
                if i < nv {
                    0
                } else if i < nv + nz {
                    1
                } else {
                    2
                }
            };
            match (kind(r), kind(c)) {
                (0, 0) | (0, 2) => true,
                (0, 1) => recon_active,
                (1, 0) => recon_active && owned[k * nz + (r - nv)],
                (2, 0) => true,
                _ => false,
            }
        };
        for k in 0..nt {
            let g = globals(k);
            for r in 0..n_loc {
                if r < nv && d.is_dirichlet[g[r]] {
                    continue;
                }
                for c in 0..n_loc {
                    if local_coupled(k, r, c, &owned_recon) {
                        rows[g[r]].push(g[c] as u32);
                    }
                }
            }
        }
        for &i in &d.dirichlet {
            rows[i].push(i as u32);
        }
        for m in 0..d.n_recon {
            let i = m + d.recon_offset();
            rows[i].push(i as u32);
        }
        let lam = d.multiplier_index();
        for a in 0..d.n_pressure {
            rows[a + d.pressure_offset()].push(lam as u32);
            rows[lam].push((a + d.pressure_offset()) as u32);
        }
        let pattern = SparseMatrix::from_rows(n, rows);

        let mut cell_pos = vec![NONE_POS; nt * n_loc * n_loc];
        for k in 0..nt {
            let g = globals(k);
            for r in 0..n_loc {
                if r < nv && d.is_dirichlet[g[r]] {
                    continue;
                }
                for c in 0..n_loc {
                    if local_coupled(k, r, c, &owned_recon) {
                        let pos = pattern.position(g[r], g[c]).expect("pattern entry");
                        cell_pos[(k * n_loc + r) * n_loc + c] = pos as u32;
                    }
                }
            }
        }
        let pos = |i: usize, j: usize| pattern.position(i, j).expect("pattern entry");
        let dirichlet_pos = d.dirichlet.iter().map(|&i| pos(i, i)).collect();
        let recon_diag_pos = (0..d.n_recon).map(|m| pos(m + d.recon_offset(), m + d.recon_offset())).collect();
        let lambda_col_pos = (0..d.n_pressure).map(|a| pos(a + d.pressure_offset(), lam)).collect();
        let gauge_row_pos = (0..d.n_pressure).map(|a| pos(lam, a + d.pressure_offset())).collect();

        let mut pressure_moments = vec![0.0; d.n_pressure];
        let rule = triangle_quadrature(LINEAR_DEGREE).expect("supported degree");
        let mut vals = [0.0; 3];
        for k in 0..nt {
            let basis = CellBasis::new(sys, k);
            for (i, l) in rule.points.iter().enumerate() {
                basis.pressure(*l, &mut vals);
                for (a, &dof) in d.pressure_dofs(k).iter().enumerate() {
                    pressure_moments[dof] += rule.weights[i] * basis.map.det * vals[a];
                }
            }
        }

        Assembler {
            sys,
            mode,
            pattern,
            n_loc,
            cell_pos,
            owned_recon,
            pressure_moments,
            dirichlet_pos,
            recon_diag_pos,
            lambda_col_pos,
            gauge_row_pos,
            symbolic: OnceLock::new(),
        }
    }

    /// A representative location for every unknown (entity midpoints and
    /// centroids); the multiplier gets NaN.
    pub fn dof_coordinates(&self) -> Vec<[f64; 2]> {
        let sys = self.sys;
        let d = &sys.dofs;
        let pair = sys.pair;
        let mut c = vec![[f64::NAN; 2]; d.total()];
        for k in 0..sys.mesh.num_triangles() {
            let p = sys.mesh.triangle_points(k);
            let mid = |i: usize| {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            };
            let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            for (j, &g) in d.velocity_dofs(k).iter().enumerate() {
                c[g] = match pair {
                    ElementPair::Br1P0 if j < 6 => p[j / 2],
                    ElementPair::Br1P0 => mid(j - 6),
                    _ if j < 6 => p[j / 2],
                    _ if j < 12 => mid(j / 2 - 3),
                    _ => centroid,
                };
            }
            let per_edge = pair.recon_degree() + 1;
            for (m, &g) in d.recon_dofs(k).iter().enumerate() {
                c[g + d.recon_offset()] = if m < 3 * per_edge { mid(m / per_edge) } else { centroid };
            }
            for &g in d.pressure_dofs(k) {
                c[g + d.pressure_offset()] = centroid;
            }
        }
        c
    }

    /// Fill-reducing ordering and symbolic factorization of the Jacobian
    /// pattern, computed once.
    pub fn symbolic(&self) -> &Symbolic {
        self.symbolic.get_or_init(|| {
            let a = self.pattern_with_unit_diagonals();
            Symbolic::analyze(&a, &Ordering::compute(&a, Some(&self.dof_coordinates())))
        })
    }

    /// Pattern with the structurally constant diagonals set, so that the
    /// ordering can tell zero-diagonal rows apart.
    fn pattern_with_unit_diagonals(&self) -> SparseMatrix {
        let mut a = self.pattern.clone();
        let n = a.dim();
        for i in 0..n {
            if let Some(p) = a.position(i, i) {
                a.values_mut()[p] = 1.0;
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.sys.dofs.total()
    }

    /// The fixed sparsity pattern (all values zero).
    pub fn pattern(&self) -> &SparseMatrix {
        &self.pattern
    }

    pub fn pressure_moments(&self) -> &[f64] {
        &self.pressure_moments
    }

    fn check(&self, x: &[f64], data: &ProblemData) -> Result<()> {
        check_len("state vector", self.dim(), x.len())?;
        data.check(self.sys)
    }

    fn local_globals(&self, k: usize, out: &mut Vec<usize>) {
        let d = &self.sys.dofs;
        out.clear();
        out.extend_from_slice(d.velocity_dofs(k));
        out.extend(d.recon_dofs(k).iter().map(|&m| m + d.recon_offset()));
        out.extend(d.pressure_dofs(k).iter().map(|&a| a + d.pressure_offset()));
    }

    fn run_cells<T: Send>(&self, f: impl Fn(usize, &mut Scratch) -> T + Sync, mut sink: impl FnMut(usize, T)) {
        let nt = self.sys.mesh.num_triangles();
        let pool = thread_pool();
        let mut start = 0;
        while start < nt {
            let end = (start + BATCH).min(nt);
            let out: Vec<T> =
                pool.install(|| (start..end).into_par_iter().map_init(Scratch::default, |s, k| f(k, s)).collect());
            for (off, item) in out.into_iter().enumerate() {
                sink(start + off, item);
            }
            start = end;
        }
    }

    /// Residual of the augmented system at `x`.
    pub fn residual(&self, law: &FlowLaw, x: &[f64], data: &ProblemData) -> Result<Vec<f64>> {
        self.check(x, data)?;
        let d = &self.sys.dofs;
        let n = self.dim();
        let nv = self.sys.pair.velocity_local();
        let nz = self.sys.pair.recon_local();
        let mut r = vec![0.0; n];
        let mut g = Vec::new();
        self.run_cells(
            |k, s| {
                self.element(k, s, law, x, data.g1, false);
                s.res.clone()
            },
            |k, res| {
                self.local_globals(k, &mut g);
                for (i, &gi) in g.iter().enumerate() {
                    let keep = if i < nv {
                        !d.is_dirichlet[gi]
                    } else if i < nv + nz {
                        self.mode == ConvectiveMode::Reconstruction && self.owned_recon[k * nz + i - nv]
                    } else {
                        true
                    };
                    if keep {
                        r[gi] += res[i];
                    }
                }
            },
        );
        for i in 0..d.n_velocity {
            if d.is_dirichlet[i] {
                r[i] = x[i] - data.boundary.coeffs[i];
            } else {
                r[i] -= data.rhs[i];
            }
        }
        for m in 0..d.n_recon {
            let i = m + d.recon_offset();
            r[i] += x[i];
        }
        let lam = x[d.multiplier_index()];
        let mut gauge = 0.0;
        for a in 0..d.n_pressure {
            let i = a + d.pressure_offset();
            r[i] += self.pressure_moments[a] * (lam - data.g1);
            gauge += self.pressure_moments[a] * x[i];
        }
        r[d.multiplier_index()] = gauge;
        Ok(r)
    }

    /// Exact Jacobian of [`Assembler::residual`] at `x`.
    pub fn jacobian(&self, law: &FlowLaw, x: &[f64], data: &ProblemData) -> Result<SparseMatrix> {
        self.check(x, data)?;
        let mut a = self.pattern.clone();
        let n_loc = self.n_loc;
        self.run_cells(
            |k, s| {
                self.element(k, s, law, x, data.g1, true);
                s.mat.clone()
            },
            |k, mat| {
                let pos = &self.cell_pos[k * n_loc * n_loc..(k + 1) * n_loc * n_loc];
                let vals = a.values_mut();
                for (p, m) in pos.iter().zip(&mat) {
                    if *p != NONE_POS {
                        vals[*p as usize] += m;
                    }
                }
            },
        );
        let vals = a.values_mut();
        for &p in self.dirichlet_pos.iter().chain(&self.recon_diag_pos) {
            vals[p] = 1.0;
        }
        for (i, m) in self.pressure_moments.iter().enumerate() {
            vals[self.lambda_col_pos[i]] = *m;
            vals[self.gauge_row_pos[i]] = *m;
        }
        Ok(a)
    }

    /// Local residual (and optionally the local Jacobian) of cell `k`,
    /// without forcing, Dirichlet, identity, multiplier or gauge terms.
    fn element(&self, k: usize, s: &mut Scratch, law: &FlowLaw, x: &[f64], g1: f64, want_mat: bool) {
        let sys = self.sys;
        let d = &sys.dofs;
        let pair = sys.pair;
        let (nv, nz, nq) = (pair.velocity_local(), pair.recon_local(), pair.pressure_local());
        let n_loc = self.n_loc;
        let recon = self.mode == ConvectiveMode::Reconstruction;
        let temam = self.mode == ConvectiveMode::Temam;

        s.tab.fill(sys, k, NONLINEAR_DEGREE);
        s.res.clear();
        s.res.resize(n_loc, 0.0);
        if want_mat {
            s.mat.clear();
            s.mat.resize(n_loc * n_loc, 0.0);
        }
        let vc: Vec<f64> = d.velocity_dofs(k).iter().map(|&i| x[i]).collect();
        let zc: Vec<f64> = d.recon_dofs(k).iter().map(|&m| x[m + d.recon_offset()]).collect();
        let qc: Vec<f64> = d.pressure_dofs(k).iter().map(|&a| x[a + d.pressure_offset()]).collect();
        let tab = &s.tab;
        let (res, mat) = (&mut s.res, &mut s.mat);
        let mut sym_grads = [Tensor2::ZERO; MAX_VELOCITY_LOCAL];

        for qp in 0..tab.len() {
            let w = tab.weights[qp];
            let vv = &tab.v_val[qp * nv..(qp + 1) * nv];
            let vg = &tab.v_grad[qp * nv..(qp + 1) * nv];
            let zv = &tab.z_val[qp * nz..(qp + 1) * nz];
            let qv = &tab.q_val[qp * nq..(qp + 1) * nq];
            let mut v = [0.0; 2];
            let mut grad = Tensor2::ZERO;
            for j in 0..nv {
                v[0] += vc[j] * vv[j][0];
                v[1] += vc[j] * vv[j][1];
                grad += vc[j] * vg[j];
            }
            let mut z = [0.0; 2];
            if recon {
                for m in 0..nz {
                    z[0] += zc[m] * zv[m][0];
                    z[1] += zc[m] * zv[m][1];
                }
            }
            let q: f64 = (0..nq).map(|a| qc[a] * qv[a]).sum();
            let div_v = grad.trace();
            let (sigma, c1, c2, dir) = stress_and_tangent_coeffs(law, &grad);
            let gv = grad.apply(v);

            for i in 0..nv {
                let gi = &vg[i];
                let mut val = sigma.ddot(gi) - q * gi.trace();
                if recon {
                    val -= dot(v, gi.apply(z));
                } else if temam {
                    val += 0.5 * dot(vv[i], gv) + 0.5 * g1 * dot(v, vv[i]) - 0.5 * dot(v, gi.apply(v));
                }
                res[i] += w * val;
            }
            for a in 0..nq {
                res[nv + nz + a] += w * qv[a] * div_v;
            }
            if recon && pair.recon_degree() == 1 {
                // interior moments l_m(v) = int_K v_d
                for dd in 0..2 {
                    res[nv + 6 + dd] -= w * v[dd];
                }
            }
            if !want_mat {
                continue;
            }

            for j in 0..nv {
                sym_grads[j] = vg[j].sym();
            }
            for j in 0..nv {
                let hs = sym_grads[j];
                let ds = c1 * hs + (c2 * dir.ddot(&hs)) * dir;
                let (phj, gj) = (vv[j], &vg[j]);
                let gj_v = gj.apply(v);
                let g_phj = grad.apply(phj);
                for i in 0..nv {
                    let gi = &vg[i];
                    let mut val = ds.ddot(&sym_grads[i]);
                    if recon {
                        val -= dot(phj, gi.apply(z));
                    } else if temam {
                        val += 0.5 * dot(vv[i], [gj_v[0] + g_phj[0], gj_v[1] + g_phj[1]]) + 0.5 * g1 * dot(phj, vv[i])
                            - 0.5 * (dot(phj, gi.apply(v)) + dot(v, gi.apply(phj)));
                    }
                    mat[i * n_loc + j] += w * val;
                }
                let dj = gj.trace();
                for a in 0..nq {
                    mat[(nv + nz + a) * n_loc + j] += w * qv[a] * dj;
                }
                if recon && pair.recon_degree() == 1 {
                    for dd in 0..2 {
                        mat[(nv + 6 + dd) * n_loc + j] -= w * phj[dd];
                    }
                }
            }
            for i in 0..nv {
                let di = vg[i].trace();
                for a in 0..nq {
                    mat[i * n_loc + nv + nz + a] -= w * qv[a] * di;
                }
                if recon {
                    for m in 0..nz {
                        mat[i * n_loc + nv + m] -= w * dot(v, vg[i].apply(zv[m]));
                    }
                }
            }
        }

        if recon {
            // edge moments of the velocity, assembled by the owning cell only
            let basis = CellBasis::new(sys, k);
            let topo = &sys.mesh.topology;
            let p = sys.mesh.triangle_points(k);
            let eq = edge_quadrature(EDGE_DEGREE).expect("supported degree");
            let per_edge = pair.recon_degree() + 1;
            let mut vals = [[0.0; 2]; MAX_VELOCITY_LOCAL];
            let mut grads = [Tensor2::ZERO; MAX_VELOCITY_LOCAL];
            for i in 0..3 {
                if !self.owned_recon[k * nz + i * per_edge] {
                    continue;
                }
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                let n = topo.edges[topo.triangle_edges[k][i]].normal;
                let len = dist(p[a], p[b]);
                for (qpt, wq) in eq.points.iter().zip(&eq.weights) {
                    let mut l = [0.0; 3];
                    l[a] = qpt[0];
                    l[b] = qpt[1];
                    basis.velocity(l, &mut vals, &mut grads);
                    for j in 0..nv {
                        let vn = wq * len * dot(vals[j], n);
                        for jj in 0..per_edge {
                            let weight = if per_edge == 1 { 1.0 } else { l[(i + 1 + jj) % 3] };
                            let row = nv + i * per_edge + jj;
                            res[row] -= vc[j] * vn * weight;
                            if want_mat {
                                mat[row * n_loc + j] -= vn * weight;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    tab: CellTables,
    res: Vec<f64>,
    mat: Vec<f64>,
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Residual of the augmented system for `state`.
pub fn assemble_residual(
    sys: &FeSystem,
    law: &FlowLaw,
    mode: ConvectiveMode,
    state: &SystemState,
    data: &ProblemData,
) -> Result<Vec<f64>> {
    state.check(sys)?;
    Assembler::new(sys, mode).residual(law, &state.to_vector(), data)
}

/// Jacobian of the augmented system at `state`.
pub fn assemble_jacobian(
    sys: &FeSystem,
    law: &FlowLaw,
    mode: ConvectiveMode,
    state: &SystemState,
    data: &ProblemData,
) -> Result<SparseMatrix> {
    state.check(sys)?;
    Assembler::new(sys, mode).jacobian(law, &state.to_vector(), data)
}

/// Pointwise exact fields used to build the forcing functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactPoint {
    pub v: [f64; 2],
    /// `grad[i][j] = d_j v_i`.
    pub grad: Tensor2,
    pub q: f64,
}

/// Weak forcing `L(w) = (S(Dv), Dw) - (v (x) v, grad w) - (q, div w)` for
/// every velocity basis function, at the nonlinear quadrature degree. The
/// convective term is left out in [`ConvectiveMode::None`], whose discrete
/// problem is the generalized Stokes system.
pub fn manufactured_rhs<F: Fn(Point) -> ExactPoint + Sync>(
    sys: &FeSystem,
    law: &FlowLaw,
    mode: ConvectiveMode,
    exact: F,
) -> Vec<f64> {
    manufactured_rhs_with_degree(sys, law, mode, exact, NONLINEAR_DEGREE).expect("supported degree")
}

pub fn manufactured_rhs_with_degree<F: Fn(Point) -> ExactPoint + Sync>(
    sys: &FeSystem,
    law: &FlowLaw,
    mode: ConvectiveMode,
    exact: F,
    degree: usize,
) -> Result<Vec<f64>> {
    let convect = if mode == ConvectiveMode::None { 0.0 } else { 1.0 };
    triangle_quadrature(degree)?;
    let nv = sys.pair.velocity_local();
    let nt = sys.mesh.num_triangles();
    let locals: Vec<Vec<f64>> = thread_pool().install(|| {
        (0..nt)
            .into_par_iter()
            .map(|k| {
                let tab = CellTables::build(sys, k, degree);
                let mut out = vec![0.0; nv];
                for qp in 0..tab.len() {
                    let e = exact(tab.points[qp]);
                    let s = stress(law, &e.grad);
                    let conv = convect * Tensor2::outer(e.v, e.v);
                    for (i, o) in out.iter_mut().enumerate() {
                        let g = &tab.v_grad[qp * nv + i];
                        *o += tab.weights[qp] * (s.ddot(g) - conv.ddot(g) - e.q * g.trace());
                    }
                }
                out
            })
            .collect()
    });
    let mut rhs = vec![0.0; sys.dofs.n_velocity];
    for (k, local) in locals.iter().enumerate() {
        for (i, &dof) in sys.dofs.velocity_dofs(k).iter().enumerate() {
            rhs[dof] += local[i];
        }
    }
    Ok(rhs)
}

fn integrate_cells(sys: &FeSystem, f: impl Fn(usize, &CellTables, usize) -> f64 + Sync) -> f64 {
    let nt = sys.mesh.num_triangles();
    let parts: Vec<f64> = thread_pool().install(|| {
        (0..nt)
            .into_par_iter()
            .map(|k| {
                let tab = CellTables::build(sys, k, NONLINEAR_DEGREE);
                (0..tab.len()).map(|qp| tab.weights[qp] * f(k, &tab, qp)).sum()
            })
            .collect()
    });
    parts.iter().sum()
}

fn velocity_at(sys: &FeSystem, tab: &CellTables, k: usize, qp: usize, c: &[f64]) -> ([f64; 2], Tensor2) {
    let nv = tab.nv;
    let mut v = [0.0; 2];
    let mut g = Tensor2::ZERO;
    for (j, &dof) in sys.dofs.velocity_dofs(k).iter().enumerate() {
        let val = tab.v_val[qp * nv + j];
        v[0] += c[dof] * val[0];
        v[1] += c[dof] * val[1];
        g += c[dof] * tab.v_grad[qp * nv + j];
    }
    (v, g)
}

fn field_check(sys: &FeSystem, f: &FeField, kind: FieldKind) -> Result<()> {
    if f.kind != kind {
        return Err(Error::Domain(format!("expected a {kind:?} field, found {:?}", f.kind)));
    }
    check_len("field coefficients", sys.dofs.len(kind), f.coeffs.len())
}

/// Temam's trilinear form
/// `b(u, v, w) = 1/2 (w, (u.grad) v) - 1/2 (v, (u.grad) w) + 1/2 g1 (u, w)`.
pub fn temam_form(sys: &FeSystem, u: &FeField, v: &FeField, w: &FeField, g1: f64) -> Result<f64> {
    for f in [u, v, w] {
        field_check(sys, f, FieldKind::Velocity)?;
    }
    Ok(integrate_cells(sys, |k, tab, qp| {
        let (uu, _) = velocity_at(sys, tab, k, qp, &u.coeffs);
        let (vv, gv) = velocity_at(sys, tab, k, qp, &v.coeffs);
        let (ww, gw) = velocity_at(sys, tab, k, qp, &w.coeffs);
        0.5 * dot(ww, gv.apply(uu)) - 0.5 * dot(vv, gw.apply(uu)) + 0.5 * g1 * dot(uu, ww)
    }))
}

/// Reconstruction-based convective form `-(v (x) z, grad w)` with the RT field `z`.
pub fn reconstruction_form(sys: &FeSystem, z: &FeField, v: &FeField, w: &FeField) -> Result<f64> {
    field_check(sys, z, FieldKind::Recon)?;
    field_check(sys, v, FieldKind::Velocity)?;
    field_check(sys, w, FieldKind::Velocity)?;
    let nz = sys.pair.recon_local();
    Ok(integrate_cells(sys, |k, tab, qp| {
        let (vv, _) = velocity_at(sys, tab, k, qp, &v.coeffs);
        let (_, gw) = velocity_at(sys, tab, k, qp, &w.coeffs);
        let mut zz = [0.0; 2];
        for (m, &dof) in sys.dofs.recon_dofs(k).iter().enumerate() {
            let val = tab.z_val[qp * nz + m];
            zz[0] += z.coeffs[dof] * val[0];
            zz[1] += z.coeffs[dof] * val[1];
        }
        -dot(vv, gw.apply(zz))
    }))
}
