//! Manufactured-solution convergence study: exact fields, error functionals,
//! experimental orders of convergence and theoretical rates.

use crate::assembly::{manufactured_rhs, Assembler, ConvectiveMode, ExactPoint, ProblemData, SystemState};
use crate::elements::quadrature::triangle_quadrature;
use crate::elements::{AffineMap, ERROR_DEGREE};
use crate::error::{Error, Result};
use crate::integrate::adaptive;
use crate::mesh::{Mesh, Point};
use crate::nfun::{map_f, FlowLaw, Tensor2};
use crate::solver::{continuation_drive, NewtonConfig, SolveStats};
use crate::spaces::{ElementPair, FeField, FeSystem, FieldKind};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Default exponent offset of the manufactured velocity.
pub const DEFAULT_BETA: f64 = 0.01;
/// Finest level reachable without the full-tables switch.
pub const CI_MAX_LEVEL: usize = 5;
pub const FULL_MAX_LEVEL: usize = 7;

/// `v = |x|^beta (-x2, x1)`, `q = |x|^gamma - mean` with
/// `gamma = 1 - 2/p' + beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedSolution {
    pub beta: f64,
    pub gamma: f64,
    pub p_conj: f64,
    pub q_mean: f64,
}

/// Exact fields at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactFields {
    pub v: [f64; 2],
    /// `grad[i][j] = d_j v_i`.
    pub grad: Tensor2,
    pub dv: Tensor2,
    pub q: f64,
}

impl ManufacturedSolution {
    pub fn new(p: f64, beta: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p must exceed 1, got {p}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        let p_conj = p / (p - 1.0);
        let gamma = 1.0 - 2.0 / p_conj + beta;
        Ok(ManufacturedSolution { beta, gamma, p_conj, q_mean: q_mean_constant(gamma)? })
    }

    /// Velocity, continuous up to the corner where it vanishes.
    pub fn velocity(&self, x: Point) -> [f64; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        let s = r2.powf(0.5 * self.beta);
        [-s * x[1], s * x[0]]
    }

    pub fn exact_fields(&self, x: Point) -> Result<ExactFields> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 || !r2.is_finite() {
            return Err(Error::Domain("exact fields are singular at the origin".into()));
        }
        let r = r2.sqrt();
        let rb = r.powf(self.beta);
        let w = [-x[1], x[0]];
        let v = [rb * w[0], rb * w[1]];
        let c = self.beta * rb / r2;
        let wx = Tensor2::outer(w, x);
        let grad = c * wx + rb * Tensor2::new(0.0, -1.0, 1.0, 0.0);
        let dv = (0.5 * c) * (wx + wx.transpose());
        let q = r.powf(self.gamma) - self.q_mean;
        Ok(ExactFields { v, grad, dv, q })
    }

    fn point(&self, x: Point) -> ExactPoint {
        let e = self.exact_fields(x).expect("quadrature points avoid the origin");
        ExactPoint { v: e.v, grad: e.grad, q: e.q }
    }
}

/// Mean of `|x|^gamma` over the unit square, by nested adaptive quadrature.
pub fn q_mean_constant(gamma: f64) -> Result<f64> {
    if !(gamma > -2.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must exceed -2, got {gamma}")));
    }
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache lock").get(&gamma.to_bits()) {
        return Ok(*v);
    }
    let inner = |x: f64| adaptive(|y| (x * x + y * y).powf(0.5 * gamma), 0.0, 1.0, 1e-13, 1e-14).unwrap_or(f64::NAN);
    let value = adaptive(inner, 0.0, 1.0, 1e-12, 1e-12)?;
    if !value.is_finite() {
        return Err(Error::Quadrature { achieved: f64::NAN });
    }
    cache.lock().expect("cache lock").insert(gamma.to_bits(), value);
    Ok(value)
}

fn error_rule() -> &'static crate::elements::QuadratureRule {
    triangle_quadrature(ERROR_DEGREE).expect("supported degree")
}

/// `|| F(D v_h) - F(D v) ||_2`.
pub fn error_f(sys: &FeSystem, law: &FlowLaw, v: &FeField, ms: &ManufacturedSolution) -> Result<f64> {
    error_f_with(sys, law, v, |x| ms.exact_fields(x).map(|e| e.grad), ERROR_DEGREE)
}

/// F-error against an arbitrary exact gradient at a chosen quadrature degree.
pub fn error_f_with<G: Fn(Point) -> Result<Tensor2>>(
    sys: &FeSystem,
    law: &FlowLaw,
    v: &FeField,
    exact_grad: G,
    degree: usize,
) -> Result<f64> {
    check_field(sys, v, FieldKind::Velocity)?;
    let rule = triangle_quadrature(degree)?;
    let mut total = 0.0;
    for k in 0..sys.mesh.num_triangles() {
        let map = AffineMap::for_cell(&sys.mesh, k);
        for (i, l) in rule.points.iter().enumerate() {
            let (_, gh) = sys.eval_velocity(&v.coeffs, k, *l);
            let g = exact_grad(map.map([l[1], l[2]]))?;
            let diff = map_f(law, &gh) - map_f(law, &g);
            total += rule.weights[i] * map.det * diff.ddot(&diff);
        }
    }
    Ok(total.sqrt())
}

fn check_field(sys: &FeSystem, f: &FeField, kind: FieldKind) -> Result<()> {
    if f.kind != kind || f.coeffs.len() != sys.dofs.len(kind) {
        return Err(Error::DimensionMismatch { what: "field", expected: sys.dofs.len(kind), found: f.coeffs.len() });
    }
    Ok(())
}

/// `|| (q_h - <q_h>) - (q - <q>) ||_s` for exponent `s >= 1`; both means are
/// taken with the same quadrature so that constants never contribute.
pub fn error_pressure(sys: &FeSystem, q_h: &FeField, exact_q: impl Fn(Point) -> Result<f64>, s: f64) -> Result<f64> {
    check_field(sys, q_h, FieldKind::Pressure)?;
    if !(s >= 1.0) {
        return Err(Error::Domain(format!("norm exponent must be at least 1, got {s}")));
    }
    let rule = error_rule();
    let nt = sys.mesh.num_triangles();
    let mut vals = Vec::with_capacity(nt * rule.len());
    let (mut mean_h, mut mean_e, mut area) = (0.0, 0.0, 0.0);
    for k in 0..nt {
        let map = AffineMap::for_cell(&sys.mesh, k);
        for (i, l) in rule.points.iter().enumerate() {
            let w = rule.weights[i] * map.det;
            let qh = sys.eval_pressure(&q_h.coeffs, k, *l);
            let qe = exact_q(map.map([l[1], l[2]]))?;
            mean_h += w * qh;
            mean_e += w * qe;
            area += w;
            vals.push((w, qh, qe));
        }
    }
    mean_h /= area;
    mean_e /= area;
    let sum: f64 = vals.iter().map(|(w, qh, qe)| w * ((qh - mean_h) - (qe - mean_e)).abs().powf(s)).sum();
    Ok(sum.powf(1.0 / s))
}

/// Experimental orders `log(e_{i+1}/e_i) / log(h_{i+1}/h_i)`.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::DimensionMismatch {
            what: "error/h sequences",
            expected: hs.len().max(2),
            found: errors.len(),
        });
    }
    if let Some(bad) = errors.iter().chain(hs).find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!("EOC needs positive finite entries, found {bad} (exact reproduction?)")));
    }
    Ok((0..errors.len() - 1).map(|i| (errors[i + 1] / errors[i]).ln() / (hs[i + 1] / hs[i]).ln()).collect())
}

/// Theoretical exponents for a given `p` in two dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateTable {
    pub p: f64,
    pub p_conj: f64,
    /// Sobolev exponent `2p/(2-p)`; `None` for `p >= 2`.
    pub p_star: Option<f64>,
    pub s: f64,
    pub r: f64,
    pub l: f64,
    pub velocity: f64,
    /// `2/p'`, stated for `p <= 2` only.
    pub pressure_lp: Option<f64>,
    pub pressure_l2: f64,
}

impl RateTable {
    pub fn new(p: f64) -> Result<RateTable> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p must exceed 1, got {p}")));
        }
        let p_conj = p / (p - 1.0);
        let p_star = (p < 2.0).then(|| 2.0 * p / (2.0 - p));
        // (p*/2)' = p / (2(p - 1)); for p >= 2 the conjugate of infinity is 1
        let half_conj = p_star.map_or(1.0, |ps| {
            let h = ps / 2.0;
            h / (h - 1.0)
        });
        let s = p.max(half_conj);
        Ok(RateTable {
            p,
            p_conj,
            p_star,
            s,
            r: p.min(2.0),
            l: 2f64.max(p).max(s),
            velocity: 1.0,
            pressure_lp: (p <= 2.0).then_some(2.0 / p_conj),
            pressure_l2: 1.0,
        })
    }
}

/// Configuration of one convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub law: FlowLaw,
    pub pair: ElementPair,
    pub mode: ConvectiveMode,
    /// Finest level; levels `0..=max_level` are solved.
    pub max_level: usize,
    pub beta: f64,
    pub newton: NewtonConfig,
    /// Allows levels beyond the CI default.
    pub full_tables: bool,
}

impl StudyConfig {
    pub fn new(law: FlowLaw, pair: ElementPair, mode: ConvectiveMode, max_level: usize) -> StudyConfig {
        StudyConfig {
            law,
            pair,
            mode,
            max_level,
            beta: DEFAULT_BETA,
            newton: NewtonConfig::default(),
            full_tables: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cap = if self.full_tables { FULL_MAX_LEVEL } else { CI_MAX_LEVEL };
        if self.max_level < 1 || self.max_level > cap {
            return Err(Error::Domain(format!(
                "levels must lie in 1..={cap}{}",
                if self.full_tables { "" } else { " (use the full-tables switch for more)" }
            )));
        }
        self.newton.validate()
    }
}

/// Results on one mesh level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub h: f64,
    pub ndof: usize,
    pub newton_iters: usize,
    pub e_f: f64,
    pub e_q_lp: f64,
    pub e_q_l2: f64,
    pub lambda: f64,
    pub q_integral: f64,
    pub rhs_max: f64,
    pub stats: SolveStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub levels: Vec<LevelReport>,
    /// `eoc_*[i]` compares levels `i` and `i + 1`; `None` when an error vanished.
    pub eoc_f: Vec<Option<f64>>,
    pub eoc_lp: Vec<Option<f64>>,
    pub eoc_l2: Vec<Option<f64>>,
    pub theory: RateTable,
}

fn pairwise_eoc(levels: &[LevelReport], f: impl Fn(&LevelReport) -> f64) -> Vec<Option<f64>> {
    levels.windows(2).map(|w| eoc(&[f(&w[0]), f(&w[1])], &[w[0].h, w[1].h]).ok().map(|v| v[0])).collect()
}

/// Prolongates a coarse solution to the child mesh: canonical interpolation
/// of the coarse fields evaluated through the refinement lineage, with the
/// fine boundary datum imposed.
pub fn prolongate(
    coarse: &FeSystem,
    x_coarse: &[f64],
    fine: &FeSystem,
    boundary: &FeField,
    mode: ConvectiveMode,
) -> Result<Vec<f64>> {
    let cs = SystemState::from_vector(coarse, x_coarse)?;
    let parent = |k: usize| -> Result<usize> {
        fine.mesh
            .parents
            .get(k)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Domain("fine mesh has no parent lineage".into()))
    };
    parent(0)?;
    let local = |k: usize, x: Point| {
        let pk = fine.mesh.parents[k].expect("checked lineage");
        let xh = AffineMap::for_cell(&coarse.mesh, pk).inverse_map(x);
        (pk, [1.0 - xh[0] - xh[1], xh[0], xh[1]])
    };
    let mut v = fine.interpolate_velocity(
        |k, x| {
            let (pk, l) = local(k, x);
            coarse.eval_velocity(&cs.v.coeffs, pk, l).0
        },
        false,
    );
    for &i in &fine.dofs.dirichlet {
        v[i] = boundary.coeffs[i];
    }
    let q = fine.interpolate_pressure(|k, x| {
        let (pk, l) = local(k, x);
        coarse.eval_pressure(&cs.q.coeffs, pk, l)
    });
    Ok(initial_vector(fine, v, q, mode))
}

fn initial_vector(sys: &FeSystem, v: Vec<f64>, q: Vec<f64>, mode: ConvectiveMode) -> Vec<f64> {
    let z = if mode == ConvectiveMode::Reconstruction { sys.reconstruct(&v) } else { vec![0.0; sys.dofs.n_recon] };
    SystemState {
        v: FeField { kind: FieldKind::Velocity, coeffs: v },
        z: FeField { kind: FieldKind::Recon, coeffs: z },
        q: FeField { kind: FieldKind::Pressure, coeffs: q },
        lambda: 0.0,
    }
    .to_vector()
}

/// Runs the study level by level, calling `observe` after each level.
pub fn run_study_with(config: &StudyConfig, mut observe: impl FnMut(&LevelReport)) -> Result<StudyReport> {
    config.validate()?;
    let ms = ManufacturedSolution::new(config.law.p, config.beta)?;
    let theory = RateTable::new(config.law.p)?;
    let mut levels = Vec::new();
    let mut mesh = Mesh::unit_square_initial();
    let mut previous: Option<(FeSystem, Vec<f64>)> = None;
    for level in 0..=config.max_level {
        if level > 0 {
            mesh = mesh.refine_red();
        }
        let wrap = |e: Error| Error::Level { level, source: Box::new(e) };
        let sys = FeSystem::new(mesh.clone(), config.pair);
        let boundary = sys.interpolate_boundary(|x| ms.velocity(x));
        let g1 = sys.compatible_divergence_datum(&boundary).map_err(wrap)?;
        let rhs = manufactured_rhs(&sys, &config.law, config.mode, |x| ms.point(x));
        let rhs_max =
            rhs.iter().enumerate().filter(|(i, _)| !sys.dofs.is_dirichlet[*i]).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        let data = ProblemData { boundary, g1, rhs };
        let asm = Assembler::new(&sys, config.mode);
        let initial = initial_vector(&sys, data.boundary.coeffs.clone(), vec![0.0; sys.dofs.n_pressure], config.mode);
        let hint = match &previous {
            Some((cs, cx)) => Some(prolongate(cs, cx, &sys, &data.boundary, config.mode).map_err(wrap)?),
            None => None,
        };
        let (x, stats) = continuation_drive(&asm, &config.law, &data, &config.newton, initial, hint).map_err(wrap)?;
        let state = SystemState::from_vector(&sys, &x).map_err(wrap)?;
        let e_f = error_f(&sys, &config.law, &state.v, &ms).map_err(wrap)?;
        let exact_q = |x: Point| ms.exact_fields(x).map(|e| e.q);
        let e_q_lp = error_pressure(&sys, &state.q, exact_q, ms.p_conj).map_err(wrap)?;
        let e_q_l2 = error_pressure(&sys, &state.q, exact_q, 2.0).map_err(wrap)?;
        let q_integral: f64 = asm.pressure_moments().iter().zip(&state.q.coeffs).map(|(m, q)| m * q).sum();
        let report = LevelReport {
            level,
            h: mesh.h,
            ndof: sys.dofs.total(),
            newton_iters: stats.total_iterations(),
            e_f,
            e_q_lp,
            e_q_l2,
            lambda: state.lambda,
            q_integral,
            rhs_max,
            stats,
        };
        observe(&report);
        levels.push(report);
        previous = Some((sys, x));
    }
    Ok(StudyReport {
        eoc_f: pairwise_eoc(&levels, |l| l.e_f),
        eoc_lp: pairwise_eoc(&levels, |l| l.e_q_lp),
        eoc_l2: pairwise_eoc(&levels, |l| l.e_q_l2),
        config: config.clone(),
        levels,
        theory,
    })
}

pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    run_study_with(config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_follows_formula() {
        let ms = ManufacturedSolution::new(1.1, 0.01).unwrap();
        assert!((ms.gamma - (1.0 - 2.0 / 11.0 + 0.01)).abs() < 1e-15);
        let ms = ManufacturedSolution::new(1.5, 0.01).unwrap();
        assert!((ms.gamma - 0.343333333333333).abs() < 1e-12);
    }

    #[test]
    fn exact_fields_at_unit_point() {
        let ms = ManufacturedSolution::new(1.5, 0.01).unwrap();
        let e = ms.exact_fields([1.0, 0.0]).unwrap();
        assert!((e.v[0]).abs() < 1e-15 && (e.v[1] - 1.0).abs() < 1e-15);
        let expect = Tensor2::new(0.0, 0.005, 0.005, 0.0);
        assert!((e.dv - expect).norm() < 1e-15);
        assert!(ms.exact_fields([0.0, 0.0]).is_err());
    }

    #[test]
    fn q_mean_simple_cases() {
        assert!((q_mean_constant(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((q_mean_constant(2.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(q_mean_constant(-2.5).is_err());
    }

    #[test]
    fn eoc_examples() {
        assert!((eoc(&[0.2, 0.1], &[0.5, 0.25]).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!((eoc(&[0.4, 0.1], &[0.5, 0.25]).unwrap()[0] - 2.0).abs() < 1e-14);
        assert!(eoc(&[0.4, 0.0], &[0.5, 0.25]).is_err());
        assert!(eoc(&[0.4], &[0.5]).is_err());
    }

    #[test]
    fn rate_table_values() {
        let t = RateTable::new(1.2).unwrap();
        assert!((t.pressure_lp.unwrap() - 1.0 / 3.0).abs() < 1e-14);
        let t = RateTable::new(1.1).unwrap();
        assert!((t.pressure_lp.unwrap() - 2.0 / 11.0).abs() < 1e-14);
        assert!((t.s - 1.1 / 0.2).abs() < 1e-12 && t.r == 1.1 && t.l == t.s);
        let t = RateTable::new(3.0).unwrap();
        assert!(t.p_star.is_none() && t.s == 3.0 && t.pressure_lp.is_none());
    }
}
