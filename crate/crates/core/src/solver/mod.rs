//! Sparse direct solves and damped Newton iteration with continuation in the
//! power-law exponent.

mod lu;
mod multifrontal;
mod ordering;

pub use lu::{sparse_lu_solve, FillStats, LuFactors};
pub use multifrontal::Symbolic;
pub use ordering::Ordering;

use crate::assembly::{Assembler, ProblemData, SparseMatrix};
use crate::error::{Error, Result};
use crate::nfun::FlowLaw;
use lu::norm2;

/// A nonlinear system `R(x) = 0` with an exact Jacobian.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix>;
    /// Factorizes a Jacobian of this system; systems with a fixed pattern
    /// can reuse a cached symbolic analysis here.
    fn factor(&self, j: &SparseMatrix) -> Result<LuFactors> {
        LuFactors::factor(j)
    }
}

/// The augmented discrete flow problem at a fixed flow law.
pub struct FlowProblem<'a> {
    pub assembler: &'a Assembler<'a>,
    pub law: FlowLaw,
    pub data: &'a ProblemData,
}

impl NonlinearSystem for FlowProblem<'_> {
    fn dim(&self) -> usize {
        self.assembler.dim()
    }
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.assembler.residual(&self.law, x, self.data)
    }
    fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix> {
        self.assembler.jacobian(&self.law, x, self.data)
    }
    fn factor(&self, j: &SparseMatrix) -> Result<LuFactors> {
        LuFactors::factor_with(j, self.assembler.symbolic())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub max_iters: usize,
    pub max_halvings: usize,
    /// Decrement of the continuation sequence in `p`.
    pub continuation_step: f64,
    /// Stream one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { abs_tol: 1e-8, max_iters: 50, max_halvings: 10, continuation_step: 0.1, verbose: false }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.continuation_step > 0.0) || self.max_iters == 0 {
            return Err(Error::Domain("Newton tolerance, step and iteration cap must be positive".into()));
        }
        Ok(())
    }

    /// `2.0, 2.0 - step, ...` strictly above `target`, then `target`;
    /// just `[target]` when `target >= 2`.
    pub fn continuation(&self, target: f64) -> Vec<f64> {
        if target >= 2.0 {
            return vec![target];
        }
        let mut out = Vec::new();
        let mut i = 0;
        loop {
            let p = 2.0 - i as f64 * self.continuation_step;
            if p <= target + 1e-12 {
                break;
            }
            out.push(p);
            i += 1;
        }
        out.push(target);
        out
    }
}

/// Statistics of one Newton solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub p: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub damped_steps: usize,
    pub final_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub steps: Vec<StepStats>,
    pub fill: FillStats,
    /// The warm start failed and a full continuation was run instead.
    pub fallback: bool,
}

impl SolveStats {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }
}

/// Damped Newton iteration from `x0`. The label `p` is only used in
/// diagnostics.
pub fn newton_solve<S: NonlinearSystem>(
    sys: &S,
    config: &NewtonConfig,
    x0: Vec<f64>,
    p: f64,
    fill: &mut FillStats,
) -> Result<(Vec<f64>, StepStats)> {
    config.validate()?;
    let mut x = x0;
    let mut r = sys.residual(&x)?;
    let mut norm = norm2(&r);
    let mut stats = StepStats { p, residual_history: vec![norm], ..Default::default() };
    let fail = |reason: &str, residual: f64, iterations: usize| Error::NonConvergence {
        p,
        reason: reason.to_string(),
        residual,
        iterations,
    };
    if config.verbose {
        eprintln!("step p={p:.4} iter=0 |R|={norm:.6e} alpha=-");
    }
    while norm > config.abs_tol {
        if !norm.is_finite() {
            return Err(fail("residual is not finite", norm, stats.iterations));
        }
        if stats.iterations >= config.max_iters {
            return Err(fail("iteration limit reached", norm, stats.iterations));
        }
        let j = sys.jacobian(&x)?;
        let lu = sys.factor(&j)?;
        *fill = lu.stats;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let (d, _) = lu.solve_refined(&j, &neg);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let rt = sys.residual(&xt)?;
            let nt = norm2(&rt);
            if nt < norm {
                accepted = Some((xt, rt, nt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xt, rt, nt)) = accepted else {
            return Err(fail("line search exhausted", norm, stats.iterations));
        };
        if alpha < 1.0 {
            stats.damped_steps += 1;
        }
        x = xt;
        r = rt;
        norm = nt;
        stats.iterations += 1;
        stats.residual_history.push(norm);
        if config.verbose {
            eprintln!("step p={p:.4} iter={} |R|={norm:.6e} alpha={alpha}", stats.iterations);
        }
    }
    stats.final_residual = norm;
    Ok((x, stats))
}

/// Runs Newton along the continuation sequence for `target`, warm-starting
/// each step from the previous one. `make` builds the system for a given p.
pub fn continuation_sequence<S, M>(
    make: M,
    target: f64,
    config: &NewtonConfig,
    x0: Vec<f64>,
    stats: &mut SolveStats,
) -> Result<Vec<f64>>
where
    S: NonlinearSystem,
    M: Fn(f64) -> S,
{
    let mut x = x0;
    for p in config.continuation(target) {
        let (xn, st) = newton_solve(&make(p), config, x, p, &mut stats.fill)?;
        stats.steps.push(st);
        x = xn;
    }
    Ok(x)
}

/// Solves the flow problem at `law.p`. With a `coarse_hint` (a prolongated
/// solution from the previous level) only the target is solved; if that
/// fails the full continuation is run from the hint. Without a hint the full
/// continuation starts from `initial`.
pub fn continuation_drive(
    assembler: &Assembler<'_>,
    law: &FlowLaw,
    data: &ProblemData,
    config: &NewtonConfig,
    initial: Vec<f64>,
    coarse_hint: Option<Vec<f64>>,
) -> Result<(Vec<f64>, SolveStats)> {
    let make = |p: f64| FlowProblem { assembler, law: law.with_p(p), data };
    let mut stats = SolveStats::default();
    if let Some(hint) = coarse_hint {
        match newton_solve(&make(law.p), config, hint.clone(), law.p, &mut stats.fill) {
            Ok((x, st)) => {
                stats.steps.push(st);
                return Ok((x, stats));
            }
            Err(Error::NonConvergence { .. }) => {
                stats.fallback = true;
                let x = continuation_sequence(make, law.p, config, hint, &mut stats)?;
                return Ok((x, stats));
            }
            Err(e) => return Err(e),
        }
    }
    let x = continuation_sequence(make, law.p, config, initial, &mut stats)?;
    Ok((x, stats))
}
