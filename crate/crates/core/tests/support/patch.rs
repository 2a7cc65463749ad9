//! Linear Stokes patch test.

use super::Check;
use nsfem::assembly::{Assembler, ConvectiveMode, ProblemData};
use nsfem::solver::{newton_solve, FillStats, FlowProblem, NewtonConfig};
use nsfem::spaces::{CellBasis, ElementPair, FieldKind};
use nsfem::{FlowLaw, Tensor2};

/// Linear Stokes flow `v = (x + y, x - y)`, `q = x - 1/2` with `f = grad q = (1, 0)`
/// lies in the CCR space, so the discrete solution must be exact.
pub fn ccr_reproduces_linear_stokes_flow() -> Check {
    for level in [1, 2] {
        let sys = super::system(level, ElementPair::CcrP1dg);
        let law = FlowLaw::new(2.0, 0.0, 1.0).unwrap();
        let exact_v = |x: [f64; 2]| ([x[0] + x[1], x[0] - x[1]], Tensor2::new(1.0, 1.0, 1.0, -1.0));
        let exact_q = |x: [f64; 2]| x[0] - 0.5;

        // L(w) = (f, w) assembled from the cell basis directly
        let mut rhs = vec![0.0; sys.dofs.n_velocity];
        for k in 0..sys.mesh.num_triangles() {
            let basis = CellBasis::new(&sys, k);
            let dofs = sys.dofs.velocity_dofs(k).to_vec();
            let mut vals = vec![[0.0; 2]; dofs.len()];
            let mut grads = vec![Tensor2::ZERO; dofs.len()];
            let rule = nsfem::elements::triangle_quadrature(4).unwrap();
            for (i, l) in rule.points.iter().enumerate() {
                basis.velocity(*l, &mut vals, &mut grads);
                for (j, &d) in dofs.iter().enumerate() {
                    rhs[d] += rule.weights[i] * basis.map.det.abs() * vals[j][0];
                }
            }
        }
        let boundary = sys.interpolate_boundary(|x| exact_v(x).0);
        ensure_eq!(boundary.kind, FieldKind::Velocity);
        let g1 = sys.compatible_divergence_datum(&boundary).unwrap();
        ensure!(g1.abs() < 1e-14);
        let data = ProblemData { boundary: boundary.clone(), g1, rhs };
        let asm = Assembler::new(&sys, ConvectiveMode::None);
        let problem = FlowProblem { assembler: &asm, law, data: &data };

        let mut x0 = vec![0.0; sys.dofs.total()];
        x0[..sys.dofs.n_velocity].copy_from_slice(&boundary.coeffs);
        let mut fill = FillStats::default();
        let (x, stats) = newton_solve(&problem, &NewtonConfig::default(), x0, 2.0, &mut fill).unwrap();
        ensure_eq!(stats.iterations, 1, "level {level}: {:?}", stats.residual_history);

        let v = &x[..sys.dofs.n_velocity];
        let q = &x[sys.dofs.pressure_offset()..sys.dofs.multiplier_index()];
        let ev = super::velocity_h1_error(&sys, v, exact_v);
        let eq = super::pressure_l2_error(&sys, q, exact_q);
        ensure!(ev < 1e-10, "level {level}: velocity error {ev:e}");
        ensure!(eq < 1e-10, "level {level}: pressure error {eq:e}");
    }
    Ok(())
}
