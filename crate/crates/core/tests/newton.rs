use nsfem::assembly::{manufactured_rhs, Assembler, ConvectiveMode, ProblemData, SystemState};
use nsfem::solver::{continuation_drive, NewtonConfig, SolveStats};
use nsfem::spaces::{ElementPair, FeField, FeSystem, FieldKind};
use nsfem::study::{run_study, ManufacturedSolution, StudyConfig};
use nsfem::{FlowLaw, Mesh};

struct Setup {
    sys: FeSystem,
    data: ProblemData,
    ms: ManufacturedSolution,
    law: FlowLaw,
}

fn setup(level: usize, p: f64, pair: ElementPair, mode: ConvectiveMode) -> Setup {
    let sys = FeSystem::new(Mesh::unit_square(level), pair);
    let ms = ManufacturedSolution::new(p, 0.01).unwrap();
    let law = FlowLaw::new(p, 1e-5, 100.0).unwrap();
    let boundary = sys.interpolate_boundary(|x| ms.velocity(x));
    let g1 = sys.compatible_divergence_datum(&boundary).unwrap();
    let rhs = manufactured_rhs(&sys, &law, mode, |x| {
        let e = ms.exact_fields(x).unwrap();
        nsfem::assembly::ExactPoint { v: e.v, grad: e.grad, q: e.q }
    });
    Setup { sys, data: ProblemData { boundary, g1, rhs }, ms, law }
}

fn state_vector(sys: &FeSystem, v: Vec<f64>, q: Vec<f64>) -> Vec<f64> {
    let z = sys.reconstruct(&v);
    SystemState {
        v: FeField { kind: FieldKind::Velocity, coeffs: v },
        z: FeField { kind: FieldKind::Recon, coeffs: z },
        q: FeField { kind: FieldKind::Pressure, coeffs: q },
        lambda: 0.0,
    }
    .to_vector()
}

fn solve(s: &Setup, mode: ConvectiveMode, hint: Option<Vec<f64>>) -> (Vec<f64>, SolveStats) {
    let asm = Assembler::new(&s.sys, mode);
    let initial = state_vector(&s.sys, s.data.boundary.coeffs.clone(), vec![0.0; s.sys.dofs.n_pressure]);
    continuation_drive(&asm, &s.law, &s.data, &NewtonConfig::default(), initial, hint).unwrap()
}

fn assert_tail_is_superlinear(stats: &SolveStats) {
    for step in &stats.steps {
        let h = &step.residual_history;
        if h.len() >= 3 {
            let n = h.len();
            for w in h[n - 3..].windows(2) {
                assert!(w[1] <= w[0] / 10.0, "p {}: history {h:?}", step.p);
            }
        }
    }
}

#[test]
fn continuation_converges_at_level_three() {
    let mode = ConvectiveMode::Reconstruction;
    let s = setup(3, 1.5, ElementPair::CcrP1dg, mode);
    let (_, stats) = solve(&s, mode, None);
    let ps: Vec<f64> = stats.steps.iter().map(|st| st.p).collect();
    assert_eq!(ps.len(), 6, "{ps:?}");
    for st in &stats.steps {
        assert!(st.iterations <= 15, "p {}: {} iterations", st.p, st.iterations);
        assert!(st.final_residual <= 1e-8);
    }
    assert_tail_is_superlinear(&stats);
}

#[test]
fn small_exponent_completes_on_level_two() {
    for mode in [ConvectiveMode::Reconstruction, ConvectiveMode::Temam] {
        let s = setup(2, 1.1, ElementPair::CcrP1dg, mode);
        let (_, stats) = solve(&s, mode, None);
        assert!(!stats.fallback);
        assert!(stats.steps.iter().all(|st| st.final_residual <= 1e-8));
        assert_eq!(stats.steps.last().unwrap().p, 1.1);
    }
}

#[test]
fn zero_data_gives_the_zero_state() {
    let sys = FeSystem::new(Mesh::unit_square(2), ElementPair::Br1P0);
    let data = ProblemData::homogeneous(&sys);
    let asm = Assembler::new(&sys, ConvectiveMode::Reconstruction);
    let law = FlowLaw::new(1.4, 1e-5, 100.0).unwrap();
    let zero = vec![0.0; sys.dofs.total()];
    let (x, stats) = continuation_drive(&asm, &law, &data, &NewtonConfig::default(), zero, None).unwrap();
    assert!(x.iter().all(|v| *v == 0.0));
    assert!(stats.steps.iter().all(|st| st.iterations <= 1));
}

#[test]
fn warm_start_from_the_interpolated_solution_is_cheap() {
    let mode = ConvectiveMode::Reconstruction;
    let s = setup(3, 1.3, ElementPair::CcrP1dg, mode);
    let v = s.sys.interpolate_velocity(|_, x| s.ms.velocity(x), false);
    let q = s.sys.interpolate_pressure(|_, x| s.ms.exact_fields(x).map(|e| e.q).unwrap_or(0.0));
    let (_, stats) = solve(&s, mode, Some(state_vector(&s.sys, v, q)));
    assert!(!stats.fallback);
    assert_eq!(stats.steps.len(), 1);
    assert!(stats.steps[0].iterations <= 5, "{:?}", stats.steps[0].residual_history);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let mode = ConvectiveMode::Temam;
    let s = setup(2, 1.4, ElementPair::P2P0, mode);
    let (a, _) = solve(&s, mode, None);
    let (b, _) = solve(&s, mode, None);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn converged_states_respect_the_constraints() {
    for pair in ElementPair::ALL {
        let law = FlowLaw::new(1.3, 1e-5, 100.0).unwrap();
        let report = run_study(&StudyConfig::new(law, pair, ConvectiveMode::Reconstruction, 2)).unwrap();
        for l in &report.levels {
            assert!(l.lambda.abs() <= 1e-9 * l.rhs_max, "{pair:?} level {}: lambda {:e}", l.level, l.lambda);
            assert!(l.q_integral.abs() <= 1e-9, "{pair:?} level {}: {:e}", l.level, l.q_integral);
            assert!(l.stats.steps.iter().all(|st| st.iterations <= 25 && st.final_residual <= 1e-8));
        }
    }
}
