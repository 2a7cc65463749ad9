//! Assembled Jacobian against central differences of the residual.

use super::Check;
use nsfem::assembly::{Assembler, ConvectiveMode, ProblemData};
use nsfem::spaces::{ElementPair, FeField, FeSystem, FieldKind};
use nsfem::{FlowLaw, Mesh};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COLUMNS: usize = 50;

fn random_data(sys: &FeSystem, rng: &mut ChaCha8Rng) -> ProblemData {
    let boundary = (0..sys.dofs.n_velocity)
        .map(|i| if sys.dofs.is_dirichlet[i] { rng.random_range(-1.0..1.0) } else { 0.0 })
        .collect();
    ProblemData {
        boundary: FeField { kind: FieldKind::Velocity, coeffs: boundary },
        g1: rng.random_range(-0.5..0.5),
        rhs: (0..sys.dofs.n_velocity).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

/// Central differences of the residual against the assembled Jacobian on
/// distinct random columns at a random state.
pub fn jacobian_columns_match_central_differences() -> Check {
    let law = FlowLaw::new(1.3, 1e-2, 100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ac0b1a);
    for pair in ElementPair::ALL {
        let sys = FeSystem::new(Mesh::unit_square(1), pair);
        for mode in [ConvectiveMode::Reconstruction, ConvectiveMode::Temam] {
            let asm = Assembler::new(&sys, mode);
            let n = asm.dim();
            let data = random_data(&sys, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let j = asm.jacobian(&law, &x, &data).unwrap();
            for c in sample(&mut rng, n, COLUMNS.min(n)) {
                let h = 1e-6 * (1.0 + x[c].abs());
                let mut xp = x.clone();
                xp[c] += h;
                let mut xm = x.clone();
                xm[c] -= h;
                let rp = asm.residual(&law, &xp, &data).unwrap();
                let rm = asm.residual(&law, &xm, &data).unwrap();
                let (mut diff, mut norm) = (0.0f64, 0.0f64);
                for i in 0..n {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    diff += (fd - j.get(i, c)).powi(2);
                    norm += fd.powi(2);
                }
                let rel = diff.sqrt() / norm.sqrt().max(1e-300);
                ensure!(rel < 1e-6, "{pair:?} {mode:?} column {c}: relative error {rel:e}");
            }
        }
    }
    Ok(())
}
