//! Divergence preservation, Fortin moments and consistency of the reconstruction.

use super::Check;
use nsfem::assembly::{Assembler, ConvectiveMode, ProblemData};
use nsfem::elements::{edge_quadrature, AffineMap};
use nsfem::solver::{newton_solve, FillStats, FlowProblem, NewtonConfig};
use nsfem::spaces::{ElementPair, FeSystem};
use nsfem::FlowLaw;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn barycentric(sys: &FeSystem, k: usize, x: [f64; 2]) -> [f64; 3] {
    let xh = AffineMap::for_cell(&sys.mesh, k).inverse_map(x);
    [1.0 - xh[0] - xh[1], xh[0], xh[1]]
}

/// Discretely divergence-free velocity: Stokes solution with random forcing
/// and homogeneous boundary data.
fn divergence_free_velocity(sys: &FeSystem, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = ProblemData::homogeneous(sys);
    for r in &mut data.rhs {
        *r = rng.random_range(-1.0..1.0) * sys.mesh.h * sys.mesh.h;
    }
    let asm = Assembler::new(sys, ConvectiveMode::None);
    let law = FlowLaw::new(2.0, 0.0, 1.0).unwrap();
    let problem = FlowProblem { assembler: &asm, law, data: &data };
    let config = NewtonConfig { abs_tol: 1e-13, ..NewtonConfig::default() };
    let (x, _) = newton_solve(&problem, &config, vec![0.0; sys.dofs.total()], 2.0, &mut FillStats::default()).unwrap();
    x[..sys.dofs.n_velocity].to_vec()
}

pub fn reconstruction_preserves_discrete_divergence() -> Check {
    for pair in ElementPair::ALL {
        for level in [1, 2] {
            let sys = super::system(level, pair);
            let v = divergence_free_velocity(&sys, 11 + level as u64);
            let scale = super::velocity_h1_error(&sys, &v, |_| ([0.0; 2], nsfem::Tensor2::ZERO));
            ensure!(scale > 1e-6, "{pair:?}: trivial velocity");
            let z = sys.reconstruct(&v);
            let rule = nsfem::elements::triangle_quadrature(4).unwrap();
            let mut worst = 0.0f64;
            for k in 0..sys.mesh.num_triangles() {
                for l in &rule.points {
                    worst = worst.max(sys.eval_recon(&z, k, *l).1.abs());
                }
            }
            ensure!(worst < 1e-10 * scale.max(1.0), "{pair:?} level {level}: |div z| = {worst:e}");
        }
    }
    Ok(())
}

pub fn fortin_moments_match_the_velocity() -> Check {
    let eq = edge_quadrature(8).unwrap();
    for pair in ElementPair::ALL {
        let sys = super::system(2, pair);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..sys.dofs.n_velocity).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = sys.reconstruct(&v);
        let degree = pair.recon_degree();
        let mut worst = 0.0f64;
        for edge in sys.mesh.topology.edges.iter() {
            let [a, b] = edge.vertices.map(|i| sys.mesh.vertices[i]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            for k in edge.triangles.iter().flatten() {
                let mut m = [0.0; 2];
                for (q, w) in eq.points.iter().zip(&eq.weights) {
                    let s = q[1];
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let l = barycentric(&sys, *k, x);
                    let (vv, _) = sys.eval_velocity(&v, *k, l);
                    let (zz, _) = sys.eval_recon(&z, *k, l);
                    let jump = (zz[0] - vv[0]) * edge.normal[0] + (zz[1] - vv[1]) * edge.normal[1];
                    m[0] += w * len * jump;
                    m[1] += w * len * jump * s;
                }
                worst = worst.max(m[0].abs());
                if degree == 1 {
                    worst = worst.max(m[1].abs());
                }
            }
        }
        if degree == 1 {
            for k in 0..sys.mesh.num_triangles() {
                let mean = [0, 1].map(|c| {
                    super::integrate(&sys, 6, |kk, l, _| {
                        if kk != k {
                            return 0.0;
                        }
                        sys.eval_recon(&z, kk, l).0[c] - sys.eval_velocity(&v, kk, l).0[c]
                    })
                });
                worst = worst.max(mean[0].abs()).max(mean[1].abs());
            }
        }
        ensure!(worst < 1e-12, "{pair:?}: moment defect {worst:e}");
    }
    Ok(())
}

pub fn reconstruction_is_first_order_consistent() -> Check {
    let exact = |x: [f64; 2]| [(PI * x[0]).sin() * (PI * x[1]).sin(), (PI * x[0]).cos() * (PI * x[1]).cos()];
    for pair in ElementPair::ALL {
        let errors: Vec<f64> = (1..=4)
            .map(|level| {
                let sys = super::system(level, pair);
                let v = sys.interpolate_velocity(|_, x| exact(x), false);
                let z = sys.reconstruct(&v);
                super::integrate(&sys, 8, |k, l, _| {
                    let (a, _) = sys.eval_velocity(&v, k, l);
                    let (b, _) = sys.eval_recon(&z, k, l);
                    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
                })
                .sqrt()
            })
            .collect();
        for w in errors.windows(2) {
            let eoc = (w[0] / w[1]).log2();
            ensure!(eoc >= 0.9, "{pair:?}: errors {errors:?}");
        }
    }
    Ok(())
}
