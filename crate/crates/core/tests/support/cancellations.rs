//! Energy cancellation identities of both convective forms.

use super::Check;
use nsfem::assembly::{reconstruction_form, temam_form};
use nsfem::spaces::{ElementPair, FeField, FeSystem, FieldKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_velocity(sys: &FeSystem, rng: &mut ChaCha8Rng, homogeneous: bool) -> FeField {
    let coeffs = (0..sys.dofs.n_velocity)
        .map(|i| if homogeneous && sys.dofs.is_dirichlet[i] { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect();
    FeField { kind: FieldKind::Velocity, coeffs }
}

/// `int |v| |z| |grad z|`, the natural size of a trilinear value.
fn trilinear_scale(sys: &FeSystem, v: &FeField, z: &FeField) -> f64 {
    super::integrate(sys, 8, |k, l, _| {
        let (vv, _) = sys.eval_velocity(&v.coeffs, k, l);
        let (zz, gz) = sys.eval_velocity(&z.coeffs, k, l);
        vv[0].hypot(vv[1]) * zz[0].hypot(zz[1]) * gz.norm()
    })
}

pub fn temam_form_vanishes_on_equal_last_slots() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for pair in ElementPair::ALL {
        for level in [1, 2] {
            let sys = super::system(level, pair);
            for _ in 0..3 {
                let v = random_velocity(&sys, &mut rng, false);
                let z = random_velocity(&sys, &mut rng, false);
                let b = temam_form(&sys, &v, &z, &z, 0.0).unwrap();
                let scale = trilinear_scale(&sys, &v, &z);
                ensure!(b.abs() <= 1e-10 * scale, "{pair:?} level {level}: {b:e} vs {scale:e}");
            }
        }
    }
    Ok(())
}

pub fn reconstruction_form_reduces_to_divergence_term() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for pair in ElementPair::ALL {
        for level in [1, 2] {
            let sys = super::system(level, pair);
            for _ in 0..3 {
                let v = random_velocity(&sys, &mut rng, false);
                let z = FeField { kind: FieldKind::Recon, coeffs: sys.reconstruct(&v.coeffs) };
                let w = random_velocity(&sys, &mut rng, true);
                let b = reconstruction_form(&sys, &z, &w, &w).unwrap();
                let expected = 0.5
                    * super::integrate(&sys, 8, |k, l, _| {
                        let (_, div) = sys.eval_recon(&z.coeffs, k, l);
                        let (ww, _) = sys.eval_velocity(&w.coeffs, k, l);
                        div * (ww[0] * ww[0] + ww[1] * ww[1])
                    });
                let scale = b.abs().max(expected.abs()).max(1e-300);
                ensure!((b - expected).abs() <= 1e-10 * scale, "{pair:?} level {level}: {b:e} vs {expected:e}");
            }
        }
    }
    Ok(())
}
