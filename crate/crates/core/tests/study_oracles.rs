mod support;

use nsfem::assembly::{manufactured_rhs_with_degree, ConvectiveMode, ExactPoint};
use nsfem::spaces::{ElementPair, FeField, FieldKind};
use nsfem::study::{error_pressure, q_mean_constant, ManufacturedSolution, RateTable};
use nsfem::FlowLaw;
use std::f64::consts::FRAC_PI_4;

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (f(a) + inner + f(b))
}

/// Mean of `|x|^gamma` over the unit square in polar coordinates: by symmetry
/// about the diagonal it equals `2/(gamma + 2) int_0^{pi/4} sec^{gamma+2}`.
fn polar_mean(gamma: f64) -> f64 {
    2.0 / (gamma + 2.0) * simpson(|t| t.cos().powf(-(gamma + 2.0)), 0.0, FRAC_PI_4, 4000)
}

#[test]
fn pressure_mean_matches_polar_oracle() {
    for gamma in [-0.5, 0.0, 0.01, 0.1733333, 0.343333, 1.0, 2.0] {
        let got = q_mean_constant(gamma).unwrap();
        let want = polar_mean(gamma);
        assert!((got - want).abs() < 1e-10 * want, "gamma {gamma}: {got} vs {want}");
    }
    // closed forms
    assert!((q_mean_constant(0.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((q_mean_constant(2.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn exact_gradient_matches_finite_differences() {
    let ms = ManufacturedSolution::new(1.5, 0.01).unwrap();
    let h = 1e-6;
    for x in [[0.3, 0.7], [0.9, 0.1], [0.02, 0.05], [1.0, 1.0]] {
        let e = ms.exact_fields(x).unwrap();
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (vp, vm) = (ms.velocity(xp), ms.velocity(xm));
            for i in 0..2 {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - e.grad.0[i][j]).abs() < 1e-7, "point {x:?} entry {i}{j}");
            }
        }
        assert!(e.grad.trace().abs() < 1e-14, "velocity is solenoidal");
    }
}

#[test]
fn forcing_is_quadrature_converged() {
    let ms = ManufacturedSolution::new(1.5, 0.01).unwrap();
    let law = FlowLaw::new(1.5, 1e-5, 100.0).unwrap();
    let sys = support::system(2, ElementPair::CcrP1dg);
    let exact = |x: [f64; 2]| {
        let e = ms.exact_fields(x).unwrap();
        ExactPoint { v: e.v, grad: e.grad, q: e.q }
    };
    let mode = ConvectiveMode::Reconstruction;
    let l8 = manufactured_rhs_with_degree(&sys, &law, mode, exact, 8).unwrap();
    let l12 = manufactured_rhs_with_degree(&sys, &law, mode, exact, 12).unwrap();
    // |x|^beta and |x|^gamma are analytic only away from the origin, so
    // Gauss rules converge geometrically with a ratio set by h / |x|
    let size = l12.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dist = vec![f64::INFINITY; l8.len()];
    for k in 0..sys.mesh.num_triangles() {
        let r = sys.mesh.triangle_points(k).iter().map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min);
        for &d in sys.dofs.velocity_dofs(k) {
            dist[d] = dist[d].min(r);
        }
    }
    for (radius, bound) in [(0.0, 1e-2), (0.1, 1e-4), (0.3, 1e-6), (0.5, 1e-7)] {
        let worst = (0..l8.len()).filter(|&i| dist[i] >= radius).map(|i| (l8[i] - l12[i]).abs()).fold(0.0, f64::max);
        assert!(worst < bound * size, "support beyond {radius}: {worst:e} against {size:e}");
    }
}

#[test]
fn pressure_errors_ignore_constant_shifts() {
    let ms = ManufacturedSolution::new(1.2, 0.01).unwrap();
    let sys = support::system(2, ElementPair::CcrP1dg);
    let exact = |x: [f64; 2]| ms.exact_fields(x).map(|e| e.q);
    let coeffs = sys.interpolate_pressure(|_, x| x[0] * x[1]);
    let shifted: Vec<f64> = coeffs.iter().map(|c| c + 3.25).collect();
    for s in [ms.p_conj, 2.0] {
        let a = error_pressure(&sys, &FeField { kind: FieldKind::Pressure, coeffs: coeffs.clone() }, exact, s).unwrap();
        let b =
            error_pressure(&sys, &FeField { kind: FieldKind::Pressure, coeffs: shifted.clone() }, exact, s).unwrap();
        assert!((a - b).abs() <= 1e-12 * a, "exponent {s}: {a} vs {b}");
    }
}

#[test]
fn theoretical_pressure_rates_match_the_reported_ones() {
    // reported pressure rates in the discrete L^{p'} norm at p = 1.2 and 1.5
    for (p, reported) in [(1.2, 0.334), (1.5, 0.671)] {
        let t = RateTable::new(p).unwrap();
        let rate = t.pressure_lp.unwrap();
        assert!((rate - reported).abs() < 0.005, "p {p}: {rate} vs {reported}");
        assert_eq!(t.velocity, 1.0);
        assert_eq!(t.pressure_l2, 1.0);
    }
}
