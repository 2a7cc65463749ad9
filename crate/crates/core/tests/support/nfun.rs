//! N-function and stress checks over seeded sample grids, with a brute-force
//! oracle for the growth-equivalence brackets.

use super::Check;
use nsfem::nfun::{map_f, phi, phi_conjugate, phi_prime_shifted, phi_shifted, stress, FlowLaw, Tensor2};
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PS: [f64; 4] = [1.1, 1.5, 2.0, 3.0];
pub const DELTAS: [f64; 3] = [0.0, 1e-5, 1.0];
pub const SHIFTS: [f64; 5] = [0.0, 1e-3, 0.2, 1.0, 10.0];

pub fn laws() -> impl Iterator<Item = FlowLaw> {
    PS.into_iter().flat_map(|p| DELTAS.into_iter().map(move |d| FlowLaw::new(p, d, 1.0).unwrap()))
}

pub fn decades() -> impl Iterator<Item = f64> {
    (-6..=3).map(|k| 10f64.powi(k))
}

pub fn seeded(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(0x5eed), failure_persistence: None, ..Config::default() }
}

pub fn delta2_bound_on_the_decade_grid() -> Check {
    for law in laws() {
        let k = 2f64.powf(law.p.max(2.0));
        for t in decades() {
            let lhs = phi(&law, 2.0 * t).unwrap();
            let rhs = k * phi(&law, t).unwrap();
            ensure!(lhs <= rhs * (1.0 + 1e-12), "p={} delta={} t={t}: {lhs} > {rhs}", law.p, law.delta);
        }
    }
    Ok(())
}

pub fn fenchel_equality_at_the_gradient() -> Check {
    for law in laws() {
        for a in SHIFTS {
            for t in decades() {
                let s = phi_prime_shifted(&law, a, t).unwrap();
                let lhs = phi_conjugate(&law, a, s).unwrap() + phi_shifted(&law, a, t).unwrap();
                let rhs = t * s;
                ensure!(
                    (lhs - rhs).abs() <= 1e-8 * rhs.abs(),
                    "p={} delta={} a={a} t={t}: {lhs} vs {rhs}",
                    law.p,
                    law.delta
                );
            }
        }
    }
    Ok(())
}

pub fn young_inequality_on_the_grid() -> Check {
    for law in laws() {
        for a in SHIFTS {
            for t in decades() {
                let phi_t = phi_shifted(&law, a, t).unwrap();
                for s in decades() {
                    let bound = phi_conjugate(&law, a, s).unwrap() + phi_t;
                    ensure!(s * t <= bound * (1.0 + 1e-10), "p={} a={a} s={s} t={t}", law.p);
                }
            }
        }
    }
    Ok(())
}

pub fn random_tensor(rng: &mut ChaCha8Rng, scale: f64) -> Tensor2 {
    Tensor2::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn stress_is_monotone_on_seeded_samples() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for law in laws() {
        for scale in [1e-4, 1.0, 10.0] {
            for _ in 0..300 {
                let a = random_tensor(&mut rng, scale);
                let b = random_tensor(&mut rng, scale);
                let diff = a - b;
                let m = (stress(&law, &a) - stress(&law, &b)).ddot(&diff);
                ensure!(m > 0.0, "p={} delta={}: {m}", law.p, law.delta);
            }
        }
        // only the symmetric part matters
        let a = Tensor2::new(1.0, 2.0, 0.5, -1.0);
        let skew = Tensor2::new(0.0, 3.0, -3.0, 0.0);
        let m = (stress(&law, &(a + skew)) - stress(&law, &a)).ddot(&skew);
        ensure!(m.abs() < 1e-12);
    }
    Ok(())
}

// Brute-force oracle for the equivalence brackets, independent of the
// library: the stress and F maps written out from their definitions and the
// shifted N-function integrated by Gauss-Legendre on geometric panels.

fn sym_oracle(a: &[f64; 4]) -> [f64; 4] {
    let off = 0.5 * (a[1] + a[2]);
    [a[0], off, off, a[3]]
}

fn frob(a: &[f64; 4]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled(a: &[f64; 4], c: f64) -> [f64; 4] {
    a.map(|x| c * x)
}

fn stress_oracle(p: f64, delta: f64, a: &[f64; 4]) -> [f64; 4] {
    let s = sym_oracle(a);
    let n = frob(&s);
    if n == 0.0 {
        return [0.0; 4];
    }
    scaled(&s, (delta + n).powf(p - 2.0))
}

fn f_oracle(p: f64, delta: f64, a: &[f64; 4]) -> [f64; 4] {
    let s = sym_oracle(a);
    let n = frob(&s);
    if n == 0.0 {
        return [0.0; 4];
    }
    scaled(&s, (delta + n).powf(0.5 * (p - 2.0)))
}

fn phi_shifted_oracle(p: f64, delta: f64, a: f64, t: f64) -> f64 {
    const X: [f64; 5] = [0.0, -0.5384693101056831, 0.5384693101056831, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] =
        [0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891, 0.2369268850561891];
    let f = |s: f64| (delta + a + s).powf(p - 2.0) * s;
    // panels [t r^{k+1}, t r^k] down to 1e-14 t; the remainder is below 1e-14 relative
    let r: f64 = 0.97;
    let mut hi = t;
    let mut sum = 0.0;
    while hi > 1e-14 * t {
        let lo = hi * r;
        let (m, h) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        sum += h * X.iter().zip(&W).map(|(x, w)| w * f(m + h * x)).sum::<f64>();
        hi = lo;
    }
    sum
}

fn growth_pairs() -> Vec<([f64; 4], [f64; 4])> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..1000)
        .map(|_| ([(); 4].map(|_| rng.random_range(-10.0..10.0)), [(); 4].map(|_| rng.random_range(-10.0..10.0))))
        .collect()
}

fn growth_ratio_oracle(p: f64, delta: f64, a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (sa, sb) = (stress_oracle(p, delta, a), stress_oracle(p, delta, b));
    let (fa, fb) = (f_oracle(p, delta, a), f_oracle(p, delta, b));
    let num: f64 = (0..4).map(|i| (sa[i] - sb[i]) * d[i]).sum();
    let den: f64 = (0..4).map(|i| (fa[i] - fb[i]).powi(2)).sum();
    num / den
}

fn shift_samples() -> Vec<(f64, f64)> {
    let a_grid = std::iter::once(0.0).chain(decades());
    a_grid.flat_map(|a| decades().map(move |t| (a, t))).collect()
}

fn bracket(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn oracle_fixture() -> String {
    let pairs = growth_pairs();
    let mut out = String::from("# kind p delta c_lo c_hi\n");
    for p in PS {
        for delta in DELTAS {
            let (lo, hi) = bracket(pairs.iter().map(|(a, b)| growth_ratio_oracle(p, delta, a, b)));
            out += &format!("growth {p} {delta} {lo:.12e} {hi:.12e}\n");
        }
    }
    for p in PS {
        for delta in DELTAS {
            let (lo, hi) = bracket(
                shift_samples()
                    .into_iter()
                    .map(|(a, t)| phi_shifted_oracle(p, delta, a, t) / ((delta + a + t).powf(p - 2.0) * t * t)),
            );
            out += &format!("shift {p} {delta} {lo:.12e} {hi:.12e}\n");
        }
    }
    out
}

const FIXTURE: &str = include_str!("../fixtures/nfun_brackets.txt");

fn fixture_rows(kind: &str) -> Vec<(f64, f64, f64, f64)> {
    FIXTURE
        .lines()
        .filter(|l| l.starts_with(kind))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2], v[3])
        })
        .collect()
}

fn inside(v: f64, lo: f64, hi: f64) -> bool {
    const SLACK: f64 = 1e-9;
    v >= lo * (1.0 - SLACK) && v <= hi * (1.0 + SLACK)
}

pub fn growth_ratio_stays_in_the_recorded_bracket() -> Check {
    let pairs = growth_pairs();
    let rows = fixture_rows("growth");
    ensure_eq!(rows.len(), PS.len() * DELTAS.len());
    for (p, delta, lo, hi) in rows {
        let law = FlowLaw::new(p, delta, 7.0).unwrap();
        for (a, b) in &pairs {
            let (ta, tb) = (Tensor2::new(a[0], a[1], a[2], a[3]), Tensor2::new(b[0], b[1], b[2], b[3]));
            let num = (stress(&law, &ta) - stress(&law, &tb)).ddot(&(ta - tb));
            let df = map_f(&law, &ta) - map_f(&law, &tb);
            let ratio = num / (law.nu0 * df.ddot(&df));
            ensure!(inside(ratio, lo, hi), "p={p} delta={delta}: {ratio} outside [{lo}, {hi}]");
        }
    }
    Ok(())
}

pub fn shift_ratio_stays_in_the_recorded_bracket() -> Check {
    let rows = fixture_rows("shift");
    ensure_eq!(rows.len(), PS.len() * DELTAS.len());
    for (p, delta, lo, hi) in rows {
        let law = FlowLaw::new(p, delta, 1.0).unwrap();
        for (a, t) in shift_samples() {
            let ratio = phi_shifted(&law, a, t).unwrap() / ((delta + a + t).powf(p - 2.0) * t * t);
            ensure!(inside(ratio, lo, hi), "p={p} delta={delta} a={a} t={t}: {ratio} outside [{lo}, {hi}]");
        }
    }
    Ok(())
}

pub fn recorded_brackets_match_the_oracle() -> Check {
    let fresh = oracle_fixture();
    let parse = |s: &str| -> Vec<f64> {
        s.lines()
            .filter(|l| !l.starts_with('#'))
            .flat_map(|l| l.split_whitespace().skip(1).map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect()
    };
    let (a, b) = (parse(&fresh), parse(FIXTURE));
    ensure_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        ensure!((x - y).abs() <= 1e-10 * y.abs().max(1e-300), "{x} vs {y}");
    }
    Ok(())
}
