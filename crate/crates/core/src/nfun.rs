//! Scalar N-functions of (p, delta)-type and the tensor-valued extra stress
//! and F maps built on top of them.
//!
//! The N-function is generated by `phi'(t) = (delta + t)^{p-2} t`; its shifted
//! family `phi_a` satisfies `phi_a'(t) = phi'(a + t) t / (a + t)`.

use crate::error::{Error, Result};
use crate::integrate;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Below this Frobenius norm of the symmetric part the stress maps switch to
/// their continuous extension (only relevant when `delta == 0` and `p < 2`).
pub const SINGULARITY_GUARD: f64 = 1e-14;

/// Parameters of the power-law extra stress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowLaw {
    pub p: f64,
    pub delta: f64,
    pub nu0: f64,
}

impl FlowLaw {
    pub fn new(p: f64, delta: f64, nu0: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("shear exponent p must exceed 1, got {p}")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("delta must be non-negative, got {delta}")));
        }
        if !(nu0 > 0.0) || !nu0.is_finite() {
            return Err(Error::Domain(format!("nu0 must be positive, got {nu0}")));
        }
        Ok(FlowLaw { p, delta, nu0 })
    }

    /// Same law with a different exponent (used by the continuation driver).
    pub fn with_p(&self, p: f64) -> Self {
        FlowLaw { p, ..*self }
    }

    /// Hoelder conjugate `p' = p / (p - 1)`.
    pub fn conjugate_exponent(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

fn check_nonneg(name: &str, t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be a finite non-negative number, got {t}")))
    }
}

/// `phi(t) = int_0^t (delta + s)^{p-2} s ds` in closed form.
pub fn phi(law: &FlowLaw, t: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    Ok(phi_closed(law.p, law.delta, t))
}

fn phi_closed(p: f64, delta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if delta == 0.0 {
        return t.powf(p) / p;
    }
    // delta^p * int_0^x (1 + u)^{p-2} u du with x = t / delta
    let x = t / delta;
    let scaled = if x < 0.5 {
        // binomial series; the closed form cancels catastrophically here
        let mut coeff = 1.0;
        let mut xpow = x * x;
        let mut sum = 0.0;
        for k in 0..400 {
            let term = coeff * xpow / (k as f64 + 2.0);
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            coeff *= (p - 2.0 - k as f64) / (k as f64 + 1.0);
            xpow *= x;
        }
        sum
    } else {
        let lp = x.ln_1p();
        (p * lp).exp_m1() / p - ((p - 1.0) * lp).exp_m1() / (p - 1.0)
    };
    delta.powf(p) * scaled
}

/// `phi'(t) = (delta + t)^{p-2} t`, continuously extended by 0 at `t = 0`.
pub fn phi_prime(law: &FlowLaw, t: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok((law.delta + t).powf(law.p - 2.0) * t)
}

/// Derivative of the shifted N-function, `phi'(a + t) t / (a + t)`.
pub fn phi_prime_shifted(law: &FlowLaw, a: f64, t: f64) -> Result<f64> {
    check_nonneg("a", a)?;
    check_nonneg("t", t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(phi_prime(law, a + t)? * t / (a + t))
}

/// Relative tolerance used for the shifted N-function quadrature.
pub const SHIFTED_REL_TOL: f64 = 1e-10;

/// Shifted N-function `phi_a(t)`, integrated adaptively.
pub fn phi_shifted(law: &FlowLaw, a: f64, t: f64) -> Result<f64> {
    check_nonneg("a", a)?;
    check_nonneg("t", t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let integrand = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (law.delta + a + s).powf(law.p - 2.0) * s
        }
    };
    integrate::adaptive(integrand, 0.0, t, SHIFTED_REL_TOL, 0.0)
}

/// Convex conjugate `(phi_a)^*(s) = sup_t { s t - phi_a(t) }`.
///
/// The supremum is attained where `phi_a'(t) = s`; that root is found by a
/// safeguarded Newton iteration on the strictly increasing `phi_a'`.
pub fn phi_conjugate(law: &FlowLaw, a: f64, s: f64) -> Result<f64> {
    check_nonneg("a", a)?;
    check_nonneg("s", s)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let t_star = invert_phi_prime_shifted(law, a, s)?;
    Ok(s * t_star - phi_shifted(law, a, t_star)?)
}

fn invert_phi_prime_shifted(law: &FlowLaw, a: f64, s: f64) -> Result<f64> {
    let g = |t: f64| (law.delta + a + t).powf(law.p - 2.0) * t - s;
    let mut lo = 0.0;
    let mut hi = 1.0f64;
    let mut grow = 0;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::Bracketing(format!("no upper bracket for phi_a'(t) = {s}")));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..400 {
        let val = g(t);
        if val == 0.0 || (val / s).abs() < 1e-15 {
            return Ok(t);
        }
        if val < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * hi {
            return Ok(t);
        }
        // phi_a''(t) = (delta + a + t)^{p-3} ((p - 1) t + delta + a)
        let base = law.delta + a + t;
        let slope = base.powf(law.p - 3.0) * ((law.p - 1.0) * t + law.delta + a);
        let newton = t - val / slope;
        t = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    if g(t).abs() <= 1e-12 * s {
        Ok(t)
    } else {
        Err(Error::Bracketing(format!("root of phi_a'(t) = {s} not resolved")))
    }
}

/// 2x2 real tensor, stored row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tensor2(pub [[f64; 2]; 2]);

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2([[0.0; 2]; 2]);
    pub const IDENTITY: Tensor2 = Tensor2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Tensor2([[a11, a12], [a21, a22]])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Tensor2([[a, 0.0], [0.0, b]])
    }

    /// `a b^T`
    pub fn outer(a: [f64; 2], b: [f64; 2]) -> Self {
        Tensor2([[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]])
    }

    pub fn transpose(&self) -> Self {
        let a = self.0;
        Tensor2([[a[0][0], a[1][0]], [a[0][1], a[1][1]]])
    }

    pub fn sym(&self) -> Self {
        let a = self.0;
        let off = 0.5 * (a[0][1] + a[1][0]);
        Tensor2([[a[0][0], off], [off, a[1][1]]])
    }

    /// Frobenius product `A : B`.
    pub fn ddot(&self, other: &Tensor2) -> f64 {
        let (a, b) = (self.0, other.0);
        a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let a = self.0;
        [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, rhs: Tensor2) -> Tensor2 {
        let (a, b) = (self.0, rhs.0);
        Tensor2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl AddAssign for Tensor2 {
    fn add_assign(&mut self, rhs: Tensor2) {
        *self = *self + rhs;
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(self, rhs: Tensor2) -> Tensor2 {
        self + (-rhs)
    }
}

impl Neg for Tensor2 {
    type Output = Tensor2;
    fn neg(self) -> Tensor2 {
        -1.0 * self
    }
}

impl Mul<Tensor2> for f64 {
    type Output = Tensor2;
    fn mul(self, rhs: Tensor2) -> Tensor2 {
        let a = rhs.0;
        Tensor2([[self * a[0][0], self * a[0][1]], [self * a[1][0], self * a[1][1]]])
    }
}

/// `S(A) = nu0 (delta + |A^sym|)^{p-2} A^sym`.
pub fn stress(law: &FlowLaw, a: &Tensor2) -> Tensor2 {
    let s = a.sym();
    let n = s.norm();
    if law.delta == 0.0 && n < SINGULARITY_GUARD && law.p < 2.0 {
        return Tensor2::ZERO;
    }
    (law.nu0 * (law.delta + n).powf(law.p - 2.0)) * s
}

/// Directional derivative `DS(A)[H]`.
pub fn stress_tangent(law: &FlowLaw, a: &Tensor2, h: &Tensor2) -> Tensor2 {
    let as_ = a.sym();
    let hs = h.sym();
    let n = as_.norm();
    if n < SINGULARITY_GUARD {
        let base = if law.delta == 0.0 { SINGULARITY_GUARD } else { law.delta };
        return (law.nu0 * base.powf(law.p - 2.0)) * hs;
    }
    let base = law.delta + n;
    let first = base.powf(law.p - 2.0);
    let second = (law.p - 2.0) * base.powf(law.p - 3.0) * as_.ddot(&hs) / n;
    law.nu0 * (first * hs + second * as_)
}

/// Stress together with the fourth-order tangent applied lazily: returns
/// `(S(A), c1, c2, A^sym / |A^sym|)` such that
/// `DS(A)[H] = c1 H^sym + c2 (n : H^sym) n` with `n` the unit direction.
pub(crate) fn stress_and_tangent_coeffs(law: &FlowLaw, a: &Tensor2) -> (Tensor2, f64, f64, Tensor2) {
    let as_ = a.sym();
    let n = as_.norm();
    if n < SINGULARITY_GUARD {
        let base = if law.delta == 0.0 { SINGULARITY_GUARD } else { law.delta };
        let s = if law.delta == 0.0 && law.p < 2.0 {
            Tensor2::ZERO
        } else {
            (law.nu0 * (law.delta + n).powf(law.p - 2.0)) * as_
        };
        return (s, law.nu0 * base.powf(law.p - 2.0), 0.0, Tensor2::ZERO);
    }
    let base = law.delta + n;
    let pw = base.powf(law.p - 2.0);
    let c1 = law.nu0 * pw;
    let c2 = law.nu0 * (law.p - 2.0) * pw / base * n;
    let dir = (1.0 / n) * as_;
    (c1 * as_, c1, c2, dir)
}

/// `F(A) = (delta + |A^sym|)^{(p-2)/2} A^sym` (no viscosity factor).
pub fn map_f(law: &FlowLaw, a: &Tensor2) -> Tensor2 {
    let s = a.sym();
    let n = s.norm();
    if law.delta == 0.0 && n < SINGULARITY_GUARD && law.p < 2.0 {
        return Tensor2::ZERO;
    }
    (law.delta + n).powf(0.5 * (law.p - 2.0)) * s
}
