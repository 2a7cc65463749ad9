use crate::error::{Error, Result};
use std::sync::OnceLock;

pub const MIN_DEGREE: usize = 1;
pub const MAX_DEGREE: usize = 12;

/// Quadrature rule on the reference triangle (barycentric points, weights
/// summing to 1/2) or on the reference edge `[0, 1]` (points `(1 - s, s)`,
/// weights summing to 1).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates `(x, y) = (lambda_1, lambda_2)` of point `i`.
    pub fn reference_point(&self, i: usize) -> [f64; 2] {
        [self.points[i][1], self.points[i][2]]
    }
}

fn check_degree(degree: usize) -> Result<()> {
    if (MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
        Ok(())
    } else {
        Err(Error::UnsupportedDegree { degree, min: MIN_DEGREE, max: MAX_DEGREE })
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Gauss-Legendre rule on the reference edge exact to `degree`.
pub fn edge_quadrature(degree: usize) -> Result<&'static QuadratureRule> {
    check_degree(degree)?;
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        (MIN_DEGREE..=MAX_DEGREE)
            .map(|d| {
                let (x, weights) = gauss_legendre(d / 2 + 1);
                QuadratureRule { points: x.iter().map(|&s| [1.0 - s, s, 0.0]).collect(), weights, degree: d }
            })
            .collect()
    });
    Ok(&rules[degree - MIN_DEGREE])
}

/// Quadrature rule on the reference triangle exact to `degree`.
///
/// Degrees up to 6 and degree 8 use fully symmetric rules with interior
/// points and positive weights; the remaining degrees use a collapsed
/// Gauss-Legendre product rule.
pub fn triangle_quadrature(degree: usize) -> Result<&'static QuadratureRule> {
    check_degree(degree)?;
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (MIN_DEGREE..=MAX_DEGREE).map(build_triangle_rule).collect());
    Ok(&rules[degree - MIN_DEGREE])
}

struct Orbits {
    rule: QuadratureRule,
}

impl Orbits {
    fn new(degree: usize) -> Self {
        Orbits { rule: QuadratureRule { points: vec![], weights: vec![], degree } }
    }

    // weights below are normalised to unit area
    fn centroid(mut self, w: f64) -> Self {
        self.rule.points.push([1.0 / 3.0; 3]);
        self.rule.weights.push(0.5 * w);
        self
    }

    fn s21(mut self, a: f64, w: f64) -> Self {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.rule.points.push(p);
            self.rule.weights.push(0.5 * w);
        }
        self
    }

    fn s111(mut self, a: f64, b: f64, w: f64) -> Self {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.rule.points.push(p);
            self.rule.weights.push(0.5 * w);
        }
        self
    }
}

fn build_triangle_rule(degree: usize) -> QuadratureRule {
    let rule = match degree {
        1 => Orbits::new(1).centroid(1.0).rule,
        2 => Orbits::new(2).s21(1.0 / 6.0, 1.0 / 3.0).rule,
        3 | 4 => {
            Orbits::new(degree)
                .s21(0.445_948_490_915_965, 0.223_381_589_678_011)
                .s21(0.091_576_213_509_771, 0.109_951_743_655_322)
                .rule
        }
        5 => {
            Orbits::new(5)
                .centroid(0.225)
                .s21(0.470_142_064_105_115, 0.132_394_152_788_506)
                .s21(0.101_286_507_323_456, 0.125_939_180_544_827)
                .rule
        }
        6 => {
            Orbits::new(6)
                .s21(0.249_286_745_170_910, 0.116_786_275_726_379)
                .s21(0.063_089_014_491_502, 0.050_844_906_370_207)
                .s111(0.053_145_049_844_817, 0.310_352_451_033_784, 0.082_851_075_618_374)
                .rule
        }
        8 => {
            Orbits::new(8)
                .centroid(0.144_315_607_677_787)
                .s21(0.459_292_588_292_723, 0.095_091_634_267_285)
                .s21(0.170_569_307_751_760, 0.103_217_370_534_718)
                .s21(0.050_547_228_317_031, 0.032_458_497_623_198)
                .s111(0.008_394_777_409_958, 0.263_112_829_634_638, 0.027_230_314_174_435)
                .rule
        }
        _ => collapsed_product(degree),
    };
    polish_weights(rule)
}

// The tabulated weights carry 15 digits; rescale so they sum to 1/2 exactly.
fn polish_weights(mut rule: QuadratureRule) -> QuadratureRule {
    let total: f64 = rule.weights.iter().sum();
    let scale = 0.5 / total;
    rule.weights.iter_mut().for_each(|w| *w *= scale);
    rule
}

fn collapsed_product(degree: usize) -> QuadratureRule {
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (i, &u) in x.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            let px = u;
            let py = (1.0 - u) * v;
            points.push([1.0 - px - py, px, py]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    QuadratureRule { points, weights, degree }
}
