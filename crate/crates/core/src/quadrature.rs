//! Symmetric quadrature on the reference triangle and Gauss–Legendre rules on
//! the unit interval.

use crate::mesh::Point;
use crate::{Error, Result};

/// A quadrature rule on a reference entity.
///
/// Triangle rules store barycentric points and weights summing to `1/2` (the
/// reference triangle area); edge rules store points in `[0, 1]` with
/// weights summing to `1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TriangleRule = QuadRule<[f64; 3]>;
pub type EdgeRule = QuadRule<f64>;

// (weight on the unit-measure triangle, orbit generator)
enum Orbit {
    Centroid(f64),
    /// (a, a, 1 - 2a)
    S21(f64, f64),
    /// all permutations of (a, b, 1 - a - b)
    S111(f64, f64, f64),
}

const DEGREE_4: &[Orbit] = &[
    Orbit::S21(0.223381589678011, 0.445948490915965),
    Orbit::S21(0.109951743655322, 0.091576213509771),
];

const DEGREE_6: &[Orbit] = &[
    Orbit::S21(0.116786275726379, 0.249286745170910),
    Orbit::S21(0.050844906370207, 0.063089014491502),
    Orbit::S111(0.082851075618374, 0.053145049844817, 0.310352451033784),
];

const DEGREE_8: &[Orbit] = &[
    Orbit::Centroid(0.144315607677787),
    Orbit::S21(0.095091634267285, 0.459292588292723),
    Orbit::S21(0.103217370534718, 0.170569307751760),
    Orbit::S21(0.032458497623198, 0.050547228317031),
    Orbit::S111(0.027230314174435, 0.008394777409958, 0.263112829634638),
];

fn expand(orbits: &[Orbit], degree: usize) -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(w);
            }
            Orbit::S21(w, a) => {
                let b = 1.0 - 2.0 * a;
                for p in [[a, a, b], [a, b, a], [b, a, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
            Orbit::S111(w, a, b) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
    // The tabulated weights carry 15 digits; renormalizing keeps the
    // constant moment exact.
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| 0.5 * w / total).collect();
    QuadRule {
        points,
        weights,
        degree,
    }
}

/// Symmetric positive-weight triangle rule exact to at least `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    match degree {
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            Ok(QuadRule {
                points: vec![[b, a, a], [a, b, a], [a, a, b]],
                weights: vec![1.0 / 6.0; 3],
                degree: 2,
            })
        }
        4 => Ok(expand(DEGREE_4, 4)),
        6 => Ok(expand(DEGREE_6, 6)),
        8 => Ok(expand(DEGREE_8, 8)),
        _ => Err(Error::InvalidArgument(format!(
            "no triangle rule of degree {degree} (supported: 2, 4, 6, 8)"
        ))),
    }
}

/// Gauss–Legendre rule on `[0, 1]` exact to at least `degree`.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree == 0 || degree > 39 {
        return Err(Error::InvalidArgument(format!(
            "edge rule degree must be in 1..=39, got {degree}"
        )));
    }
    let n = degree / 2 + 1;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Ok(QuadRule {
        points,
        weights,
        degree: 2 * n - 1,
    })
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature nodes and weights mapped onto a physical triangle.
pub fn map_triangle(rule: &TriangleRule, vertices: [Point; 3], area: f64) -> impl Iterator<Item = (Point, [f64; 3], f64)> + '_ {
    let v = vertices;
    rule.points.iter().zip(&rule.weights).map(move |(l, &w)| {
        let x = [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ];
        (x, *l, 2.0 * area * w)
    })
}

/// Quadrature nodes and weights mapped onto a physical segment.
pub fn map_edge(rule: &EdgeRule, ends: [Point; 2], length: f64) -> impl Iterator<Item = (Point, f64)> + '_ {
    let [a, b] = ends;
    rule.points.iter().zip(&rule.weights).map(move |(&t, &w)| {
        ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w * length)
    })
}

/// Quadrature degrees used for assembly and for error evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadDegrees {
    pub assembly: usize,
    pub error: usize,
}

impl Default for QuadDegrees {
    fn default() -> Self {
        Self { assembly: 4, error: 8 }
    }
}

/// Cached triangle and edge rules for one degree.
#[derive(Clone, Debug)]
pub struct Rules {
    pub triangle: TriangleRule,
    pub edge: EdgeRule,
}

impl Rules {
    pub fn new(degree: usize) -> Result<Self> {
        Ok(Self {
            triangle: triangle_rule(degree)?,
            // one extra degree so odd edge integrands of the same order are covered
            edge: edge_rule(degree + 1)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// ∫_{ref triangle} x^a y^b = a! b! / (a + b + 2)!
    fn monomial_exact(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn integrate(rule: &TriangleRule, a: i32, b: i32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| w * l[1].powi(a) * l[2].powi(b))
            .sum()
    }

    #[test]
    fn spot_values() {
        let r2 = triangle_rule(2).unwrap();
        assert!((r2.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!((integrate(&triangle_rule(4).unwrap(), 2, 2) - 1.0 / 180.0).abs() < 1e-15);
        // 3! 3! / 8! = 1/1120
        assert!(((integrate(&triangle_rule(6).unwrap(), 3, 3) - 1.0 / 1120.0) * 1120.0).abs() < 1e-13);
    }

    #[test]
    fn triangle_rules_exact_to_degree() {
        for deg in [2, 4, 6, 8] {
            let r = triangle_rule(deg).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let exact = monomial_exact(a, b);
                    let got = integrate(&r, a as i32, b as i32);
                    assert!(
                        ((got - exact) / exact).abs() < 1e-13,
                        "degree {deg} rule fails x^{a} y^{b}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(matches!(triangle_rule(3), Err(Error::InvalidArgument(_))));
        assert!(matches!(edge_rule(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn edge_rules_exact() {
        let r = edge_rule(2).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for deg in [1, 2, 3, 5, 9, 15] {
            let r = edge_rule(deg).unwrap();
            for k in 0..=deg {
                let got: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(k as i32)).sum();
                assert!((got - 1.0 / (k + 1) as f64).abs() < 1e-13, "deg {deg} k {k}");
            }
        }
    }

    #[test]
    fn mapped_rules_reproduce_measure() {
        let v = [[1.0, 0.5], [2.5, 0.7], [1.2, 2.0]];
        let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
        let r = triangle_rule(8).unwrap();
        let s: f64 = map_triangle(&r, v, area).map(|(_, _, w)| w).sum();
        assert!((s - area).abs() < 1e-14);
        let e = edge_rule(5).unwrap();
        let s: f64 = map_edge(&e, [[0.0, 0.0], [3.0, 4.0]], 5.0).map(|(_, w)| w).sum();
        assert!((s - 5.0).abs() < 1e-14);
    }
}
