//! Dense reference implementations built only from vertex coordinates and
//! the defining functionals. Nothing here calls the library's assembly code.

#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::HashMap;

pub type P = [f64; 2];

pub struct OracleEdge {
    pub plus: usize,
    pub minus: Option<usize>,
    pub ends: [P; 2],
    pub normal: P,
    pub length: f64,
}

/// Edges recomputed from the triangle list: `plus` is the larger element
/// index, the normal points out of `plus`.
pub fn oracle_edges(vertices: &[P], triangles: &[[usize; 3]]) -> Vec<OracleEdge> {
    let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            owners.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut keys: Vec<_> = owners.keys().copied().collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| {
            let mut ts = owners[&k].clone();
            ts.sort_unstable();
            let plus = *ts.last().unwrap();
            let minus = if ts.len() == 2 { Some(ts[0]) } else { None };
            let (a, b) = (vertices[k.0], vertices[k.1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            let c = centroid(vertices, triangles[plus]);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            if n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) < 0.0 {
                n = [-n[0], -n[1]];
            }
            OracleEdge {
                plus,
                minus,
                ends: [a, b],
                normal: n,
                length: len,
            }
        })
        .collect()
}

pub fn centroid(v: &[P], t: [usize; 3]) -> P {
    [(v[t[0]][0] + v[t[1]][0] + v[t[2]][0]) / 3.0, (v[t[0]][1] + v[t[1]][1] + v[t[2]][1]) / 3.0]
}

pub fn area(v: &[P], t: [usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Value of the k-th barycentric basis function of triangle `t` at `x`
/// (extended affinely outside the triangle).
pub fn basis(v: &[P], t: [usize; 3], k: usize, x: P) -> f64 {
    let (a, b) = (v[t[(k + 1) % 3]], v[t[(k + 2) % 3]]);
    let sub = 0.5 * ((a[0] - x[0]) * (b[1] - x[1]) - (b[0] - x[0]) * (a[1] - x[1]));
    sub / area(v, t)
}

/// Gradient of the k-th barycentric basis function, by central differences
/// of the (affine) basis function itself.
pub fn basis_grad(v: &[P], t: [usize; 3], k: usize) -> P {
    let c = centroid(v, t);
    let h = 1e-3;
    [
        (basis(v, t, k, [c[0] + h, c[1]]) - basis(v, t, k, [c[0] - h, c[1]])) / (2.0 * h),
        (basis(v, t, k, [c[0], c[1] + h]) - basis(v, t, k, [c[0], c[1] - h])) / (2.0 * h),
    ]
}

/// Edge-midpoint rule, exact for quadratics: `(point, weight)`.
pub fn tri_quad(v: &[P], t: [usize; 3]) -> Vec<(P, f64)> {
    let a = area(v, t);
    (0..3)
        .map(|k| {
            let (p, q) = (v[t[k]], v[t[(k + 1) % 3]]);
            ([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0], a / 3.0)
        })
        .collect()
}

/// Three-point Gauss–Legendre, exact for quintics.
pub fn edge_quad(e: &OracleEdge) -> Vec<(P, f64)> {
    let r = (0.6f64).sqrt() / 2.0;
    [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)]
        .iter()
        .map(|&(s, w)| {
            let [a, b] = e.ends;
            ([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], w * e.length)
        })
        .collect()
}

pub fn sgn(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x.signum()
    }
}

pub fn dense_mass(v: &[P], tris: &[[usize; 3]]) -> Vec<Vec<f64>> {
    let n = 3 * tris.len();
    let mut m = vec![vec![0.0; n]; n];
    for (t, &tri) in tris.iter().enumerate() {
        for (x, w) in tri_quad(v, tri) {
            for a in 0..3 {
                for b in 0..3 {
                    m[3 * t + a][3 * t + b] += w * basis(v, tri, a, x) * basis(v, tri, b, x);
                }
            }
        }
    }
    m
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        let d = a[c][c];
        for x in a[c].iter_mut() {
            *x /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            if a[i][k] != 0.0 {
                for j in 0..p {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Edge sets for the defining functional.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Edges {
    All,
    Interior,
}

/// Dense matrix of `φ_a ↦ ⟨Q_i^s(ζ_i λ_b) n_i, [φ_a]⟩ − (ζ_i λ_b, ∂_i φ_a)` with
/// `Q^s = {·} + s·½ sgn(n_i) [·]` on interior edges and the own trace on the
/// boundary. Row = test, column = trial.
pub fn dense_functional(
    v: &[P],
    tris: &[[usize; 3]],
    axis: usize,
    s: f64,
    edges: Edges,
    zeta: &dyn Fn(P) -> [f64; 2],
) -> Vec<Vec<f64>> {
    let n = 3 * tris.len();
    let mut b = vec![vec![0.0; n]; n];
    for (t, &tri) in tris.iter().enumerate() {
        for (x, w) in tri_quad(v, tri) {
            let z = zeta(x)[axis];
            for a in 0..3 {
                let da = basis_grad(v, tri, a)[axis];
                for bb in 0..3 {
                    b[3 * t + a][3 * t + bb] -= w * z * basis(v, tri, bb, x) * da;
                }
            }
        }
    }
    for e in oracle_edges(v, tris) {
        if e.minus.is_none() && edges == Edges::Interior {
            continue;
        }
        let ni = e.normal[axis];
        for (x, w) in edge_quad(&e) {
            let z = zeta(x)[axis];
            // trial weights on (plus, minus) traces
            let (wp, wm) = match e.minus {
                None => (1.0, 0.0),
                Some(_) => (0.5 + 0.5 * s * sgn(ni), 0.5 - 0.5 * s * sgn(ni)),
            };
            let mut trial = vec![(e.plus, wp)];
            let mut test = vec![(e.plus, 1.0)];
            if let Some(m) = e.minus {
                trial.push((m, wm));
                test.push((m, -1.0));
            }
            for &(ta, sa) in &test {
                for &(tb, wb) in &trial {
                    for a in 0..3 {
                        for bb in 0..3 {
                            b[3 * ta + a][3 * tb + bb] += w
                                * z
                                * ni
                                * sa
                                * wb
                                * basis(v, tris[ta], a, x)
                                * basis(v, tris[tb], bb, x);
                        }
                    }
                }
            }
        }
    }
    b
}

/// `⟨g n_i, φ⟩` over boundary edges.
pub fn dense_boundary_load(v: &[P], tris: &[[usize; 3]], axis: usize, g: &dyn Fn(P) -> f64) -> Vec<f64> {
    let mut l = vec![0.0; 3 * tris.len()];
    for e in oracle_edges(v, tris) {
        if e.minus.is_some() {
            continue;
        }
        for (x, w) in edge_quad(&e) {
            for a in 0..3 {
                l[3 * e.plus + a] += w * g(x) * e.normal[axis] * basis(v, tris[e.plus], a, x);
            }
        }
    }
    l
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Mesh inputs for the oracle comparison: structured meshes with both
/// diagonal rules and one jittered mesh with no axis-aligned interior edges.
pub fn oracle_meshes() -> Vec<(String, dwdg::mesh::Mesh)> {
    use dwdg::mesh::{generate_structured_rect, DiagonalRule, Mesh, Rect};
    let mut out = vec![
        (
            "unit 4x4 uniform-ne".to_string(),
            generate_structured_rect(Rect::unit_square(), 4, 4, DiagonalRule::UniformNe).unwrap(),
        ),
        (
            "unit 4x4 corner-safe".to_string(),
            generate_structured_rect(Rect::unit_square(), 4, 4, DiagonalRule::CornerSafe).unwrap(),
        ),
        (
            "[1,3]x[0,2] 4x8".to_string(),
            generate_structured_rect(Rect::new(1.0, 3.0, 0.0, 2.0), 4, 8, DiagonalRule::UniformNe).unwrap(),
        ),
    ];
    let base = generate_structured_rect(Rect::unit_square(), 5, 5, DiagonalRule::UniformNe).unwrap();
    let verts: Vec<P> = base
        .vertices()
        .iter()
        .map(|&p| {
            let interior = p[0] > 1e-9 && p[0] < 1.0 - 1e-9 && p[1] > 1e-9 && p[1] < 1.0 - 1e-9;
            if interior {
                // deterministic jitter, well inside the cell
                let s = (17.0 * p[0] + 31.0 * p[1]).sin();
                let c = (13.0 * p[0] - 7.0 * p[1]).cos();
                [p[0] + 0.05 * s, p[1] + 0.05 * c]
            } else {
                p
            }
        })
        .collect();
    out.push((
        "jittered 5x5".to_string(),
        Mesh::from_parts(verts, base.triangles().to_vec()).unwrap(),
    ));
    out
}

/// Worst entrywise discrepancy (relative to the largest oracle entry, floored
/// at 1) between every sparse calculus operator and the dense oracle, over
/// all oracle meshes. Returns `(worst, description of the worst case)`.
pub fn oracle_discrepancy() -> (f64, String) {
    use dwdg::calculus::{build_div_zeta, build_partial, Axis, BoundaryMode, DivSide, Side};
    use dwdg::quadrature::Rules;

    let rules = Rules::new(4).unwrap();
    let g = |x: P| 1.0 + 2.0 * x[0] - x[1];
    let zetas: Vec<(&str, Box<dyn Fn(P) -> [f64; 2]>)> = vec![
        ("constant", Box::new(|_| [1.0, 0.5])),
        ("radial", Box::new(|x: P| [x[0], x[1]])),
    ];
    let mut worst = (0.0f64, String::new());
    let mut note = |d: f64, what: String| {
        if d > worst.0 || worst.1.is_empty() {
            worst = (d, what);
        }
    };
    let compare = |a: &[Vec<f64>], b: &[Vec<f64>]| max_abs_diff(a, b) / max_abs(b).max(1.0);
    for (name, mesh) in oracle_meshes() {
        let v = mesh.vertices().to_vec();
        let tris = mesh.triangles().to_vec();
        let minv = invert(&dense_mass(&v, &tris));
        let one = |_: P| [1.0, 1.0];
        for (ai, axis) in Axis::BOTH.into_iter().enumerate() {
            for (side, s) in [(Side::Plus, 1.0), (Side::Minus, -1.0)] {
                let nat = matmul(&minv, &dense_functional(&v, &tris, ai, s, Edges::All, &one));
                let op = build_partial(&mesh, &rules, axis, side, BoundaryMode::Natural);
                note(compare(&op.matrix.to_dense(), &nat), format!("{name} natural {axis:?} {side:?}"));

                let zero = matmul(&minv, &dense_functional(&v, &tris, ai, s, Edges::Interior, &one));
                let op = build_partial(&mesh, &rules, axis, side, BoundaryMode::ZeroData);
                note(compare(&op.matrix.to_dense(), &zero), format!("{name} zero-data {axis:?} {side:?}"));

                let op = build_partial(&mesh, &rules, axis, side, BoundaryMode::Data(&g));
                note(compare(&op.matrix.to_dense(), &zero), format!("{name} data {axis:?} {side:?}"));
                let load = matvec(&minv, &dense_boundary_load(&v, &tris, ai, &g));
                let got = op.load.clone().unwrap();
                note(
                    compare(&[got], &[load]),
                    format!("{name} data load {axis:?} {side:?}"),
                );
            }
        }
        for (zname, zeta) in &zetas {
            let div = |s: f64| {
                let mut b = dense_functional(&v, &tris, 0, s, Edges::All, zeta);
                let b2 = dense_functional(&v, &tris, 1, s, Edges::All, zeta);
                for (r, r2) in b.iter_mut().zip(&b2) {
                    for (x, y) in r.iter_mut().zip(r2) {
                        *x += y;
                    }
                }
                matmul(&minv, &b)
            };
            let (p, m) = (div(1.0), div(-1.0));
            let avg: Vec<Vec<f64>> = p
                .iter()
                .zip(&m)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                .collect();
            for (side, oracle) in [(DivSide::Plus, &p), (DivSide::Minus, &m), (DivSide::Average, &avg)] {
                let op = build_div_zeta(&mesh, &rules, &**zeta, side);
                note(compare(&op.matrix.to_dense(), oracle), format!("{name} div {zname} {side:?}"));
            }
        }
    }
    worst
}
