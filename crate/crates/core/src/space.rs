//! The broken piecewise-linear space: one barycentric basis per triangle,
//! three coefficients per element, ordered element-major.

use std::fmt::Write as _;

use crate::mesh::{Mesh, Point, TriangleGeometry};
use crate::quadrature::{map_edge, map_triangle, EdgeRule, Rules};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Global degree-of-freedom index of local basis `k` on element `t`.
#[inline]
pub const fn dof(t: usize, k: usize) -> usize {
    3 * t + k
}

/// Coefficients of a function in the broken P1 space.
#[derive(Clone, Debug, PartialEq)]
pub struct DgFunction {
    coefficients: Vec<f64>,
}

impl DgFunction {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            coefficients: vec![0.0; 3 * mesh.num_elements()],
        }
    }

    pub fn from_coefficients(mesh: &Mesh, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != 3 * mesh.num_elements() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                3 * mesh.num_elements(),
                coefficients.len()
            )));
        }
        Ok(Self { coefficients })
    }

    pub(crate) fn from_coefficients_unchecked(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    /// Nodal interpolation of `f` at each element's own vertices.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        let coefficients = (0..mesh.num_elements())
            .flat_map(|t| mesh.element_vertices(t).map(&f))
            .collect();
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn local(&self, t: usize) -> [f64; 3] {
        [self.coefficients[3 * t], self.coefficients[3 * t + 1], self.coefficients[3 * t + 2]]
    }

    /// Value on element `t` at barycentric coordinates `lambda`.
    #[inline]
    pub fn value_bary(&self, t: usize, lambda: [f64; 3]) -> f64 {
        let c = &self.coefficients[3 * t..3 * t + 3];
        c[0] * lambda[0] + c[1] * lambda[1] + c[2] * lambda[2]
    }

    /// Value of the restriction to element `t` at `x`.
    pub fn evaluate(&self, mesh: &Mesh, t: usize, x: Point) -> Result<f64> {
        if t >= mesh.num_elements() {
            return Err(Error::InvalidArgument(format!(
                "element {t} out of range (mesh has {})",
                mesh.num_elements()
            )));
        }
        Ok(self.value_bary(t, mesh.geometry(t).barycentric(x)))
    }

    /// Constant gradient on element `t`.
    pub fn gradient(&self, mesh: &Mesh, t: usize) -> Point {
        let g = &mesh.geometry(t).grad_lambda;
        let c = self.local(t);
        [
            c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
            c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
        ]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.coefficients
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `element,local,coefficient` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("element,local,coefficient\n");
        for (i, c) in self.coefficients.iter().enumerate() {
            let _ = writeln!(s, "{},{},{:.17e}", i / 3, i % 3, c);
        }
        s
    }
}

/// `|T|/12 · [[2,1,1],[1,2,1],[1,1,2]]` for the barycentric basis.
pub fn local_mass_matrix(element: usize, geometry: &TriangleGeometry) -> Result<[[f64; 3]; 3]> {
    if !(geometry.area > 0.0) {
        return Err(Error::Geometry {
            element,
            message: format!("non-positive area {}", geometry.area),
        });
    }
    let d = geometry.area / 6.0;
    let o = geometry.area / 12.0;
    Ok([[d, o, o], [o, d, o], [o, o, d]])
}

/// Inverse of the local mass matrix, `3/|T| · (4I − 𝟙𝟙ᵀ)`.
#[inline]
pub fn local_inverse_mass(area: f64) -> [[f64; 3]; 3] {
    let d = 9.0 / area;
    let o = -3.0 / area;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn block_diagonal(mesh: &Mesh, block: impl Fn(usize) -> [[f64; 3]; 3]) -> CsrMatrix {
    let n = 3 * mesh.num_elements();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements());
    for t in 0..mesh.num_elements() {
        let m = block(t);
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                b.push(dof(t, i), dof(t, j), v);
            }
        }
    }
    b.build()
}

/// Global block-diagonal mass matrix.
pub fn mass_matrix(mesh: &Mesh) -> CsrMatrix {
    block_diagonal(mesh, |t| {
        local_mass_matrix(t, mesh.geometry(t)).expect("mesh construction guarantees positive areas")
    })
}

/// Global block-diagonal inverse mass matrix.
pub fn inverse_mass_matrix(mesh: &Mesh) -> CsrMatrix {
    block_diagonal(mesh, |t| local_inverse_mass(mesh.geometry(t).area))
}

/// Applies the block inverse mass to a load vector in place.
pub fn apply_inverse_mass(mesh: &Mesh, load: &mut [f64]) {
    for t in 0..mesh.num_elements() {
        let m = local_inverse_mass(mesh.geometry(t).area);
        let b = [load[3 * t], load[3 * t + 1], load[3 * t + 2]];
        for i in 0..3 {
            load[3 * t + i] = m[i][0] * b[0] + m[i][1] * b[1] + m[i][2] * b[2];
        }
    }
}

/// `(f, φ_i)` for every basis function.
pub fn load_vector(mesh: &Mesh, rules: &Rules, f: impl Fn(Point) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; 3 * mesh.num_elements()];
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let fx = f(x) * w;
            for k in 0..3 {
                out[dof(t, k)] += fx * l[k];
            }
        }
    }
    out
}

/// One edge quadrature node with the barycentric coordinates of both
/// adjacent elements' traces.
#[derive(Clone, Copy, Debug)]
pub struct EdgePoint {
    pub x: Point,
    pub weight: f64,
    pub plus: [f64; 3],
    pub minus: Option<[f64; 3]>,
}

/// Quadrature nodes of `rule` on edge `e`.
pub fn edge_points(mesh: &Mesh, rule: &EdgeRule, e: usize) -> Vec<EdgePoint> {
    let edge = &mesh.edges()[e];
    let gp = mesh.geometry(edge.plus);
    let gm = edge.minus.map(|t| mesh.geometry(t));
    map_edge(rule, mesh.edge_endpoints(e), edge.length)
        .map(|(x, weight)| EdgePoint {
            x,
            weight,
            plus: gp.barycentric(x),
            minus: gm.map(|g| g.barycentric(x)),
        })
        .collect()
}

impl DgFunction {
    /// Traces `(v⁺, v⁻)` on edge `e` at a node; `v⁻` is `None` on the boundary.
    #[inline]
    pub fn traces(&self, mesh: &Mesh, e: usize, p: &EdgePoint) -> (f64, Option<f64>) {
        let edge = &mesh.edges()[e];
        (
            self.value_bary(edge.plus, p.plus),
            edge.minus.zip(p.minus).map(|(t, l)| self.value_bary(t, l)),
        )
    }
}

/// L2-orthogonal projection onto the broken P1 space.
pub fn l2_project(mesh: &Mesh, rules: &Rules, f: impl Fn(Point) -> f64) -> DgFunction {
    let mut c = load_vector(mesh, rules, f);
    apply_inverse_mass(mesh, &mut c);
    DgFunction { coefficients: c }
}

/// Legacy-VTK ASCII unstructured grid. Vertices are duplicated per triangle so
/// each point field carries the element-local (discontinuous) values.
pub fn to_vtk(mesh: &Mesh, title: &str, fields: &[(&str, &DgFunction)]) -> String {
    let n = mesh.num_elements();
    let mut s = String::with_capacity(200 * n);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", 3 * n);
    for t in 0..n {
        for p in mesh.element_vertices(t) {
            let _ = writeln!(s, "{:.17e} {:.17e} 0", p[0], p[1]);
        }
    }
    let _ = writeln!(s, "CELLS {} {}", n, 4 * n);
    for t in 0..n {
        let _ = writeln!(s, "3 {} {} {}", 3 * t, 3 * t + 1, 3 * t + 2);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", 3 * n);
    for (name, f) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for c in f.coefficients() {
            let _ = writeln!(s, "{c:.17e}");
        }
    }
    let _ = writeln!(s, "CELL_DATA {n}\nSCALARS element int 1\nLOOKUP_TABLE default");
    for t in 0..n {
        let _ = writeln!(s, "{t}");
    }
    s
}

/// An axis-aligned sampling line `x_axis = value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileLine {
    /// Index of the fixed coordinate (0 for `x1 = c`, 1 for `x2 = c`).
    pub axis: usize,
    pub value: f64,
}

impl std::str::FromStr for ProfileLine {
    type Err = Error;

    /// Parses `x1=0` or `x2=0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("profile line `{s}` is not of the form x1=c or x2=c"));
        let (name, value) = s.split_once('=').ok_or_else(bad)?;
        let axis = match name.trim() {
            "x1" => 0,
            "x2" => 1,
            _ => return Err(bad()),
        };
        let value = value.trim().parse().map_err(|_| bad())?;
        Ok(Self { axis, value })
    }
}

/// One sample along a profile line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileSample {
    /// The free coordinate.
    pub s: f64,
    pub element: usize,
    pub value: f64,
}

/// Samples `u` where `line` crosses each element, at both ends of the crossing.
/// Points shared by neighbouring elements appear once per element, so jumps
/// show up as doubled abscissae. Sorted by `(s, element)`.
pub fn extract_profile(mesh: &Mesh, u: &DgFunction, line: ProfileLine) -> Vec<ProfileSample> {
    let (a, b) = (line.axis, 1 - line.axis);
    let scale = mesh.spacing().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut out = Vec::new();
    for t in 0..mesh.num_elements() {
        let vs = mesh.element_vertices(t);
        let mut hits: Vec<f64> = Vec::with_capacity(4);
        for k in 0..3 {
            let (p, q) = (vs[k], vs[(k + 1) % 3]);
            let (dp, dq) = (p[a] - line.value, q[a] - line.value);
            if dp.abs() <= tol {
                hits.push(p[b]);
            }
            if (dp < -tol && dq > tol) || (dp > tol && dq < -tol) {
                let r = dp / (dp - dq);
                hits.push(p[b] + r * (q[b] - p[b]));
            }
        }
        let lo = hits.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = hits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi - lo > tol) {
            continue;
        }
        let g = mesh.geometry(t);
        for s in [lo, hi] {
            let mut x = [0.0; 2];
            x[a] = line.value;
            x[b] = s;
            let lambda = g.barycentric(x);
            out.push(ProfileSample {
                s,
                element: t,
                value: u.value_bary(t, lambda),
            });
        }
    }
    out.sort_by(|p, q| p.s.total_cmp(&q.s).then(p.element.cmp(&q.element)));
    out
}

/// `s,element,value` rows.
pub fn profile_csv(samples: &[ProfileSample]) -> String {
    let mut s = String::from("s,element,value\n");
    for p in samples {
        let _ = writeln!(s, "{:.17e},{},{:.17e}", p.s, p.element, p.value);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_rect, DiagonalRule, Rect};

    fn unit(n: usize) -> Mesh {
        generate_structured_rect(Rect::unit_square(), n, n, DiagonalRule::UniformNe).unwrap()
    }

    #[test]
    fn mass_matrix_closed_form() {
        let m = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let mm = local_mass_matrix(0, m.geometry(0)).unwrap();
        assert!((mm[0][0] - 1.0 / 12.0).abs() < 1e-16);
        assert!((mm[0][1] - 1.0 / 24.0).abs() < 1e-16);
        for row in mm {
            assert!((row.iter().sum::<f64>() - 0.5 / 3.0).abs() < 1e-16);
        }
        let big = Mesh::from_parts(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]], vec![[0, 1, 2]]).unwrap();
        let mb = local_mass_matrix(0, big.geometry(0)).unwrap();
        assert!((mb[1][2] - 4.0 * mm[1][2]).abs() < 1e-16);
    }

    #[test]
    fn mass_matches_quadrature_and_inverse() {
        let mesh = unit(3);
        let rules = Rules::new(4).unwrap();
        let mass = mass_matrix(&mesh);
        for t in [0, 5, 17] {
            let g = mesh.geometry(t);
            for i in 0..3 {
                for j in 0..3 {
                    let q: f64 = map_triangle(&rules.triangle, mesh.element_vertices(t), g.area)
                        .map(|(_, l, w)| w * l[i] * l[j])
                        .sum();
                    assert!((q - mass.get(dof(t, i), dof(t, j))).abs() < 1e-15);
                }
            }
        }
        let prod = mass.matmul(&inverse_mass_matrix(&mesh));
        assert!(prod.max_abs_diff(&CsrMatrix::identity(prod.nrows())) < 1e-12);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let g = TriangleGeometry {
            area: 0.0,
            diameter: 1.0,
            centroid: [0.0, 0.0],
            grad_lambda: [[0.0; 2]; 3],
        };
        assert!(matches!(local_mass_matrix(3, &g), Err(Error::Geometry { element: 3, .. })));
    }

    #[test]
    fn projection_reproduces_affine() {
        let mesh = unit(4);
        let rules = Rules::new(4).unwrap();
        let f = |p: Point| 0.3 - 1.5 * p[0] + 2.0 * p[1];
        let pf = l2_project(&mesh, &rules, f);
        for t in 0..mesh.num_elements() {
            for (k, v) in mesh.element_vertices(t).iter().enumerate() {
                assert!((pf.local(t)[k] - f(*v)).abs() < 1e-12);
            }
        }
        let zero = l2_project(&mesh, &rules, |_| 0.0);
        assert!(zero.coefficients().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn projection_error_is_second_order() {
        let rules = Rules::new(8).unwrap();
        let err = |n: usize| {
            let mesh = unit(n);
            let pf = l2_project(&mesh, &rules, |p| p[0] * p[0]);
            let mut s = 0.0;
            for t in 0..mesh.num_elements() {
                let g = mesh.geometry(t);
                for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
                    s += w * (x[0] * x[0] - pf.value_bary(t, l)).powi(2);
                }
            }
            s.sqrt()
        };
        let ratio = err(4) / err(8);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn evaluation_and_basis_values() {
        let mesh = unit(2);
        let mut f = DgFunction::zeros(&mesh);
        f.coefficients_mut()[dof(1, 0)] = 1.0;
        let v = mesh.element_vertices(1);
        assert!((f.evaluate(&mesh, 1, v[0]).unwrap() - 1.0).abs() < 1e-15);
        let mid = [0.5 * (v[1][0] + v[2][0]), 0.5 * (v[1][1] + v[2][1])];
        assert!(f.evaluate(&mesh, 1, mid).unwrap().abs() < 1e-15);
        assert!(f.evaluate(&mesh, 99, mid).is_err());

        let a = DgFunction::interpolate(&mesh, |p| 1.0 + p[0] - 3.0 * p[1]);
        let c = mesh.geometry(3).centroid;
        assert!((a.evaluate(&mesh, 3, c).unwrap() - (1.0 + c[0] - 3.0 * c[1])).abs() < 1e-14);
    }

    #[test]
    fn vtk_layout() {
        let mesh = unit(2);
        let f = DgFunction::interpolate(&mesh, |p| p[0]);
        let s = to_vtk(&mesh, "test", &[("u_h", &f)]);
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains("POINTS 24 double"));
        assert!(s.contains("CELLS 8 32"));
        assert!(s.contains("POINT_DATA 24"));
        assert_eq!(f.to_csv().lines().count(), 25);
    }

    #[test]
    fn profile_of_continuous_function_is_exact() {
        let m = unit(4);
        let u = DgFunction::interpolate(&m, |x| 1.0 + 2.0 * x[0] - x[1]);
        for line in ["x1=0", "x1=0.3", "x2=0.5", "x2=1"] {
            let line: ProfileLine = line.parse().unwrap();
            let samples = extract_profile(&m, &u, line);
            assert!(!samples.is_empty());
            for p in &samples {
                let mut x = [0.0; 2];
                x[line.axis] = line.value;
                x[1 - line.axis] = p.s;
                assert!((p.value - (1.0 + 2.0 * x[0] - x[1])).abs() < 1e-12);
            }
            assert!(samples.windows(2).all(|w| w[0].s <= w[1].s));
            assert_eq!(samples.first().unwrap().s, 0.0);
            assert!((samples.last().unwrap().s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_keeps_jumps_as_doubled_points() {
        let m = unit(2);
        // piecewise constant by element index: every interior crossing jumps
        let mut u = DgFunction::zeros(&m);
        for t in 0..m.num_elements() {
            u.coefficients_mut()[3 * t..3 * t + 3].fill(t as f64);
        }
        let samples = extract_profile(&m, &u, "x1=0.25".parse().unwrap());
        let interior: Vec<_> = samples.iter().filter(|p| p.s > 0.0 && p.s < 1.0).collect();
        assert!(interior.windows(2).any(|w| w[0].s == w[1].s && w[0].value != w[1].value));
        assert!("y=1".parse::<ProfileLine>().is_err());
    }
}
