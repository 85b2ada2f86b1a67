//! Discrete partial derivatives, gradients and ζ-weighted divergences on the
//! broken P1 space, each built from its integration-by-parts functional
//!
//! ```text
//! (D v, φ) = ⟨Q(v) n_i, [φ]⟩ − (v, ∂_i φ)
//! ```
//!
//! followed by a block mass solve.

use crate::mesh::{Mesh, Point};
use crate::quadrature::{map_triangle, Rules};
use crate::space::{dof, edge_points, inverse_mass_matrix, mass_matrix, DgFunction};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Components `|n_i|` below this fraction of `|n|` count as zero.
pub const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X1, Axis::X2];

    #[inline]
    pub const fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];

    #[inline]
    pub const fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub const fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

/// `sgn(n^(i))` with the tolerance above; `0.0` selects the average.
#[inline]
pub fn normal_sign(n: Point, axis: Axis) -> f64 {
    let c = n[axis.index()];
    if c.abs() <= SIGN_TOLERANCE * n[0].hypot(n[1]) {
        0.0
    } else {
        c.signum()
    }
}

/// Which trace an edge operator `Q_i^±` picks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceTag {
    PlusSide,
    MinusSide,
    Average,
    /// Boundary edge: the only available trace.
    OwnSide,
}

impl TraceTag {
    /// Coefficients on `(v⁺, v⁻)`.
    #[inline]
    pub fn weights(self) -> (f64, f64) {
        match self {
            TraceTag::PlusSide | TraceTag::OwnSide => (1.0, 0.0),
            TraceTag::MinusSide => (0.0, 1.0),
            TraceTag::Average => (0.5, 0.5),
        }
    }
}

/// Tags of `Q_i⁺` for every edge and direction; `Q_i⁻` is the mirror image.
#[derive(Clone, Debug)]
pub struct TraceSelector {
    tags: Vec<[TraceTag; 2]>,
}

impl TraceSelector {
    pub fn new(mesh: &Mesh) -> Self {
        let tags = mesh
            .edges()
            .iter()
            .map(|e| {
                Axis::BOTH.map(|axis| {
                    if e.is_boundary() {
                        TraceTag::OwnSide
                    } else {
                        match normal_sign(e.normal, axis) {
                            s if s > 0.0 => TraceTag::PlusSide,
                            s if s < 0.0 => TraceTag::MinusSide,
                            _ => TraceTag::Average,
                        }
                    }
                })
            })
            .collect();
        Self { tags }
    }

    pub fn tag(&self, e: usize, axis: Axis, side: Side) -> TraceTag {
        let t = self.tags[e][axis.index()];
        match (side, t) {
            (Side::Minus, TraceTag::PlusSide) => TraceTag::MinusSide,
            (Side::Minus, TraceTag::MinusSide) => TraceTag::PlusSide,
            _ => t,
        }
    }

    #[inline]
    pub fn weights(&self, e: usize, axis: Axis, side: Side) -> (f64, f64) {
        self.tag(e, axis, side).weights()
    }
}

/// How boundary edges enter a discrete partial derivative.
#[derive(Clone, Copy)]
pub enum BoundaryMode<'a> {
    /// All edges, with `Q(v) = v⁺` on the boundary.
    Natural,
    /// Interior edges only.
    ZeroData,
    /// Interior edges plus the affine load `⟨g n_i, φ⟩` on the boundary.
    Data(&'a dyn Fn(Point) -> f64),
}

impl std::fmt::Debug for BoundaryMode<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryMode::Natural => f.write_str("Natural"),
            BoundaryMode::ZeroData => f.write_str("ZeroData"),
            BoundaryMode::Data(_) => f.write_str("Data(..)"),
        }
    }
}

/// A discrete operator `v ↦ A v + b` on coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    pub matrix: CsrMatrix,
    pub load: Option<Vec<f64>>,
}

impl SparseOperator {
    pub fn linear(matrix: CsrMatrix) -> Self {
        Self { matrix, load: None }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.matrix.mul_vec(v);
        if let Some(b) = &self.load {
            out.iter_mut().zip(b).for_each(|(o, b)| *o += b);
        }
        out
    }

    pub fn apply_fn(&self, v: &DgFunction) -> DgFunction {
        let c = self.apply(v.coefficients());
        DgFunction::from_coefficients_unchecked(c)
    }

    /// `½(self + other)`, loads included.
    pub fn average(&self, other: &SparseOperator) -> SparseOperator {
        let load = match (&self.load, &other.load) {
            (None, None) => None,
            (a, b) => {
                let n = self.matrix.nrows();
                let z = vec![0.0; n];
                let a = a.as_deref().unwrap_or(&z);
                let b = b.as_deref().unwrap_or(&z);
                Some(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
            }
        };
        SparseOperator {
            matrix: self.matrix.add_scaled(0.5, &other.matrix, 0.5),
            load,
        }
    }
}

/// Assembles the matrix `B[a, b] = ⟨ζ_i Q(λ_b) n_i, [λ_a]⟩ − (ζ_i λ_b, ∂_i λ_a)`
/// (with `ζ_i ≡ 1` when no field is given). Rows are test functions.
pub(crate) fn partial_functional(
    mesh: &Mesh,
    rules: &Rules,
    axis: Axis,
    side: Side,
    include_boundary: bool,
    zeta: Option<&dyn Fn(Point) -> [f64; 2]>,
) -> CsrMatrix {
    let i = axis.index();
    let n = 3 * mesh.num_elements();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements() + 36 * mesh.num_edges());
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let mut local = [[0.0; 3]; 3];
        match zeta {
            None => {
                for (a, row) in local.iter_mut().enumerate() {
                    row.fill(-g.grad_lambda[a][i] * g.area / 3.0);
                }
            }
            Some(z) => {
                for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
                    let zi = z(x)[i] * w;
                    for (a, row) in local.iter_mut().enumerate() {
                        for (bb, v) in row.iter_mut().enumerate() {
                            *v -= zi * l[bb] * g.grad_lambda[a][i];
                        }
                    }
                }
            }
        }
        for (a, row) in local.iter().enumerate() {
            for (bb, &v) in row.iter().enumerate() {
                b.push(dof(t, a), dof(t, bb), v);
            }
        }
    }
    let selector = TraceSelector::new(mesh);
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() && !include_boundary {
            continue;
        }
        let ni = edge.normal[i];
        let (ap, am) = selector.weights(e, axis, side);
        let tp = edge.plus;
        for p in edge_points(mesh, &rules.edge, e) {
            let s = p.weight * ni * zeta.map_or(1.0, |z| z(p.x)[i]);
            // trial traces: (element, barycentric, trace weight)
            let mut trial = [(tp, p.plus, ap), (0, [0.0; 3], 0.0)];
            // test jumps: (element, barycentric, sign in [φ])
            let mut test = [(tp, p.plus, 1.0), (0, [0.0; 3], 0.0)];
            if let (Some(tm), Some(lm)) = (edge.minus, p.minus) {
                trial[1] = (tm, lm, am);
                test[1] = (tm, lm, -1.0);
            }
            for &(ta, la, sa) in &test {
                if sa == 0.0 {
                    continue;
                }
                for &(tb, lb, wb) in &trial {
                    if wb == 0.0 {
                        continue;
                    }
                    for ka in 0..3 {
                        for kb in 0..3 {
                            b.push(dof(ta, ka), dof(tb, kb), s * sa * wb * la[ka] * lb[kb]);
                        }
                    }
                }
            }
        }
    }
    b.build()
}

/// `⟨g n_i, φ_a⟩` over boundary edges, before any mass solve.
pub fn boundary_load(mesh: &Mesh, rules: &Rules, axis: Axis, g: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; 3 * mesh.num_elements()];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let ni = edge.normal[axis.index()];
        for p in edge_points(mesh, &rules.edge, e) {
            let s = p.weight * ni * g(p.x);
            for k in 0..3 {
                out[dof(edge.plus, k)] += s * p.plus[k];
            }
        }
    }
    out
}

fn solve_mass(mesh: &Mesh, b: &CsrMatrix) -> CsrMatrix {
    inverse_mass_matrix(mesh).matmul(b)
}

/// The one-sided discrete partial derivative `∂^±_{h,x_i}` in the given
/// boundary mode.
pub fn build_partial(mesh: &Mesh, rules: &Rules, axis: Axis, side: Side, mode: BoundaryMode<'_>) -> SparseOperator {
    let include_boundary = matches!(mode, BoundaryMode::Natural);
    let matrix = solve_mass(mesh, &partial_functional(mesh, rules, axis, side, include_boundary, None));
    let load = match mode {
        BoundaryMode::Data(g) => {
            let mut l = boundary_load(mesh, rules, axis, g);
            crate::space::apply_inverse_mass(mesh, &mut l);
            Some(l)
        }
        _ => None,
    };
    SparseOperator { matrix, load }
}

/// Both components of `∇^±_h`.
pub fn build_gradient(mesh: &Mesh, rules: &Rules, side: Side, mode: BoundaryMode<'_>) -> [SparseOperator; 2] {
    Axis::BOTH.map(|a| build_partial(mesh, rules, a, side, mode))
}

/// Both components of the averaged gradient `½(∇⁺_h + ∇⁻_h)`.
pub fn build_avg_gradient(mesh: &Mesh, rules: &Rules, mode: BoundaryMode<'_>) -> [SparseOperator; 2] {
    Axis::BOTH.map(|a| {
        build_partial(mesh, rules, a, Side::Plus, mode).average(&build_partial(mesh, rules, a, Side::Minus, mode))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DivSide {
    Plus,
    Minus,
    Average,
}

/// `v ↦ Div^±_h(ζ v)` (or the average of both), natural boundary mode.
pub fn build_div_zeta(mesh: &Mesh, rules: &Rules, zeta: &dyn Fn(Point) -> [f64; 2], side: DivSide) -> SparseOperator {
    let one = |s: Side| {
        let b = partial_functional(mesh, rules, Axis::X1, s, true, Some(zeta));
        b.add(&partial_functional(mesh, rules, Axis::X2, s, true, Some(zeta)))
    };
    let b = match side {
        DivSide::Plus => one(Side::Plus),
        DivSide::Minus => one(Side::Minus),
        DivSide::Average => one(Side::Plus).add_scaled(0.5, &one(Side::Minus), 0.5),
    };
    SparseOperator::linear(solve_mass(mesh, &b))
}

fn relative(terms: &[f64]) -> f64 {
    let sum: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    if scale == 0.0 {
        0.0
    } else {
        sum.abs() / scale
    }
}

/// `(f v, φ)` over all elements by quadrature.
pub(crate) fn weighted_inner(mesh: &Mesh, rules: &Rules, f: &dyn Fn(Point) -> f64, v: &DgFunction, phi: &DgFunction) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            s += w * f(x) * v.value_bary(t, l) * phi.value_bary(t, l);
        }
    }
    s
}

/// Relative residual of the discrete integration-by-parts identity
///
/// ```text
/// (Div^±(ζv), φ) + (Div^∓(ζφ), v) = (φ, (∇·ζ) v) + ⟨ζ·n, vφ⟩_∂Ω.
/// ```
pub fn check_ibp_identity(
    mesh: &Mesh,
    rules: &Rules,
    zeta: &dyn Fn(Point) -> [f64; 2],
    div_zeta: &dyn Fn(Point) -> f64,
    v: &DgFunction,
    phi: &DgFunction,
    side: Side,
) -> f64 {
    let (s, o) = match side {
        Side::Plus => (DivSide::Plus, DivSide::Minus),
        Side::Minus => (DivSide::Minus, DivSide::Plus),
    };
    let mass = mass_matrix(mesh);
    let t1 = mass.form(&build_div_zeta(mesh, rules, zeta, s).apply(v.coefficients()), phi.coefficients());
    let t2 = mass.form(&build_div_zeta(mesh, rules, zeta, o).apply(phi.coefficients()), v.coefficients());
    let t3 = weighted_inner(mesh, rules, div_zeta, v, phi);
    let mut t4 = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let z = zeta(p.x);
            let zn = z[0] * edge.normal[0] + z[1] * edge.normal[1];
            t4 += p.weight * zn * v.value_bary(edge.plus, p.plus) * phi.value_bary(edge.plus, p.plus);
        }
    }
    relative(&[t1, t2, -t3, -t4])
}

/// Relative residual of the centered-flux form of the averaged divergence
///
/// ```text
/// (Div̄(ζv), φ) = (∇·(ζv), φ)_T − ⟨ζ·n [v], {φ}⟩_interior.
/// ```
pub fn check_centered_flux_equiv(
    mesh: &Mesh,
    rules: &Rules,
    zeta: &dyn Fn(Point) -> [f64; 2],
    div_zeta: &dyn Fn(Point) -> f64,
    v: &DgFunction,
    phi: &DgFunction,
) -> f64 {
    let mass = mass_matrix(mesh);
    let lhs = mass.form(
        &build_div_zeta(mesh, rules, zeta, DivSide::Average).apply(v.coefficients()),
        phi.coefficients(),
    );
    let mut volume = 0.0;
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let gv = v.gradient(mesh, t);
        for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let z = zeta(x);
            let dv = div_zeta(x) * v.value_bary(t, l) + z[0] * gv[0] + z[1] * gv[1];
            volume += w * dv * phi.value_bary(t, l);
        }
    }
    let mut flux = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let z = zeta(p.x);
            let zn = z[0] * edge.normal[0] + z[1] * edge.normal[1];
            let (vp, vm) = v.traces(mesh, e, &p);
            let (pp, pm) = phi.traces(mesh, e, &p);
            let (vm, pm) = (vm.unwrap_or(0.0), pm.unwrap_or(0.0));
            flux += p.weight * zn * (vp - vm) * 0.5 * (pp + pm);
        }
    }
    relative(&[lhs, -volume, flux])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_rect, DiagonalRule, Rect};

    fn unit(n: usize) -> Mesh {
        generate_structured_rect(Rect::unit_square(), n, n, DiagonalRule::UniformNe).unwrap()
    }

    fn rules() -> Rules {
        Rules::new(4).unwrap()
    }

    fn touches_boundary(mesh: &Mesh, t: usize) -> bool {
        mesh.element_edges(t).iter().any(|&e| mesh.edges()[e].is_boundary())
    }

    #[test]
    fn sign_tolerance_and_tags() {
        assert_eq!(normal_sign([1.0, 1e-14], Axis::X2), 0.0);
        assert_eq!(normal_sign([-0.6, 0.8], Axis::X1), -1.0);
        let mesh = unit(2);
        let sel = TraceSelector::new(&mesh);
        for (e, edge) in mesh.edges().iter().enumerate() {
            for axis in Axis::BOTH {
                let (p, m) = (sel.tag(e, axis, Side::Plus), sel.tag(e, axis, Side::Minus));
                if edge.is_boundary() {
                    assert_eq!((p, m), (TraceTag::OwnSide, TraceTag::OwnSide));
                } else {
                    let (a, b) = (p.weights(), m.weights());
                    assert_eq!(a.0 + b.0, 1.0);
                    assert_eq!(a.1 + b.1, 1.0);
                }
            }
        }
    }

    #[test]
    fn continuous_affine_natural_mode() {
        let mesh = unit(4);
        let v = DgFunction::interpolate(&mesh, |p| 0.7 + 2.0 * p[0] - 3.0 * p[1]);
        for side in Side::BOTH {
            let g = build_gradient(&mesh, &rules(), side, BoundaryMode::Natural);
            let (d1, d2) = (g[0].apply(v.coefficients()), g[1].apply(v.coefficients()));
            assert!(d1.iter().all(|x| (x - 2.0).abs() < 1e-12));
            assert!(d2.iter().all(|x| (x + 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_data_mode_differs_only_near_boundary() {
        let mesh = unit(4);
        let v = DgFunction::interpolate(&mesh, |p| 1.0 + 2.0 * p[0] + p[1]);
        let d = build_partial(&mesh, &rules(), Axis::X1, Side::Plus, BoundaryMode::ZeroData).apply(v.coefficients());
        let mut differs = false;
        for t in 0..mesh.num_elements() {
            let local = &d[3 * t..3 * t + 3];
            if touches_boundary(&mesh, t) {
                differs |= local.iter().any(|x| (x - 2.0).abs() > 1e-8);
            } else {
                assert!(local.iter().all(|x| (x - 2.0).abs() < 1e-12));
            }
        }
        assert!(differs);

        // with g equal to the trace the data mode recovers the exact slope
        let g = |p: Point| 1.0 + 2.0 * p[0] + p[1];
        let d = build_partial(&mesh, &rules(), Axis::X1, Side::Minus, BoundaryMode::Data(&g)).apply(v.coefficients());
        assert!(d.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn interior_support_modes_agree() {
        let mesh = unit(4);
        let mut v = DgFunction::zeros(&mesh);
        let interior: Vec<usize> = (0..mesh.num_elements()).filter(|&t| !touches_boundary(&mesh, t)).collect();
        v.coefficients_mut()[dof(interior[0], 1)] = 1.0;
        for axis in Axis::BOTH {
            let a = build_partial(&mesh, &rules(), axis, Side::Plus, BoundaryMode::Natural).apply(v.coefficients());
            let b = build_partial(&mesh, &rules(), axis, Side::Plus, BoundaryMode::ZeroData).apply(v.coefficients());
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-13));
        }
    }

    #[test]
    fn avg_gradient_of_zero_and_affine() {
        let mesh = unit(3);
        let g = build_avg_gradient(&mesh, &rules(), BoundaryMode::Natural);
        assert!(g[0].apply(&vec![0.0; 3 * mesh.num_elements()]).iter().all(|&x| x == 0.0));
        let v = DgFunction::interpolate(&mesh, |p| p[0] - 4.0 * p[1]);
        assert!(g[1].apply(v.coefficients()).iter().all(|x| (x + 4.0).abs() < 1e-12));
    }

    #[test]
    fn divergence_examples() {
        let mesh = unit(4);
        let r = rules();
        let c = |_: Point| [0.3, -1.1];
        let v = DgFunction::interpolate(&mesh, |p| 2.0 * p[0] + 5.0 * p[1]);
        let d = build_div_zeta(&mesh, &r, &c, DivSide::Average).apply(v.coefficients());
        assert!(d.iter().all(|x| (x - (0.6 - 5.5)).abs() < 1e-12));

        let radial = |p: Point| p;
        let one = DgFunction::interpolate(&mesh, |_| 1.0);
        let d = build_div_zeta(&mesh, &r, &radial, DivSide::Average).apply(one.coefficients());
        assert!(d.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn identities_on_fixed_data() {
        let mesh = unit(4);
        let r = rules();
        let radial = |p: Point| p;
        let two = |_: Point| 2.0;
        let v = DgFunction::from_coefficients(
            &mesh,
            (0..96).map(|k| ((k * 37 % 17) as f64 - 8.0) / 5.0).collect(),
        )
        .unwrap();
        let phi = DgFunction::from_coefficients(&mesh, (0..96).map(|k| ((k * 13 % 11) as f64).sin()).collect()).unwrap();
        for side in Side::BOTH {
            assert!(check_ibp_identity(&mesh, &r, &radial, &two, &v, &phi, side) < 1e-12);
        }
        assert!(check_centered_flux_equiv(&mesh, &r, &radial, &two, &v, &phi) < 1e-12);
    }
}
