//! Bilinear forms and right-hand sides of the discrete problems.
//!
//! Matrices follow the convention `a(v, w) = wᵀ A v`: rows index test
//! functions, columns trial functions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calculus::{build_div_zeta, build_gradient, boundary_load, Axis, BoundaryMode, DivSide, Side};
use crate::mesh::{Mesh, Point};
use crate::problems::ProblemSpec;
use crate::quadrature::{map_triangle, Rules};
use crate::space::{dof, edge_points, load_vector, mass_matrix, EdgePoint};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Jump-penalty weights `σ_e ≥ 0` of the diffusion form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PenaltyPolicy {
    Constant(f64),
    PerEdge(Vec<f64>),
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        PenaltyPolicy::Constant(0.0)
    }
}

impl PenaltyPolicy {
    pub fn constant(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("penalty must be finite and >= 0, got {sigma}")));
        }
        Ok(PenaltyPolicy::Constant(sigma))
    }

    pub fn zero() -> Self {
        PenaltyPolicy::Constant(0.0)
    }

    #[inline]
    pub fn sigma(&self, e: usize) -> f64 {
        match self {
            PenaltyPolicy::Constant(s) => *s,
            PenaltyPolicy::PerEdge(v) => v[e],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PenaltyPolicy::Constant(s) => *s == 0.0,
            PenaltyPolicy::PerEdge(v) => v.iter().all(|&s| s == 0.0),
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let bad = |s: f64| !(s >= 0.0) || !s.is_finite();
        match self {
            PenaltyPolicy::Constant(s) if bad(*s) => {
                Err(Error::InvalidArgument(format!("penalty must be finite and >= 0, got {s}")))
            }
            PenaltyPolicy::PerEdge(v) if v.len() != mesh.num_edges() => Err(Error::InvalidArgument(format!(
                "per-edge penalty has {} entries for {} edges",
                v.len(),
                mesh.num_edges()
            ))),
            PenaltyPolicy::PerEdge(v) => match v.iter().position(|&s| bad(s)) {
                Some(e) => Err(Error::InvalidArgument(format!("penalty on edge {e} is {} (must be >= 0)", v[e]))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PenaltyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyPolicy::Constant(s) => write!(f, "{s}"),
            PenaltyPolicy::PerEdge(_) => f.write_str("per-edge"),
        }
    }
}

/// How the convection-reaction form is assembled. Both give the same matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvectionPath {
    /// Through the averaged discrete divergence operator.
    Calculus,
    /// Through the equivalent centered-flux edge terms.
    #[default]
    CenteredFlux,
}

impl FromStr for ConvectionPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calculus" => Ok(ConvectionPath::Calculus),
            "centered-flux" | "centered" => Ok(ConvectionPath::CenteredFlux),
            _ => Err(Error::Parse(format!("unknown assembly path `{s}` (calculus | centered-flux)"))),
        }
    }
}

impl fmt::Display for ConvectionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvectionPath::Calculus => "calculus",
            ConvectionPath::CenteredFlux => "centered-flux",
        })
    }
}

type Scalar<'a> = &'a dyn Fn(Point) -> f64;
type Vector<'a> = &'a dyn Fn(Point) -> [f64; 2];

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Adds `weight · u_b · w_a` for two traces on one edge node.
#[inline]
#[allow(clippy::too_many_arguments)]
fn push_pair(b: &mut TripletBuilder, ta: usize, la: [f64; 3], tb: usize, lb: [f64; 3], weight: f64) {
    for ka in 0..3 {
        for kb in 0..3 {
            b.push(dof(ta, ka), dof(tb, kb), weight * la[ka] * lb[kb]);
        }
    }
}

/// The two traces of an interior edge as `(element, barycentric, jump sign)`.
fn sides(mesh: &Mesh, e: usize, p: &EdgePoint) -> [(usize, [f64; 3], f64); 2] {
    let edge = &mesh.edges()[e];
    [
        (edge.plus, p.plus, 1.0),
        (edge.minus.expect("interior edge"), p.minus.expect("interior edge"), -1.0),
    ]
}

/// `((c) v, w)` by quadrature.
pub fn assemble_weighted_mass(mesh: &Mesh, rules: &Rules, c: Scalar<'_>) -> CsrMatrix {
    let n = 3 * mesh.num_elements();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements());
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let mut local = [[0.0; 3]; 3];
        for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let cw = c(x) * w;
            for (a, row) in local.iter_mut().enumerate() {
                for (bb, v) in row.iter_mut().enumerate() {
                    *v += cw * l[a] * l[bb];
                }
            }
        }
        for (a, row) in local.iter().enumerate() {
            for (bb, &v) in row.iter().enumerate() {
                b.push(dof(t, a), dof(t, bb), v);
            }
        }
    }
    b.build()
}

/// `∫_{∂Ω⁻} |ζ·n| v w`, with the inflow set decided node by node
/// (`ζ·n = 0` is not inflow).
pub fn assemble_inflow(mesh: &Mesh, rules: &Rules, zeta: Vector<'_>) -> CsrMatrix {
    let n = 3 * mesh.num_elements();
    let mut b = TripletBuilder::new(n, n);
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let zn = dot(zeta(p.x), edge.normal);
            if zn < 0.0 {
                push_pair(&mut b, edge.plus, p.plus, edge.plus, p.plus, p.weight * (-zn));
            }
        }
    }
    b.build()
}

/// `∫_{∂Ω⁻} |ζ·n| g w`.
pub fn inflow_load(mesh: &Mesh, rules: &Rules, zeta: Vector<'_>, g: Scalar<'_>) -> Vec<f64> {
    let mut out = vec![0.0; 3 * mesh.num_elements()];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let zn = dot(zeta(p.x), edge.normal);
            if zn < 0.0 {
                let s = p.weight * (-zn) * g(p.x);
                for k in 0..3 {
                    out[dof(edge.plus, k)] += s * p.plus[k];
                }
            }
        }
    }
    out
}

/// The convection-reaction form `(Div̄(ζv), w) + ((γ − ∇·ζ) v, w) + ∫_{∂Ω⁻}|ζ·n| v w`.
pub fn assemble_convection_reaction(
    mesh: &Mesh,
    rules: &Rules,
    zeta: Vector<'_>,
    div_zeta: Scalar<'_>,
    gamma: Scalar<'_>,
    path: ConvectionPath,
) -> CsrMatrix {
    let reaction = |x: Point| gamma(x) - div_zeta(x);
    let transport = match path {
        ConvectionPath::Calculus => {
            mass_matrix(mesh).matmul(&build_div_zeta(mesh, rules, zeta, DivSide::Average).matrix)
        }
        ConvectionPath::CenteredFlux => centered_flux(mesh, rules, zeta, div_zeta),
    };
    transport
        .add(&assemble_weighted_mass(mesh, rules, &reaction))
        .add(&assemble_inflow(mesh, rules, zeta))
}

/// `(∇·(ζv), w)_T − ⟨ζ·n [v], {w}⟩_interior`.
fn centered_flux(mesh: &Mesh, rules: &Rules, zeta: Vector<'_>, div_zeta: Scalar<'_>) -> CsrMatrix {
    let n = 3 * mesh.num_elements();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements() + 36 * mesh.num_edges());
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let mut local = [[0.0; 3]; 3];
        for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let z = zeta(x);
            let dz = div_zeta(x);
            for (a, row) in local.iter_mut().enumerate() {
                for (bb, v) in row.iter_mut().enumerate() {
                    *v += w * (dz * l[bb] + dot(z, g.grad_lambda[bb])) * l[a];
                }
            }
        }
        for (a, row) in local.iter().enumerate() {
            for (bb, &v) in row.iter().enumerate() {
                b.push(dof(t, a), dof(t, bb), v);
            }
        }
    }
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let zn = dot(zeta(p.x), edge.normal);
            for (tb, lb, sb) in sides(mesh, e, &p) {
                for (ta, la, _) in sides(mesh, e, &p) {
                    push_pair(&mut b, ta, la, tb, lb, -p.weight * zn * sb * 0.5);
                }
            }
        }
    }
    b.build()
}

/// The upwind penalty `⟨½|ζ·n| [v], [w]⟩_interior`.
pub fn assemble_upwind_penalty(mesh: &Mesh, rules: &Rules, zeta: Vector<'_>) -> CsrMatrix {
    jump_form(mesh, rules, false, |e, p| 0.5 * dot(zeta(p.x), mesh.edges()[e].normal).abs())
}

/// `Σ_e ∫_e c(e, x) [v][w]` over interior edges, and boundary edges when
/// `boundary` is set (there `[v] = v⁺`).
pub(crate) fn jump_form(mesh: &Mesh, rules: &Rules, boundary: bool, c: impl Fn(usize, &EdgePoint) -> f64) -> CsrMatrix {
    let n = 3 * mesh.num_elements();
    let mut b = TripletBuilder::with_capacity(n, n, 36 * mesh.num_edges());
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() && !boundary {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let s = p.weight * c(e, &p);
            if s == 0.0 {
                continue;
            }
            if edge.is_boundary() {
                push_pair(&mut b, edge.plus, p.plus, edge.plus, p.plus, s);
            } else {
                for (tb, lb, sb) in sides(mesh, e, &p) {
                    for (ta, la, sa) in sides(mesh, e, &p) {
                        push_pair(&mut b, ta, la, tb, lb, s * sa * sb);
                    }
                }
            }
        }
    }
    b.build()
}

/// `Σ_{all edges} σ_e/h_e ∫ [v][w]`.
pub fn assemble_jump_penalty(mesh: &Mesh, rules: &Rules, penalty: &PenaltyPolicy) -> Result<CsrMatrix> {
    penalty.validate(mesh)?;
    Ok(jump_form(mesh, rules, true, |e, _| penalty.sigma(e) / mesh.edges()[e].length))
}

/// The dual-wind diffusion form
/// `½ Σ_± (∇^±_{h,0} v, ∇^±_{h,0} w) + Σ_e σ_e/h_e ⟨[v], [w]⟩`.
pub fn assemble_dwdg_diffusion(mesh: &Mesh, rules: &Rules, penalty: &PenaltyPolicy) -> Result<CsrMatrix> {
    let jumps = assemble_jump_penalty(mesh, rules, penalty)?;
    let mass = mass_matrix(mesh);
    let mut a = jumps;
    for side in Side::BOTH {
        for d in build_gradient(mesh, rules, side, BoundaryMode::ZeroData) {
            let g = d.matrix.transpose().matmul(&mass.matmul(&d.matrix));
            a = a.add_scaled(1.0, &g, 0.5);
        }
    }
    Ok(a)
}

/// Right-hand side of the full problem:
/// `(f, w) + ∫_{∂Ω⁻}|ζ·n| g w − ε ⟨g, ∇̄_{h,0} w · n − σ_e/h_e w⟩_∂Ω`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_rhs_full(
    mesh: &Mesh,
    rules: &Rules,
    f: Scalar<'_>,
    g: Scalar<'_>,
    zeta: Vector<'_>,
    eps: f64,
    penalty: &PenaltyPolicy,
) -> Result<Vec<f64>> {
    penalty.validate(mesh)?;
    let mut rhs = load_vector(mesh, rules, f);
    for (r, v) in rhs.iter_mut().zip(inflow_load(mesh, rules, zeta, g)) {
        *r += v;
    }
    if eps == 0.0 {
        return Ok(rhs);
    }
    let mut boundary = vec![0.0; rhs.len()];
    for axis in Axis::BOTH {
        let avg = build_gradient(mesh, rules, Side::Plus, BoundaryMode::ZeroData)[axis.index()]
            .average(&build_gradient(mesh, rules, Side::Minus, BoundaryMode::ZeroData)[axis.index()]);
        let l = boundary_load(mesh, rules, axis, g);
        for (b, v) in boundary.iter_mut().zip(avg.matrix.transpose().mul_vec(&l)) {
            *b += v;
        }
    }
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let s = penalty.sigma(e) / edge.length;
        if s == 0.0 {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let c = s * p.weight * g(p.x);
            for k in 0..3 {
                boundary[dof(edge.plus, k)] -= c * p.plus[k];
            }
        }
    }
    for (r, b) in rhs.iter_mut().zip(boundary) {
        *r -= eps * b;
    }
    Ok(rhs)
}

/// Assembly options independent of the problem data.
#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyOptions {
    pub penalty: PenaltyPolicy,
    pub path: ConvectionPath,
    pub quad_degree: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            penalty: PenaltyPolicy::default(),
            path: ConvectionPath::default(),
            quad_degree: 4,
        }
    }
}

/// All assembled pieces of one discrete problem.
#[derive(Clone, Debug)]
pub struct FormMatrices {
    pub a_ar: CsrMatrix,
    pub a_upw_penalty: CsrMatrix,
    /// Zero for the reduced problem.
    pub a_d: CsrMatrix,
    pub a_total: CsrMatrix,
    pub rhs: Vec<f64>,
    pub eps: f64,
    pub penalty: PenaltyPolicy,
    pub path: ConvectionPath,
}

impl FormMatrices {
    /// `a_ar + a_upw_penalty`.
    pub fn a_upw(&self) -> CsrMatrix {
        self.a_ar.add(&self.a_upw_penalty)
    }
}

/// The reduced (`ε = 0`) upwind problem, whatever `problem.eps` says.
pub fn assemble_reduced(mesh: &Mesh, problem: &ProblemSpec, options: &AssemblyOptions) -> Result<FormMatrices> {
    let rules = Rules::new(options.quad_degree)?;
    let (a_ar, a_upw_penalty) = convection_parts(mesh, &rules, problem, options.path);
    let rhs = assemble_rhs_full(mesh, &rules, &*problem.f, &*problem.g, &*problem.zeta, 0.0, &options.penalty)?;
    let n = a_ar.nrows();
    Ok(FormMatrices {
        a_total: a_ar.add(&a_upw_penalty),
        a_ar,
        a_upw_penalty,
        a_d: CsrMatrix::zeros(n, n),
        rhs,
        eps: 0.0,
        penalty: options.penalty.clone(),
        path: options.path,
    })
}

fn convection_parts(mesh: &Mesh, rules: &Rules, problem: &ProblemSpec, path: ConvectionPath) -> (CsrMatrix, CsrMatrix) {
    (
        assemble_convection_reaction(mesh, rules, &*problem.zeta, &*problem.div_zeta, &*problem.gamma, path),
        assemble_upwind_penalty(mesh, rules, &*problem.zeta),
    )
}

/// The full problem `ε a_d + a_upw`; falls back to the reduced problem when `ε = 0`.
pub fn assemble(mesh: &Mesh, problem: &ProblemSpec, options: &AssemblyOptions) -> Result<FormMatrices> {
    options.penalty.validate(mesh)?;
    problem.check_assumption();
    if problem.is_reduced() {
        return assemble_reduced(mesh, problem, options);
    }
    let rules = Rules::new(options.quad_degree)?;
    let (a_ar, a_upw_penalty) = convection_parts(mesh, &rules, problem, options.path);
    let a_d = assemble_dwdg_diffusion(mesh, &rules, &options.penalty)?;
    let a_total = a_ar.add(&a_upw_penalty).add_scaled(1.0, &a_d, problem.eps);
    let rhs = assemble_rhs_full(
        mesh,
        &rules,
        &*problem.f,
        &*problem.g,
        &*problem.zeta,
        problem.eps,
        &options.penalty,
    )?;
    Ok(FormMatrices {
        a_ar,
        a_upw_penalty,
        a_d,
        a_total,
        rhs,
        eps: problem.eps,
        penalty: options.penalty.clone(),
        path: options.path,
    })
}
