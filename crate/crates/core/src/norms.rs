//! Mesh-dependent norms of discrete functions and of errors `u − u_h`,
//! optionally restricted to a set of elements, plus a dense inf-sup estimator.
//!
//! Every norm is assembled from the same handful of squared terms
//! ([`NormTerms`]), so the relations between them hold by construction and
//! can be recomputed term by term.

use serde::Serialize;

use crate::assembly::{assemble_dwdg_diffusion, assemble_upwind_penalty, jump_form, PenaltyPolicy};
use crate::calculus::{build_gradient, Axis, BoundaryMode, Side, SparseOperator};
use crate::mesh::{Mesh, Point};
use crate::problems::{ExactSolution, ProblemSpec};
use crate::quadrature::{map_triangle, Rules};
use crate::space::{apply_inverse_mass, dof, edge_points, mass_matrix, DgFunction};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Degree used for error quadrature against exact solutions.
pub const ERROR_QUAD_DEGREE: usize = 8;
/// Second degree for the saturation check.
pub const CHECK_QUAD_DEGREE: usize = 6;
/// Relative disagreement between the two degrees that flags under-integration.
pub const SATURATION_THRESHOLD: f64 = 0.05;
/// Norm values at or below this are excluded from the saturation check.
pub const SATURATION_FLOOR: f64 = 1e-12;

/// What a norm is taken of.
#[derive(Clone, Copy, Debug)]
pub enum NormSubject<'a> {
    Discrete(&'a DgFunction),
    /// `u − u_h`, evaluated pointwise. Jumps of the smooth `u` vanish.
    Error {
        exact: &'a ExactSolution,
        approx: &'a DgFunction,
    },
}

impl NormSubject<'_> {
    fn approx(&self) -> &DgFunction {
        match self {
            NormSubject::Discrete(v) => v,
            NormSubject::Error { approx, .. } => approx,
        }
    }

    /// Value at `x` given the discrete value `vh` there.
    #[inline]
    fn value(&self, x: Point, vh: f64) -> f64 {
        match self {
            NormSubject::Discrete(_) => vh,
            NormSubject::Error { exact, .. } => (exact.u)(x) - vh,
        }
    }
}

/// Squared contributions, already restricted to the mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NormTerms {
    /// `‖v‖²_{L₂}`
    pub l2: f64,
    /// `½∫_∂Ω |ζ·n| v²`
    pub boundary: f64,
    /// `Σ_I ½∫ |ζ·n| [v]²`
    pub upwind_jump: f64,
    /// `Σ_T ‖v‖²_{L₂(∂T)}`
    pub element_boundary: f64,
    /// `Σ_T h_T ‖ζ·∇v‖²_{L₂(T)}`
    pub streamline: f64,
    /// `Σ_T h_T⁻¹ ‖v‖²_{L₂(T)}`
    pub inverse_h: f64,
    /// `½(‖∇⁺_{h,0} v‖² + ‖∇⁻_{h,0} v‖²)`
    pub gradient: f64,
    /// `Σ_{all edges} σ_e/h_e ‖[v]‖²`
    pub penalty_jump: f64,
}

/// The full norm family. All values are norms, not squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub l2: f64,
    pub ar: f64,
    pub upw: f64,
    pub upw_star: f64,
    pub upw_sharp: f64,
    pub d: f64,
    pub h: f64,
    pub h_star: f64,
    pub h_sharp: f64,
    pub h_sharp_star: f64,
    pub eps: f64,
    pub terms: NormTerms,
}

impl NormReport {
    /// Column labels in [`NormReport::values`] order.
    pub const NAMES: [&'static str; 10] = ["L2", "ar", "upw", "upw*", "upw#", "d", "h", "h*", "h#", "h#*"];

    pub fn from_terms(t: NormTerms, eps: f64) -> Self {
        let ar2 = t.l2 + t.boundary;
        let upw2 = ar2 + t.upwind_jump;
        let upw_star2 = upw2 + t.element_boundary;
        let d2 = t.gradient + t.penalty_jump;
        let h2 = eps * d2 + upw2;
        let h_sharp2 = h2 + t.streamline;
        Self {
            l2: t.l2.sqrt(),
            ar: ar2.sqrt(),
            upw: upw2.sqrt(),
            upw_star: upw_star2.sqrt(),
            upw_sharp: (upw2 + t.streamline).sqrt(),
            d: d2.sqrt(),
            h: h2.sqrt(),
            h_star: (eps * d2 + upw_star2).sqrt(),
            h_sharp: h_sharp2.sqrt(),
            h_sharp_star: (h_sharp2 + t.inverse_h + t.element_boundary).sqrt(),
            eps,
            terms: t,
        }
    }

    pub fn values(&self) -> [f64; 10] {
        [
            self.l2,
            self.ar,
            self.upw,
            self.upw_star,
            self.upw_sharp,
            self.d,
            self.h,
            self.h_star,
            self.h_sharp,
            self.h_sharp_star,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

/// The zero-data one-sided gradients `∇^±_{h,0}`, indexed `[side][axis]`.
pub struct DiscreteGradients {
    ops: [[SparseOperator; 2]; 2],
}

impl DiscreteGradients {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        // P1 integrands without coefficients: degree 4 is exact
        let rules = Rules::new(4)?;
        Ok(Self {
            ops: Side::BOTH.map(|s| build_gradient(mesh, &rules, s, BoundaryMode::ZeroData)),
        })
    }

    pub fn get(&self, side: Side, axis: Axis) -> &SparseOperator {
        &self.ops[matches!(side, Side::Minus) as usize][axis.index()]
    }
}

/// Applies the defining projection of the discrete partial derivatives to a
/// continuous `u` through its single-valued traces:
///
/// ```text
/// (G_i, φ) = ⟨u n_i, [φ]⟩_I + ⟨g n_i, φ⟩_B − (u, ∂_i φ)
/// ```
///
/// `Natural` uses `g = u`, `ZeroData` drops the boundary term and `Data(g)`
/// uses the given `g`. Interior jumps of `u` vanish, so both one-sided
/// operators give the same result.
pub fn discrete_gradient_of_exact(
    mesh: &Mesh,
    rules: &Rules,
    u: &dyn Fn(Point) -> f64,
    mode: BoundaryMode<'_>,
) -> [DgFunction; 2] {
    Axis::BOTH.map(|axis| {
        let i = axis.index();
        let mut load = vec![0.0; 3 * mesh.num_elements()];
        for t in 0..mesh.num_elements() {
            let g = mesh.geometry(t);
            let mean: f64 = map_triangle(&rules.triangle, mesh.element_vertices(t), g.area)
                .map(|(x, _, w)| w * u(x))
                .sum();
            for k in 0..3 {
                load[dof(t, k)] -= mean * g.grad_lambda[k][i];
            }
        }
        for (e, edge) in mesh.edges().iter().enumerate() {
            let trace: &dyn Fn(Point) -> f64 = match (edge.is_boundary(), mode) {
                (false, _) | (true, BoundaryMode::Natural) => u,
                (true, BoundaryMode::Data(g)) => g,
                (true, BoundaryMode::ZeroData) => continue,
            };
            let ni = edge.normal[i];
            for p in edge_points(mesh, &rules.edge, e) {
                let s = p.weight * ni * trace(p.x);
                for k in 0..3 {
                    load[dof(edge.plus, k)] += s * p.plus[k];
                }
                if let (Some(tm), Some(lm)) = (edge.minus, p.minus) {
                    for k in 0..3 {
                        load[dof(tm, k)] -= s * lm[k];
                    }
                }
            }
        }
        apply_inverse_mass(mesh, &mut load);
        DgFunction::from_coefficients_unchecked(load)
    })
}

/// Element mask and quadrature degree for [`norm_suite`].
#[derive(Clone, Copy, Debug)]
pub struct NormOptions<'a> {
    pub mask: Option<&'a [bool]>,
    pub quad_degree: usize,
}

impl Default for NormOptions<'_> {
    fn default() -> Self {
        Self {
            mask: None,
            quad_degree: ERROR_QUAD_DEGREE,
        }
    }
}

pub fn norm_suite(
    mesh: &Mesh,
    subject: NormSubject<'_>,
    problem: &ProblemSpec,
    penalty: &PenaltyPolicy,
    options: &NormOptions<'_>,
) -> Result<NormReport> {
    let grads = DiscreteGradients::new(mesh)?;
    let rules = Rules::new(options.quad_degree)?;
    suite_with(mesh, subject, problem, penalty, options.mask, &rules, &grads)
}

fn local_mass_form(area: f64, c: [f64; 3]) -> f64 {
    let s = c[0] + c[1] + c[2];
    area / 12.0 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + s * s)
}

fn suite_with(
    mesh: &Mesh,
    subject: NormSubject<'_>,
    problem: &ProblemSpec,
    penalty: &PenaltyPolicy,
    mask: Option<&[bool]>,
    rules: &Rules,
    grads: &DiscreteGradients,
) -> Result<NormReport> {
    let ne = mesh.num_elements();
    if let Some(m) = mask {
        if m.len() != ne {
            return Err(Error::InvalidArgument(format!("mask has {} entries for {ne} elements", m.len())));
        }
    }
    if let PenaltyPolicy::PerEdge(v) = penalty {
        if v.len() != mesh.num_edges() {
            return Err(Error::InvalidArgument(format!(
                "penalty has {} entries for {} edges",
                v.len(),
                mesh.num_edges()
            )));
        }
    }
    let exact_grad = match subject {
        NormSubject::Error { exact, .. } => Some(exact.grad()?),
        NormSubject::Discrete(_) => None,
    };
    let vh = subject.approx();
    if vh.coefficients().len() != 3 * ne {
        return Err(Error::InvalidArgument("function does not belong to this mesh".into()));
    }
    let inside = |t: usize| mask.is_none_or(|m| m[t]);
    let zeta = &*problem.zeta;
    let mut t_ = NormTerms::default();

    for t in (0..ne).filter(|&t| inside(t)) {
        let g = mesh.geometry(t);
        let gv = vh.gradient(mesh, t);
        let (mut l2, mut stream) = (0.0, 0.0);
        for (x, l, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let e = subject.value(x, vh.value_bary(t, l));
            l2 += w * e * e;
            let z = zeta(x);
            let ge = match exact_grad {
                Some(gu) => {
                    let gu = gu(x);
                    [gu[0] - gv[0], gu[1] - gv[1]]
                }
                None => gv,
            };
            let s = z[0] * ge[0] + z[1] * ge[1];
            stream += w * s * s;
        }
        t_.l2 += l2;
        t_.streamline += g.diameter * stream;
        t_.inverse_h += l2 / g.diameter;
    }

    for (e, edge) in mesh.edges().iter().enumerate() {
        let plus_in = inside(edge.plus);
        let minus_in = edge.minus.map(inside);
        if !plus_in && minus_in != Some(true) {
            continue;
        }
        let pen = penalty.sigma(e) / edge.length;
        for p in edge_points(mesh, &rules.edge, e) {
            let (vp, vm) = vh.traces(mesh, e, &p);
            let ep = subject.value(p.x, vp);
            let an = (zeta(p.x)[0] * edge.normal[0] + zeta(p.x)[1] * edge.normal[1]).abs();
            if plus_in {
                t_.element_boundary += p.weight * ep * ep;
            }
            match vm {
                None => {
                    t_.boundary += p.weight * 0.5 * an * ep * ep;
                    t_.penalty_jump += p.weight * pen * ep * ep;
                }
                Some(vm) => {
                    let em = subject.value(p.x, vm);
                    if minus_in == Some(true) {
                        t_.element_boundary += p.weight * em * em;
                    }
                    if plus_in && minus_in == Some(true) {
                        // [u] = 0 for the smooth part, so this is −[u_h] for errors
                        let j = vm - vp;
                        let j = match subject {
                            NormSubject::Discrete(_) => -j,
                            NormSubject::Error { .. } => j,
                        };
                        t_.upwind_jump += p.weight * 0.5 * an * j * j;
                        t_.penalty_jump += p.weight * pen * j * j;
                    }
                }
            }
        }
    }

    let exact_grads = match subject {
        NormSubject::Error { exact, .. } => {
            Some(discrete_gradient_of_exact(mesh, rules, &*exact.u, BoundaryMode::ZeroData))
        }
        NormSubject::Discrete(_) => None,
    };
    for side in Side::BOTH {
        for axis in Axis::BOTH {
            let mut c = grads.get(side, axis).apply(vh.coefficients());
            if let Some(gu) = &exact_grads {
                c.iter_mut().zip(gu[axis.index()].coefficients()).for_each(|(c, g)| *c = g - *c);
            }
            for t in (0..ne).filter(|&t| inside(t)) {
                let local = [c[3 * t], c[3 * t + 1], c[3 * t + 2]];
                t_.gradient += 0.5 * local_mass_form(mesh.geometry(t).area, local);
            }
        }
    }
    Ok(NormReport::from_terms(t_, problem.eps))
}

/// Error norms at the default degree plus the saturation check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub report: NormReport,
    /// The same norms at the check degree.
    pub check: NormReport,
    /// Largest relative disagreement between the two degrees.
    pub quadrature_spread: f64,
    pub saturated: bool,
}

/// `u − u_h` in every norm, at two quadrature degrees.
pub fn error_norms(
    mesh: &Mesh,
    problem: &ProblemSpec,
    approx: &DgFunction,
    penalty: &PenaltyPolicy,
    mask: Option<&[bool]>,
    degrees: (usize, usize),
) -> Result<ErrorNorms> {
    let exact = problem.exact()?;
    let subject = NormSubject::Error { exact, approx };
    let grads = DiscreteGradients::new(mesh)?;
    let report = suite_with(mesh, subject, problem, penalty, mask, &Rules::new(degrees.0)?, &grads)?;
    let check = suite_with(mesh, subject, problem, penalty, mask, &Rules::new(degrees.1)?, &grads)?;
    let spread = report
        .values()
        .iter()
        .zip(check.values())
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            // roundoff-level errors carry no quadrature information
            if scale <= SATURATION_FLOOR {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max);
    let saturated = spread > SATURATION_THRESHOLD;
    if saturated {
        log::warn!(
            "error quadrature not saturated: degrees {} and {} differ by {:.1}%",
            degrees.0,
            degrees.1,
            100.0 * spread
        );
    }
    Ok(ErrorNorms {
        report,
        check,
        quadrature_spread: spread,
        saturated,
    })
}

/// Gram matrix `N` of the `‖·‖_{h♯}` norm on the discrete space: `vᵀNv = ‖v‖²_{h♯}`.
pub fn h_sharp_gram(mesh: &Mesh, problem: &ProblemSpec, penalty: &PenaltyPolicy) -> Result<CsrMatrix> {
    let rules = Rules::new(4)?;
    let zeta = &*problem.zeta;
    let boundary = jump_form(mesh, &rules, true, |e, p| {
        let edge = &mesh.edges()[e];
        if edge.is_boundary() {
            0.5 * (zeta(p.x)[0] * edge.normal[0] + zeta(p.x)[1] * edge.normal[1]).abs()
        } else {
            0.0
        }
    });
    let n = 3 * mesh.num_elements();
    let mut s = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements());
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let mut local = [[0.0; 3]; 3];
        for (x, _, w) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let z = zeta(x);
            let d: [f64; 3] = std::array::from_fn(|k| z[0] * g.grad_lambda[k][0] + z[1] * g.grad_lambda[k][1]);
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] += g.diameter * w * d[a] * d[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                s.push(dof(t, a), dof(t, b), local[a][b]);
            }
        }
    }
    let mut gram = mass_matrix(mesh)
        .add(&boundary)
        .add(&assemble_upwind_penalty(mesh, &rules, zeta))
        .add(&s.build());
    if problem.eps > 0.0 {
        gram = gram.add_scaled(1.0, &assemble_dwdg_diffusion(mesh, &rules, penalty)?, problem.eps);
    }
    Ok(gram)
}

/// Largest problem size the dense inf-sup path accepts.
pub const INFSUP_MAX_DOFS: usize = 1600;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfSupEstimate {
    /// `min_v max_w a_h(v, w) / (‖v‖_{h♯} ‖w‖_{h♯})`.
    pub constant: f64,
    /// `a_h(v, w) / (‖v‖_{h♯} ‖w‖_{h♯})` with `w|_T = h_T⟨ζ⟩_T·∇v` for the minimizing `v`.
    pub probe: f64,
    pub dofs: usize,
    /// The minimizing trial function.
    #[serde(skip)]
    pub minimizer: Vec<f64>,
}

fn to_dense(a: &CsrMatrix) -> faer::Mat<f64> {
    let mut m = faer::Mat::<f64>::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.iter() {
        m[(i, j)] = v;
    }
    m
}

fn gram_factor(gram: &CsrMatrix) -> Result<faer::Mat<f64>> {
    let llt = to_dense(gram)
        .llt(faer::Side::Lower)
        .map_err(|e| Error::Numeric(format!("norm Gram matrix is not positive definite: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// Dense inf-sup estimate in the `‖·‖_{h♯}` pairing for the assembled form `a`
/// (`a(v, w) = wᵀAv`).
pub fn estimate_infsup(
    mesh: &Mesh,
    problem: &ProblemSpec,
    penalty: &PenaltyPolicy,
    a: &CsrMatrix,
) -> Result<InfSupEstimate> {
    let n = a.nrows();
    if n > INFSUP_MAX_DOFS {
        return Err(Error::InvalidArgument(format!(
            "dense inf-sup estimate limited to {INFSUP_MAX_DOFS} unknowns, got {n}"
        )));
    }
    let gram = h_sharp_gram(mesh, problem, penalty)?;
    let l = gram_factor(&gram)?;
    // K = L⁻¹ A L⁻ᵀ, built as (L⁻¹ (L⁻¹ A)ᵀ)ᵀ
    let mut x = to_dense(a);
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut y = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(y.as_mut());
    let k = y.transpose().to_owned();
    let svd = k
        .svd()
        .map_err(|e| Error::Numeric(format!("singular value decomposition failed: {e:?}")))?;
    let s = svd.S();
    let (imin, constant) = (0..n)
        .map(|i| (i, s[i]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidArgument("empty system".into()))?;
    // v = L⁻ᵀ x for the right singular vector x
    let mut v = faer::Mat::<f64>::from_fn(n, 1, |i, _| svd.V()[(i, imin)]);
    l.transpose().solve_upper_triangular_in_place(v.as_mut());
    let minimizer: Vec<f64> = (0..n).map(|i| v[(i, 0)]).collect();
    let probe = appendix_probe(mesh, problem, a, &gram, &minimizer);
    Ok(InfSupEstimate {
        constant,
        probe,
        dofs: n,
        minimizer,
    })
}

/// `sup_w a(v, w) / (‖v‖_N ‖w‖_N)` for one trial `v`, attained at `w* = N⁻¹Av`.
pub fn infsup_for_direction(gram: &CsrMatrix, a: &CsrMatrix, v: &[f64]) -> Result<(f64, Vec<f64>)> {
    let l = gram_factor(gram)?;
    let av = a.mul_vec(v);
    let mut w = faer::Mat::<f64>::from_fn(av.len(), 1, |i, _| av[i]);
    l.solve_lower_triangular_in_place(w.as_mut());
    l.transpose().solve_upper_triangular_in_place(w.as_mut());
    let w: Vec<f64> = (0..av.len()).map(|i| w[(i, 0)]).collect();
    let nv = gram.form(v, v).sqrt();
    let nw = gram.form(&w, &w).sqrt();
    let value = if nv == 0.0 || nw == 0.0 {
        0.0
    } else {
        a.form(v, &w) / (nv * nw)
    };
    Ok((value, w))
}

/// `w|_T = h_T ⟨ζ⟩_T · ∇v|_T` (constant per element).
pub fn streamline_test_function(mesh: &Mesh, problem: &ProblemSpec, v: &[f64]) -> Result<Vec<f64>> {
    let rules = Rules::new(4)?;
    let vf = DgFunction::from_coefficients(mesh, v.to_vec())?;
    let mut w = vec![0.0; v.len()];
    for t in 0..mesh.num_elements() {
        let g = mesh.geometry(t);
        let mut mean = [0.0; 2];
        for (x, _, wt) in map_triangle(&rules.triangle, mesh.element_vertices(t), g.area) {
            let z = (problem.zeta)(x);
            mean[0] += wt * z[0] / g.area;
            mean[1] += wt * z[1] / g.area;
        }
        let gv = vf.gradient(mesh, t);
        let c = g.diameter * (mean[0] * gv[0] + mean[1] * gv[1]);
        w[3 * t..3 * t + 3].fill(c);
    }
    Ok(w)
}

fn appendix_probe(mesh: &Mesh, problem: &ProblemSpec, a: &CsrMatrix, gram: &CsrMatrix, v: &[f64]) -> f64 {
    let Ok(w) = streamline_test_function(mesh, problem, v) else {
        return 0.0;
    };
    let nv = gram.form(v, v).sqrt();
    let nw = gram.form(&w, &w).sqrt();
    if nv == 0.0 || nw == 0.0 {
        return 0.0;
    }
    a.form(v, &w) / (nv * nw)
}
