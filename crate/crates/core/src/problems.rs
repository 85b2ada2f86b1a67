//! Problem data: coefficients, sources, boundary data and (optionally) an
//! exact solution with derivatives. Holds the benchmark catalog and builders
//! for manufactured and file-configured problems.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use crate::assembly::PenaltyPolicy;
use crate::expr::Expr;
use crate::mesh::{Point, Rect};
use crate::{Error, Result};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Exponentials of arguments at or below this are flushed to zero.
pub const EXP_CUTOFF: f64 = -700.0;

/// `exp(a)` with arguments `≤ EXP_CUTOFF` mapped to exactly zero.
#[inline]
pub fn clamped_exp(a: f64) -> f64 {
    if a <= EXP_CUTOFF {
        0.0
    } else {
        a.exp()
    }
}

/// An exact solution with the derivatives the norms and manufactured sources need.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: Option<VectorField>,
    pub laplacian: Option<ScalarField>,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactSolution")
            .field("grad", &self.grad.is_some())
            .field("laplacian", &self.laplacian.is_some())
            .finish()
    }
}

impl ExactSolution {
    pub fn new(
        u: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        laplacian: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            u: Arc::new(u),
            grad: Some(Arc::new(grad)),
            laplacian: Some(Arc::new(laplacian)),
        }
    }

    pub fn grad(&self) -> Result<&VectorField> {
        self.grad
            .as_ref()
            .ok_or_else(|| Error::Capability("exact solution has no gradient callable".into()))
    }

    pub fn laplacian(&self) -> Result<&ScalarField> {
        self.laplacian
            .as_ref()
            .ok_or_else(|| Error::Capability("exact solution has no Laplacian callable".into()))
    }

    /// Largest discrepancy between the derivative callables and central
    /// differences at `points`, relative to `max(1, |value|)`. Gradients use
    /// `step`, the Laplacian uses `100·step` (second differences lose twice
    /// the digits).
    pub fn finite_difference_defect(&self, points: &[Point], step: f64) -> Result<f64> {
        let grad = self.grad()?;
        let lap = self.laplacian()?;
        let u = &self.u;
        let mut worst: f64 = 0.0;
        for &p in points {
            let g = grad(p);
            let h = step;
            let fd = [
                (u([p[0] + h, p[1]]) - u([p[0] - h, p[1]])) / (2.0 * h),
                (u([p[0], p[1] + h]) - u([p[0], p[1] - h])) / (2.0 * h),
            ];
            for k in 0..2 {
                worst = worst.max((g[k] - fd[k]).abs() / g[k].abs().max(1.0));
            }
            let h = 100.0 * step;
            let c = u(p);
            let fd_lap = (u([p[0] + h, p[1]]) + u([p[0] - h, p[1]]) + u([p[0], p[1] + h]) + u([p[0], p[1] - h])
                - 4.0 * c)
                / (h * h);
            let l = lap(p);
            worst = worst.max((l - fd_lap).abs() / l.abs().max(1.0));
        }
        Ok(worst)
    }
}

/// Everything that defines one convection-diffusion-reaction problem
///
/// ```text
/// −ε Δu + ζ·∇u + γ u = f  in Ω,   u = g  on ∂Ω.
/// ```
///
/// `eps == 0` selects the reduced first-order problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Rect,
    pub eps: f64,
    pub zeta: VectorField,
    pub div_zeta: ScalarField,
    pub gamma: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
    pub exact: Option<ExactSolution>,
    /// Lower bound of `γ − ½∇·ζ`, if known. Not used in any computation.
    pub gamma0: Option<f64>,
    pub penalty: PenaltyPolicy,
    /// True when `f` was derived from `exact`.
    pub manufactured: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("eps", &self.eps)
            .field("exact", &self.exact)
            .field("gamma0", &self.gamma0)
            .field("penalty", &self.penalty)
            .field("manufactured", &self.manufactured)
            .finish_non_exhaustive()
    }
}

fn grid(domain: Rect, n: usize) -> impl Iterator<Item = Point> {
    (0..=n).flat_map(move |j| {
        (0..=n).map(move |i| {
            [
                domain.x0 + domain.width() * i as f64 / n as f64,
                domain.y0 + domain.height() * j as f64 / n as f64,
            ]
        })
    })
}

impl ProblemSpec {
    pub fn exact(&self) -> Result<&ExactSolution> {
        self.exact
            .as_ref()
            .ok_or_else(|| Error::Capability(format!("problem `{}` has no exact solution", self.name)))
    }

    pub fn is_reduced(&self) -> bool {
        self.eps == 0.0
    }

    /// `ζ·n` at `x` for normal `n`.
    #[inline]
    pub fn flux(&self, x: Point, n: Point) -> f64 {
        let z = (self.zeta)(x);
        z[0] * n[0] + z[1] * n[1]
    }

    /// Sampled minimum of `γ − ½∇·ζ` on a 21×21 grid.
    pub fn assumption_margin(&self) -> f64 {
        grid(self.domain, 20)
            .map(|p| (self.gamma)(p) - 0.5 * (self.div_zeta)(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Logs a warning and returns `false` when the sampled margin is not positive.
    pub fn check_assumption(&self) -> bool {
        let m = self.assumption_margin();
        if m <= 0.0 {
            log::warn!(
                "problem `{}`: sampled min of gamma - div(zeta)/2 is {m} <= 0; well-posedness is not guaranteed",
                self.name
            );
            false
        } else {
            true
        }
    }

    /// `−εΔu + ζ·∇u + γu` from the exact-solution callables.
    pub fn operator_on_exact(&self, x: Point) -> Result<f64> {
        let ex = self.exact()?;
        let g = ex.grad()?(x);
        let lap = if self.eps == 0.0 { 0.0 } else { ex.laplacian()?(x) };
        let z = (self.zeta)(x);
        Ok((z[0] * g[0] + z[1] * g[1] + (self.gamma)(x) * (ex.u)(x)) - self.eps * lap)
    }

    /// Largest relative defect `|f − (−εΔu + ζ·∇u + γu)| / max(1, |f|)` at `points`.
    pub fn manufactured_defect(&self, points: &[Point]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &p in points {
            let f = (self.f)(p);
            worst = worst.max((f - self.operator_on_exact(p)?).abs() / f.abs().max(1.0));
        }
        Ok(worst)
    }

    pub fn with_penalty(mut self, penalty: PenaltyPolicy) -> Self {
        self.penalty = penalty;
        self
    }
}

fn manufactured_source(
    eps: f64,
    zeta: VectorField,
    gamma: ScalarField,
    exact: &ExactSolution,
) -> Result<ScalarField> {
    let grad = exact.grad()?.clone();
    let lap = if eps == 0.0 { None } else { Some(exact.laplacian()?.clone()) };
    let u = exact.u.clone();
    Ok(Arc::new(move |x| {
        let g = grad(x);
        let z = zeta(x);
        let d = lap.as_ref().map_or(0.0, |l| -eps * l(x));
        // convection first: it often cancels exactly, and adding the small
        // diffusion term afterwards keeps its digits
        (z[0] * g[0] + z[1] * g[1] + gamma(x) * u(x)) + d
    }))
}

/// Builds a problem whose source and boundary data come from `exact`. The
/// derivative callables are checked against finite differences on a 5×5
/// interior grid.
pub fn manufactured(
    name: &str,
    domain: Rect,
    eps: f64,
    zeta: VectorField,
    div_zeta: ScalarField,
    gamma: ScalarField,
    exact: ExactSolution,
) -> Result<ProblemSpec> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be finite and >= 0, got {eps}")));
    }
    let inner = Rect {
        x0: domain.x0 + 0.1 * domain.width(),
        x1: domain.x1 - 0.1 * domain.width(),
        y0: domain.y0 + 0.1 * domain.height(),
        y1: domain.y1 - 0.1 * domain.height(),
    };
    let points: Vec<Point> = grid(inner, 4).collect();
    let defect = exact.finite_difference_defect(&points, 1e-6)?;
    if defect > 1e-4 {
        return Err(Error::InvalidArgument(format!(
            "derivative callables of `{name}` disagree with finite differences (relative defect {defect:.2e})"
        )));
    }
    let f = manufactured_source(eps, zeta.clone(), gamma.clone(), &exact)?;
    Ok(ProblemSpec {
        name: name.to_string(),
        domain,
        eps,
        zeta,
        div_zeta,
        gamma,
        f,
        g: exact.u.clone(),
        exact: Some(exact),
        gamma0: None,
        penalty: PenaltyPolicy::default(),
        manufactured: true,
    })
}

/// The benchmark catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Example {
    Smooth,
    BoundaryLayer,
    InteriorDiscont,
    InteriorArctan,
}

impl Example {
    pub const ALL: [Example; 4] = [
        Example::Smooth,
        Example::BoundaryLayer,
        Example::InteriorDiscont,
        Example::InteriorArctan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Example::Smooth => "smooth",
            Example::BoundaryLayer => "boundary-layer",
            Example::InteriorDiscont => "interior-discont",
            Example::InteriorArctan => "interior-arctan",
        }
    }

    /// Diffusion values the benchmark is run with; the first is the default.
    pub fn eps_presets(self) -> &'static [f64] {
        match self {
            Example::Smooth | Example::BoundaryLayer => &[1e-9],
            Example::InteriorDiscont => &[1e-9, 1e-3],
            Example::InteriorArctan => &[1e-9, 1e-3, 1.0],
        }
    }

    pub fn domain(self) -> Rect {
        match self {
            Example::Smooth => Rect::new(1.0, 3.0, 0.0, 2.0),
            _ => Rect::unit_square(),
        }
    }

    /// Subregion for away-from-layer error measurement.
    pub fn local_mask(self) -> Option<Rect> {
        match self {
            Example::BoundaryLayer => Some(Rect::new(0.0, 0.875, 0.0, 0.875)),
            Example::InteriorArctan => Some(Rect::new(0.0, 1.0, 0.625, 1.0)),
            _ => None,
        }
    }

    /// Inverse grid spacings of the benchmark tables.
    pub fn table_levels(self) -> &'static [usize] {
        match self {
            Example::BoundaryLayer | Example::InteriorArctan => &[4, 8, 16, 32, 64],
            Example::Smooth => &[4, 8, 16, 32, 64],
            Example::InteriorDiscont => &[128],
        }
    }

    pub fn build(self, eps: Option<f64>) -> Result<ProblemSpec> {
        let eps = eps.unwrap_or(self.eps_presets()[0]);
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("catalog examples need eps > 0, got {eps}")));
        }
        Ok(match self {
            Example::Smooth => example_smooth_with(eps),
            Example::BoundaryLayer => example_boundary_layer_with(eps),
            Example::InteriorDiscont => example_interior_layer_discontinuous_with(eps),
            Example::InteriorArctan => example_interior_layer_arctan_with(eps),
        })
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Example::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown example `{s}` (smooth | boundary-layer | interior-discont | interior-arctan)"
                ))
            })
    }
}

fn constant(c: f64) -> ScalarField {
    Arc::new(move |_| c)
}

fn catalog_entry(name: &str, domain: Rect, eps: f64, zeta: VectorField, div_zeta: ScalarField, exact: ExactSolution) -> ProblemSpec {
    let gamma = constant(0.0);
    let f = manufactured_source(eps, zeta.clone(), gamma.clone(), &exact).expect("catalog solutions carry derivatives");
    ProblemSpec {
        name: name.to_string(),
        domain,
        eps,
        zeta,
        div_zeta,
        gamma,
        f,
        g: exact.u.clone(),
        exact: Some(exact),
        gamma0: None,
        penalty: PenaltyPolicy::default(),
        manufactured: true,
    }
}

/// `u = x₂/x₁` on `[1,3]×[0,2]` with `ζ = (x₁, x₂)`, `γ = 0`, `ε = 1e-9`.
pub fn example_smooth() -> ProblemSpec {
    example_smooth_with(1e-9)
}

fn example_smooth_with(eps: f64) -> ProblemSpec {
    let exact = ExactSolution::new(
        |p| p[1] / p[0],
        |p| [-p[1] / (p[0] * p[0]), 1.0 / p[0]],
        |p| 2.0 * p[1] / (p[0] * p[0] * p[0]),
    );
    catalog_entry(
        Example::Smooth.name(),
        Example::Smooth.domain(),
        eps,
        Arc::new(|p| p),
        constant(2.0),
        exact,
    )
}

/// Outflow boundary layers along `x₁ = 1` and `x₂ = 1`; `ζ = (1, 1)`, `γ = 0`.
pub fn example_boundary_layer() -> ProblemSpec {
    example_boundary_layer_with(1e-9)
}

fn example_boundary_layer_with(eps: f64) -> ProblemSpec {
    let big_e = clamped_exp(-1.0 / eps);
    let scale = 1.0 / (1.0 - big_e);
    let layer = move |p: Point| clamped_exp((p[0] - 1.0) * (1.0 - p[1]) / eps);
    let exact = ExactSolution::new(
        move |p| p[0] + p[1] * (1.0 - p[0]) + (big_e - layer(p)) * scale,
        move |p| {
            let ea = layer(p) * scale / eps;
            [(1.0 - p[1]) - ea * (1.0 - p[1]), (1.0 - p[0]) + ea * (p[0] - 1.0)]
        },
        move |p| {
            let ea = layer(p) * scale / eps;
            -ea * ((1.0 - p[1]).powi(2) + (p[0] - 1.0).powi(2)) / eps
        },
    );
    catalog_entry(
        Example::BoundaryLayer.name(),
        Example::BoundaryLayer.domain(),
        eps,
        Arc::new(|_| [1.0, 1.0]),
        constant(0.0),
        exact,
    )
}

/// Interior layer from discontinuous inflow data; no exact solution.
pub fn example_interior_layer_discontinuous() -> ProblemSpec {
    example_interior_layer_discontinuous_with(1e-9)
}

/// Example boundary data: 1 on `x₂ = 0` and on `{x₁ = 0, x₂ ≤ 1/5}`, else 0.
pub fn interior_discont_g(p: Point) -> f64 {
    const TOL: f64 = 1e-12;
    if p[1].abs() <= TOL || (p[0].abs() <= TOL && p[1] <= 0.2) {
        1.0
    } else {
        0.0
    }
}

fn example_interior_layer_discontinuous_with(eps: f64) -> ProblemSpec {
    let s3 = 3f64.sqrt() / 2.0;
    ProblemSpec {
        name: Example::InteriorDiscont.name().to_string(),
        domain: Rect::unit_square(),
        eps,
        zeta: Arc::new(move |_| [0.5, s3]),
        div_zeta: constant(0.0),
        gamma: constant(0.0),
        f: constant(0.0),
        g: Arc::new(interior_discont_g),
        exact: None,
        gamma0: None,
        penalty: PenaltyPolicy::default(),
        manufactured: false,
    }
}

/// `u = (1−x₁)³ atan((x₂ − ½)/ε)` with `ζ = (1, 0)`, `γ = 0`.
pub fn example_interior_layer_arctan() -> ProblemSpec {
    example_interior_layer_arctan_with(1e-9)
}

fn example_interior_layer_arctan_with(eps: f64) -> ProblemSpec {
    let exact = ExactSolution::new(
        move |p| (1.0 - p[0]).powi(3) * ((p[1] - 0.5) / eps).atan(),
        move |p| {
            let c = 1.0 - p[0];
            let d = p[1] - 0.5;
            [-3.0 * c * c * (d / eps).atan(), c.powi(3) * eps / (eps * eps + d * d)]
        },
        move |p| {
            let c = 1.0 - p[0];
            let d = p[1] - 0.5;
            let q = eps * eps + d * d;
            6.0 * c * (d / eps).atan() + c.powi(3) * (-2.0 * d * eps) / (q * q)
        },
    );
    catalog_entry(
        Example::InteriorArctan.name(),
        Example::InteriorArctan.domain(),
        eps,
        Arc::new(|_| [1.0, 0.0]),
        constant(0.0),
        exact,
    )
}

/// JSON problem description. Fields are expression strings in `x1`, `x2`
/// (see [`crate::expr`]).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// `[x0, y0, x1, y1]`
    pub domain: [f64; 4],
    pub eps: f64,
    pub zeta: [String; 2],
    pub div_zeta: String,
    #[serde(default = "zero_expr")]
    pub gamma: String,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub g: Option<String>,
    #[serde(default)]
    pub u: Option<String>,
    #[serde(default)]
    pub grad_u: Option<[String; 2]>,
    #[serde(default)]
    pub laplacian_u: Option<String>,
    #[serde(default)]
    pub gamma0: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

fn default_name() -> String {
    "config".into()
}

fn zero_expr() -> String {
    "0".into()
}

fn scalar(src: &str, eps: f64) -> Result<ScalarField> {
    let e = Expr::parse(src, eps)?;
    Ok(Arc::new(move |p| e.eval(p)))
}

fn vector(src: &[String; 2], eps: f64) -> Result<VectorField> {
    let a = Expr::parse(&src[0], eps)?;
    let b = Expr::parse(&src[1], eps)?;
    Ok(Arc::new(move |p| [a.eval(p), b.eval(p)]))
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("problem config: {e}")))
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let [x0, y0, x1, y1] = self.domain;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidArgument(format!("empty domain {:?}", self.domain)));
        }
        let domain = Rect::new(x0, x1, y0, y1);
        let eps = self.eps;
        let zeta = vector(&self.zeta, eps)?;
        let div_zeta = scalar(&self.div_zeta, eps)?;
        let gamma = scalar(&self.gamma, eps)?;
        let exact = match &self.u {
            None => None,
            Some(u) => Some(ExactSolution {
                u: scalar(u, eps)?,
                grad: self.grad_u.as_ref().map(|g| vector(g, eps)).transpose()?,
                laplacian: self.laplacian_u.as_ref().map(|l| scalar(l, eps)).transpose()?,
            }),
        };
        let mut spec = match (&self.f, exact) {
            (None, Some(exact)) => manufactured(&self.name, domain, eps, zeta, div_zeta, gamma, exact)?,
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "problem config needs either `f` or an exact solution `u`".into(),
                ))
            }
            (Some(f), exact) => {
                let g = match (&self.g, &exact) {
                    (Some(g), _) => scalar(g, eps)?,
                    (None, Some(ex)) => ex.u.clone(),
                    (None, None) => {
                        return Err(Error::InvalidArgument(
                            "problem config needs boundary data `g` when no `u` is given".into(),
                        ))
                    }
                };
                ProblemSpec {
                    name: self.name.clone(),
                    domain,
                    eps,
                    zeta,
                    div_zeta,
                    gamma,
                    f: scalar(f, eps)?,
                    g,
                    exact,
                    gamma0: None,
                    penalty: PenaltyPolicy::default(),
                    manufactured: false,
                }
            }
        };
        if let Some(g) = &self.g {
            spec.g = scalar(g, eps)?;
        }
        spec.gamma0 = self.gamma0;
        if let Some(s) = self.sigma {
            spec.penalty = PenaltyPolicy::constant(s)?;
        }
        Ok(spec)
    }
}

/// Reads and builds a JSON problem description.
pub fn load_config(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProblemConfig::from_json(&text)?.build()
}
