//! Property suite over small meshes: operator identities, coercivity
//! identities, DWDG identities, affine exactness and (full scale) the
//! inf-sup sweep. Includes a negative control with a sign-flipped upwind term.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{
    assemble, assemble_convection_reaction, assemble_dwdg_diffusion, assemble_reduced, assemble_upwind_penalty,
    AssemblyOptions, ConvectionPath, PenaltyPolicy,
};
use crate::calculus::{check_centered_flux_equiv, check_ibp_identity, weighted_inner, Side};
use crate::mesh::{generate_level, DiagonalRule, Mesh, Point, Rect};
use crate::norms::{estimate_infsup, norm_suite, NormOptions, NormSubject};
use crate::problems::{example_boundary_layer, manufactured, ExactSolution, ProblemSpec, ScalarField, VectorField};
use crate::quadrature::Rules;
use crate::solver::{solve, SolverMethod};
use crate::space::{edge_points, DgFunction};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scale {
    Quick,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Scale::Quick),
            "full" => Ok(Scale::Full),
            _ => Err(Error::Parse(format!("unknown scale `{s}` (quick | full)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub scale: Scale,
    pub results: Vec<PropertyResult>,
    pub wall_seconds: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.results
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain data serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(
                f,
                "{} {:<44} worst {:>10.3e}  tol {:>8.1e}  n={}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.worst,
                r.tolerance,
                r.samples
            )?;
        }
        Ok(())
    }
}

/// Uniform random coefficients in `[-1, 1]`.
pub fn random_function(mesh: &Mesh, rng: &mut impl Rng) -> DgFunction {
    let c = (0..3 * mesh.num_elements()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    DgFunction::from_coefficients(mesh, c).expect("length matches mesh")
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// A problem with the given coefficients and `u = 0`.
pub fn coefficient_problem(domain: Rect, eps: f64, zeta: VectorField, div_zeta: ScalarField, gamma: ScalarField) -> ProblemSpec {
    let exact = ExactSolution::new(|_| 0.0, |_| [0.0, 0.0], |_| 0.0);
    manufactured("coefficients", domain, eps, zeta, div_zeta, gamma, exact).expect("zero solution is consistent")
}

/// Named convection fields used by the identity checks.
pub fn zeta_cases() -> Vec<(&'static str, VectorField, ScalarField)> {
    vec![
        ("constant", Arc::new(|_| [1.0, 0.5]), Arc::new(|_| 0.0)),
        ("radial", Arc::new(|x: Point| [x[0], x[1]]), Arc::new(|_| 2.0)),
    ]
}

/// `((γ − ½∇·ζ) v, v) + ½∫_∂Ω |ζ·n| v²`.
pub fn ar_coercivity_rhs(mesh: &Mesh, rules: &Rules, problem: &ProblemSpec, v: &DgFunction) -> f64 {
    let c = |x: Point| (problem.gamma)(x) - 0.5 * (problem.div_zeta)(x);
    let mut s = weighted_inner(mesh, rules, &c, v, v);
    for (e, edge) in mesh.edges().iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let z = (problem.zeta)(p.x);
            let zn = (z[0] * edge.normal[0] + z[1] * edge.normal[1]).abs();
            let vp = v.value_bary(edge.plus, p.plus);
            s += p.weight * 0.5 * zn * vp * vp;
        }
    }
    s
}

/// `½ Σ_I ∫ |ζ·n| [v]²`.
pub fn upwind_jump_energy(mesh: &Mesh, rules: &Rules, problem: &ProblemSpec, v: &DgFunction) -> f64 {
    let mut s = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() {
            continue;
        }
        for p in edge_points(mesh, &rules.edge, e) {
            let z = (problem.zeta)(p.x);
            let zn = (z[0] * edge.normal[0] + z[1] * edge.normal[1]).abs();
            let (vp, vm) = v.traces(mesh, e, &p);
            let j = vp - vm.unwrap_or(0.0);
            s += p.weight * 0.5 * zn * j * j;
        }
    }
    s
}

struct Suite {
    results: Vec<PropertyResult>,
}

impl Suite {
    fn record(&mut self, name: impl Into<String>, worst: f64, tolerance: f64, samples: usize) {
        self.results.push(PropertyResult {
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            tolerance,
            samples,
        });
    }

    /// Passes when the value exceeds the threshold.
    fn record_above(&mut self, name: impl Into<String>, value: f64, threshold: f64, samples: usize) {
        self.results.push(PropertyResult {
            name: name.into(),
            passed: value >= threshold,
            worst: value,
            tolerance: threshold,
            samples,
        });
    }
}

/// Worst relative defect of the coercivity identity for the upwind form `a`.
fn upw_identity_defect(mesh: &Mesh, rules: &Rules, problem: &ProblemSpec, a: &CsrMatrix, samples: &[DgFunction]) -> f64 {
    samples
        .iter()
        .map(|v| {
            let lhs = a.form(v.coefficients(), v.coefficients());
            let rhs = ar_coercivity_rhs(mesh, rules, problem, v) + upwind_jump_energy(mesh, rules, problem, v);
            rel(lhs, rhs)
        })
        .fold(0.0, f64::max)
}

pub fn run_validate(scale: Scale) -> Result<ValidationReport> {
    let start = Instant::now();
    let mut suite = Suite { results: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let rules = Rules::new(4)?;
    let n_pairs = match scale {
        Scale::Quick => 20,
        Scale::Full => 50,
    };
    let n_coercive = match scale {
        Scale::Quick => 30,
        Scale::Full => 100,
    };

    for level in [4usize, 8] {
        let mesh = generate_level(Rect::unit_square(), level, DiagonalRule::UniformNe)?;
        for (zname, zeta, div) in zeta_cases() {
            let (mut ibp, mut cf) = (0.0f64, 0.0f64);
            for _ in 0..n_pairs {
                let v = random_function(&mesh, &mut rng);
                let phi = random_function(&mesh, &mut rng);
                for side in Side::BOTH {
                    ibp = ibp.max(check_ibp_identity(&mesh, &rules, &*zeta, &*div, &v, &phi, side));
                }
                cf = cf.max(check_centered_flux_equiv(&mesh, &rules, &*zeta, &*div, &v, &phi));
            }
            suite.record(format!("ibp-identity h=1/{level} zeta={zname}"), ibp, 1e-11, n_pairs);
            suite.record(format!("centered-flux h=1/{level} zeta={zname}"), cf, 1e-11, n_pairs);

            let problem = coefficient_problem(Rect::unit_square(), 0.0, zeta.clone(), div.clone(), Arc::new(|_| 1.5));
            let a_ar = assemble_convection_reaction(
                &mesh,
                &rules,
                &*problem.zeta,
                &*problem.div_zeta,
                &*problem.gamma,
                ConvectionPath::Calculus,
            );
            let a_upw = a_ar.add(&assemble_upwind_penalty(&mesh, &rules, &*problem.zeta));
            let samples: Vec<DgFunction> = (0..n_coercive).map(|_| random_function(&mesh, &mut rng)).collect();
            let ar = samples
                .iter()
                .map(|v| {
                    rel(
                        a_ar.form(v.coefficients(), v.coefficients()),
                        ar_coercivity_rhs(&mesh, &rules, &problem, v),
                    )
                })
                .fold(0.0, f64::max);
            suite.record(format!("coercivity-ar h=1/{level} zeta={zname}"), ar, 1e-11, n_coercive);
            let upw = upw_identity_defect(&mesh, &rules, &problem, &a_upw, &samples);
            suite.record(format!("coercivity-upw h=1/{level} zeta={zname}"), upw, 1e-11, n_coercive);

            // negative control: flipping the upwind sign must break the identity
            let broken = a_ar.add_scaled(1.0, &assemble_upwind_penalty(&mesh, &rules, &*problem.zeta), -1.0);
            let broken_defect = upw_identity_defect(&mesh, &rules, &problem, &broken, &samples);
            suite.record_above(
                format!("negative-control-upwind-sign h=1/{level} zeta={zname}"),
                broken_defect,
                1e-6,
                n_coercive,
            );
        }

        // DWDG identities, with and without penalty
        for sigma in [0.0, 5.0] {
            let pen = PenaltyPolicy::constant(sigma)?;
            let problem = coefficient_problem(
                Rect::unit_square(),
                1.0,
                Arc::new(|_| [1.0, 1.0]),
                Arc::new(|_| 0.0),
                Arc::new(|_| 0.0),
            );
            let ad = assemble_dwdg_diffusion(&mesh, &rules, &pen)?;
            let opts = NormOptions {
                mask: None,
                quad_degree: 4,
            };
            let vs: Vec<DgFunction> = (0..n_coercive).map(|_| random_function(&mesh, &mut rng)).collect();
            let mut d_norms = Vec::with_capacity(vs.len());
            let mut worst = 0.0f64;
            for v in &vs {
                let d = norm_suite(&mesh, NormSubject::Discrete(v), &problem, &pen, &opts)?.d;
                worst = worst.max(rel(ad.form(v.coefficients(), v.coefficients()), d * d));
                d_norms.push(d);
            }
            suite.record(format!("dwdg-energy h=1/{level} sigma={sigma}"), worst, 1e-12, vs.len());
            let sym = ad.symmetry_defect() / ad.max_abs();
            suite.record(format!("dwdg-symmetry h=1/{level} sigma={sigma}"), sym, 1e-13, 1);
            let mut cs = 0.0f64;
            for i in 0..vs.len() {
                let j = (i + 1) % vs.len();
                let lhs = ad.form(vs[i].coefficients(), vs[j].coefficients()).abs();
                cs = cs.max(lhs / (d_norms[i] * d_norms[j]) - 1.0);
            }
            suite.record(format!("dwdg-cauchy-schwarz h=1/{level} sigma={sigma}"), cs.max(0.0), 1e-12, vs.len());
        }

        // reduced problem reproduces affine solutions
        let exact = ExactSolution::new(|x| 1.0 + 2.0 * x[0] - 0.5 * x[1], |_| [2.0, -0.5], |_| 0.0);
        let problem = manufactured(
            "affine",
            Rect::unit_square(),
            0.0,
            Arc::new(|_| [1.0, 0.5]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 2.0),
            exact,
        )?;
        let forms = assemble_reduced(&mesh, &problem, &AssemblyOptions::default())?;
        let (x, _) = solve(&forms.a_total, &forms.rhs, SolverMethod::Direct)?;
        let uh = DgFunction::from_coefficients(&mesh, x)?;
        let err = crate::norms::error_norms(&mesh, &problem, &uh, &PenaltyPolicy::zero(), None, (8, 6))?;
        suite.record(format!("affine-exactness h=1/{level}"), err.report.upw, 1e-9, 1);
    }

    if scale == Scale::Full {
        let problem = example_boundary_layer();
        let mut prev: Option<f64> = None;
        for level in [4usize, 8, 16] {
            let mesh = generate_level(problem.domain, level, DiagonalRule::UniformNe)?;
            let pen = PenaltyPolicy::zero();
            let forms = assemble(&mesh, &problem, &AssemblyOptions::default())?;
            let est = estimate_infsup(&mesh, &problem, &pen, &forms.a_total)?;
            if let Some(p) = prev {
                suite.record_above(format!("infsup-ratio h=1/{level}"), est.constant / p, 0.5, 1);
            }
            suite.record_above(format!("infsup-positive h=1/{level}"), est.constant, 1e-8, 1);
            prev = Some(est.constant);
        }
    }

    Ok(ValidationReport {
        scale,
        results: suite.results,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
