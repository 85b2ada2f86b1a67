use std::sync::Arc;

use dwdg::assembly::{assemble_convection_reaction, assemble_dwdg_diffusion, assemble_upwind_penalty, ConvectionPath, PenaltyPolicy};
use dwdg::mesh::{generate_level, DiagonalRule, Mesh, Rect};
use dwdg::norms::{norm_suite, NormOptions, NormReport, NormSubject};
use dwdg::problems::ProblemSpec;
use dwdg::quadrature::Rules;
use dwdg::space::{edge_points, DgFunction};
use dwdg::validate::{ar_coercivity_rhs, coefficient_problem, upwind_jump_energy};
use proptest::prelude::*;

fn mesh() -> Mesh {
    generate_level(Rect::unit_square(), 4, DiagonalRule::UniformNe).unwrap()
}

fn problem(eps: f64) -> ProblemSpec {
    coefficient_problem(
        Rect::unit_square(),
        eps,
        Arc::new(|x| [1.0 + x[1], 0.5 - x[0]]),
        Arc::new(|_| 0.0),
        Arc::new(|x| 1.0 + x[0]),
    )
}

fn coefficients(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn suite(m: &Mesh, v: &DgFunction, p: &ProblemSpec, pen: &PenaltyPolicy, mask: Option<&[bool]>) -> NormReport {
    let opts = NormOptions {
        mask,
        quad_degree: 8,
    };
    norm_suite(m, NormSubject::Discrete(v), p, pen, &opts).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn norm_chains_hold(c in coefficients(96), eps in 1e-9f64..1.0, sigma in 0.0f64..10.0) {
        let m = mesh();
        let v = DgFunction::from_coefficients(&m, c).unwrap();
        let r = suite(&m, &v, &problem(eps), &PenaltyPolicy::constant(sigma).unwrap(), None);
        prop_assert!(r.ar <= r.upw && r.upw <= r.upw_sharp);
        prop_assert!(r.h <= r.h_sharp && r.h_sharp <= r.h_sharp_star);
        prop_assert!(rel(r.h * r.h, eps * r.d * r.d + r.upw * r.upw) <= 1e-12);
    }

    #[test]
    fn starred_and_sharp_differences(c in coefficients(96)) {
        let m = mesh();
        let p = problem(0.01);
        let v = DgFunction::from_coefficients(&m, c).unwrap();
        let r = suite(&m, &v, &p, &PenaltyPolicy::zero(), None);
        let rules = Rules::new(8).unwrap();
        // Σ_T ‖v‖²_{∂T}, recomputed edge by edge from both traces
        let mut dt = 0.0;
        for e in 0..m.num_edges() {
            for q in edge_points(&m, &rules.edge, e) {
                let (a, b) = v.traces(&m, e, &q);
                dt += q.weight * (a * a + b.map_or(0.0, |b| b * b));
            }
        }
        prop_assert!(rel(r.upw_star * r.upw_star - r.upw * r.upw, dt) <= 1e-12);
        // Σ_T h_T ‖ζ·∇v‖², by the element centroid rule squared out exactly:
        // ζ is affine, ∇v constant, so ζ·∇v is affine and its square is integrated by
        // the edge-midpoint rule exactly
        let mut s = 0.0;
        for t in 0..m.num_elements() {
            let g = m.geometry(t);
            let gv = v.gradient(&m, t);
            let vs = m.element_vertices(t);
            for k in 0..3 {
                let x = [(vs[k][0] + vs[(k + 1) % 3][0]) / 2.0, (vs[k][1] + vs[(k + 1) % 3][1]) / 2.0];
                let z = (p.zeta)(x);
                let d = z[0] * gv[0] + z[1] * gv[1];
                s += g.diameter * g.area / 3.0 * d * d;
            }
        }
        prop_assert!(rel(r.h_sharp * r.h_sharp - r.h * r.h, s) <= 1e-12);
    }

    #[test]
    fn full_mask_equals_unmasked(c in coefficients(96)) {
        let m = mesh();
        let p = problem(0.5);
        let v = DgFunction::from_coefficients(&m, c).unwrap();
        let pen = PenaltyPolicy::constant(3.0).unwrap();
        let all = vec![true; m.num_elements()];
        prop_assert_eq!(suite(&m, &v, &p, &pen, None), suite(&m, &v, &p, &pen, Some(&all)));
    }

    #[test]
    fn coercivity_identities(c in coefficients(96)) {
        let m = mesh();
        let p = problem(0.0);
        let rules = Rules::new(4).unwrap();
        let v = DgFunction::from_coefficients(&m, c).unwrap();
        for path in [ConvectionPath::Calculus, ConvectionPath::CenteredFlux] {
            let a_ar = assemble_convection_reaction(&m, &rules, &*p.zeta, &*p.div_zeta, &*p.gamma, path);
            let a_upw = a_ar.add(&assemble_upwind_penalty(&m, &rules, &*p.zeta));
            let rhs = ar_coercivity_rhs(&m, &rules, &p, &v);
            prop_assert!(rel(a_ar.form(v.coefficients(), v.coefficients()), rhs) <= 1e-11);
            let rhs_upw = rhs + upwind_jump_energy(&m, &rules, &p, &v);
            prop_assert!(rel(a_upw.form(v.coefficients(), v.coefficients()), rhs_upw) <= 1e-11);
        }
    }

    #[test]
    fn diffusion_energy_and_cauchy_schwarz(a in coefficients(96), b in coefficients(96), sigma in 0.0f64..10.0) {
        let m = mesh();
        let p = problem(1.0);
        let pen = PenaltyPolicy::constant(sigma).unwrap();
        let ad = assemble_dwdg_diffusion(&m, &Rules::new(4).unwrap(), &pen).unwrap();
        let v = DgFunction::from_coefficients(&m, a).unwrap();
        let w = DgFunction::from_coefficients(&m, b).unwrap();
        let dv = suite(&m, &v, &p, &pen, None).d;
        let dw = suite(&m, &w, &p, &pen, None).d;
        prop_assert!(rel(ad.form(v.coefficients(), v.coefficients()), dv * dv) <= 1e-12);
        prop_assert!(ad.form(v.coefficients(), w.coefficients()).abs() <= dv * dw * (1.0 + 1e-12));
    }
}
