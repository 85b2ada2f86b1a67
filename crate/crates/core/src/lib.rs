//! Dual-wind discontinuous Galerkin solver for
//! `-ε Δu + ζ·∇u + γ u = f` on rectangles, with piecewise-linear elements.
//!
//! ```
//! use dwdg::assembly::AssemblyOptions;
//! use dwdg::convergence::solve_problem;
//! use dwdg::mesh::{generate_level, DiagonalRule};
//! use dwdg::problems::Example;
//! use dwdg::solver::SolverMethod;
//!
//! let problem = Example::BoundaryLayer.build(None)?;
//! let mesh = generate_level(problem.domain, 8, DiagonalRule::CornerSafe)?;
//! let sol = solve_problem(&mesh, &problem, &AssemblyOptions::default(), SolverMethod::Direct)?;
//! assert_eq!(sol.u_h.coefficients().len(), 3 * mesh.num_elements());
//! # Ok::<(), dwdg::Error>(())
//! ```
//!
//! The guide in `book/` walks through each module.

// `!(x > 0.0)` is used deliberately so NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod calculus;
pub mod convergence;
pub mod error;
pub mod expr;
pub mod mesh;
pub mod norms;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod sparse;
pub mod validate;

pub use error::{Error, Result};
