//! `dwdg`: solve, sweep and validate from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dwdg::assembly::{AssemblyOptions, PenaltyPolicy};
use dwdg::calculus::{build_div_zeta, build_partial, Axis, BoundaryMode, DivSide, Side};
use dwdg::convergence::{run_convergence, solve_problem, ConvergenceConfig};
use dwdg::mesh::{generate_level, read_triangle_files, subdomain_mask, validate_mesh, DiagonalRule, Rect};
use dwdg::norms::error_norms;
use dwdg::problems::{Example, ProblemConfig, ProblemSpec};
use dwdg::quadrature::{QuadDegrees, Rules};
use dwdg::solver::SolverMethod;
use dwdg::space::{extract_profile, mass_matrix, profile_csv, to_vtk, ProfileLine};
use dwdg::validate::{run_validate, Scale};
use dwdg::{Error, Result};

#[derive(Parser)]
#[command(name = "dwdg", version, about = "Dual-wind DG solver for convection-diffusion-reaction problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write the solution.
    Solve(SolveArgs),
    /// Error and rate table over a sequence of meshes.
    Convergence(ConvergenceArgs),
    /// Run the operator-identity property suite.
    Validate(ValidateArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// smooth | boundary-layer | interior-discont | interior-arctan
    #[arg(long)]
    example: Option<Example>,
    /// JSON problem description.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    source: Source,
    /// Override the diffusion coefficient.
    #[arg(long)]
    eps: Option<f64>,
    /// uniform-ne | corner-safe
    #[arg(long, default_value = "uniform-ne")]
    mesh_rule: DiagonalRule,
    #[arg(long, default_value_t = 4)]
    quad_assembly: usize,
    #[arg(long, default_value_t = 8)]
    quad_error: usize,
    /// direct | iterative
    #[arg(long, default_value = "direct")]
    solver: SolverMethod,
    /// Restrict error norms to the elements inside x0,y0,x1,y1.
    #[arg(long, value_parser = parse_rect)]
    mask: Option<Rect>,
    /// Largest accepted inverse mesh spacing.
    #[arg(long, default_value_t = 64)]
    max_level: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Inverse mesh spacing, `h = 1/level`.
    #[arg(long, default_value_t = 16)]
    level: usize,
    /// Jump penalty; defaults to the problem's own.
    #[arg(long)]
    sigma: Option<f64>,
    /// Read the mesh from `<STEM>.node` / `<STEM>.ele` instead of generating it.
    #[arg(long)]
    mesh_file: Option<PathBuf>,
    /// Sample the solution along `x1=c` or `x2=c` (repeatable).
    #[arg(long)]
    profile: Vec<ProfileLine>,
    /// Write the system matrix and right-hand side.
    #[arg(long)]
    dump_system: bool,
    /// Write the discrete derivative and divergence operators.
    #[arg(long)]
    dump_operator: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    /// Inverse mesh spacings; defaults to the example's table levels.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,5")]
    sigma: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// quick | full
    #[arg(long, default_value = "quick")]
    scale: Scale,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rect(s: &str) -> Result<Rect> {
    Rect::parse_corners(s)
}

impl Common {
    fn problem(&self) -> Result<ProblemSpec> {
        match (&self.source.example, &self.source.config) {
            (Some(ex), _) => ex.build(self.eps),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mut cfg = ProblemConfig::from_json(&text)?;
                if let Some(eps) = self.eps {
                    cfg.eps = eps;
                }
                cfg.build()
            }
            (None, None) => Err(Error::InvalidArgument("need --example or --config".into())),
        }
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 {
            return Err(Error::InvalidArgument("levels must be positive".into()));
        }
        if level > self.max_level {
            return Err(Error::InvalidArgument(format!(
                "level {level} exceeds --max-level {}; raise it to run finer meshes",
                self.max_level
            )));
        }
        Ok(())
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn solve_cmd(args: &SolveArgs) -> Result<()> {
    let c = &args.common;
    let problem = c.problem()?;
    let mesh = match &args.mesh_file {
        Some(stem) => read_triangle_files(stem)?,
        None => {
            c.check_level(args.level)?;
            generate_level(problem.domain, args.level, c.mesh_rule)?
        }
    };
    let penalty = match args.sigma {
        Some(s) => PenaltyPolicy::constant(s)?,
        None => problem.penalty.clone(),
    };
    let mesh_report = validate_mesh(&mesh, penalty.is_zero())?;
    if mesh_report.zero_penalty_warning {
        log::warn!("zero penalty on a mesh with triangles that have two boundary edges");
    }
    let opts = AssemblyOptions {
        penalty: penalty.clone(),
        quad_degree: c.quad_assembly,
        ..AssemblyOptions::default()
    };
    let sol = solve_problem(&mesh, &problem, &opts, c.solver)?;
    let (lo, hi) = sol.u_h.min_max();
    println!(
        "{}: eps={} elements={} unknowns={} residual={:.2e} time={:.2}s range=[{lo:.4e}, {hi:.4e}]",
        problem.name,
        problem.eps,
        mesh.num_elements(),
        sol.report.unknowns,
        sol.report.relative_residual,
        sol.report.wall_seconds
    );

    let errors = match problem.exact {
        Some(_) => {
            let mask = c.mask.map(|r| subdomain_mask(&mesh, r));
            let check = if c.quad_error > 2 { c.quad_error - 2 } else { c.quad_error + 2 };
            let e = error_norms(&mesh, &problem, &sol.u_h, &penalty, mask.as_deref(), (c.quad_error, check))?;
            for (name, v) in dwdg::norms::NormReport::NAMES.iter().zip(e.report.values()) {
                println!("  |e|_{name:<4} = {v:.4e}");
            }
            Some(e)
        }
        None => None,
    };

    let dir = &c.out;
    write(dir, "solution.vtk", &to_vtk(&mesh, &problem.name, &[("u_h", &sol.u_h)]))?;
    write(dir, "solution.csv", &sol.u_h.to_csv())?;
    for line in &args.profile {
        let name = format!("profile_x{}_{}.csv", line.axis + 1, line.value);
        write(dir, &name, &profile_csv(&extract_profile(&mesh, &sol.u_h, *line)))?;
    }
    if args.dump_system {
        write(dir, "system.mtx", &sol.forms.a_total.to_matrix_market())?;
        let rhs: String = sol.forms.rhs.iter().map(|b| format!("{b:.17e}\n")).collect();
        write(dir, "rhs.txt", &rhs)?;
    }
    if args.dump_operator {
        let rules = Rules::new(c.quad_assembly)?;
        write(dir, "mass.mtx", &mass_matrix(&mesh).to_matrix_market())?;
        for axis in Axis::BOTH {
            for side in Side::BOTH {
                let op = build_partial(&mesh, &rules, axis, side, BoundaryMode::ZeroData);
                let name = format!(
                    "partial_x{}_{}.mtx",
                    axis.index() + 1,
                    if side == Side::Plus { "plus" } else { "minus" }
                );
                write(dir, &name, &op.matrix.to_matrix_market())?;
            }
        }
        let div = build_div_zeta(&mesh, &rules, &*problem.zeta, DivSide::Average);
        write(dir, "div_zeta_average.mtx", &div.matrix.to_matrix_market())?;
    }
    let report = serde_json::json!({
        "problem": problem.name,
        "eps": problem.eps,
        "penalty": penalty,
        "mesh": mesh_report,
        "solve": sol.report,
        "errors": errors,
    });
    write(dir, "report.json", &serde_json::to_string_pretty(&report).expect("plain data serializes"))?;
    Ok(())
}

fn convergence_cmd(args: &ConvergenceArgs) -> Result<()> {
    let c = &args.common;
    let problem = c.problem()?;
    let levels = if !args.levels.is_empty() {
        args.levels.clone()
    } else if let Some(ex) = c.source.example {
        ex.table_levels().to_vec()
    } else {
        vec![4, 8, 16, 32]
    };
    for &l in &levels {
        c.check_level(l)?;
    }
    let label = match c.source.example {
        Some(ex) => ex.name().to_string(),
        None => problem.name.clone(),
    };
    let mut cfg = ConvergenceConfig::new(label, problem, levels, args.sigma.clone());
    cfg.mask = c.mask;
    cfg.mesh_rule = c.mesh_rule;
    cfg.quad = QuadDegrees {
        assembly: c.quad_assembly,
        error: c.quad_error,
    };
    cfg.solver = c.solver;
    let report = run_convergence(&cfg)?;
    let drift = report.rate_consistency();
    if drift > 1e-12 {
        return Err(Error::Numeric(format!("rate column disagrees with error column by {drift:.2e}")));
    }
    print!("{}", report.to_markdown());
    write(&c.out, "convergence.csv", &report.to_csv())?;
    write(&c.out, "convergence.md", &report.to_markdown())?;
    write(&c.out, "timing.txt", &report.timing_summary())?;
    Ok(())
}

fn validate_cmd(args: &ValidateArgs) -> Result<bool> {
    let report = run_validate(args.scale)?;
    print!("{report}");
    println!(
        "{} of {} properties passed in {:.1} s",
        report.results.iter().filter(|r| r.passed).count(),
        report.results.len(),
        report.wall_seconds
    );
    if let Some(dir) = &args.out {
        write(dir, "validate.jsonl", &(report.to_json_lines() + "\n"))?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Solve(a) => solve_cmd(a).map(|_| true),
        Command::Convergence(a) => convergence_cmd(a).map(|_| true),
        Command::Validate(a) => validate_cmd(a),
    };
    log::info!("finished in {:.2} s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
