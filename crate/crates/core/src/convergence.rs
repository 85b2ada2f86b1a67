//! Single solves and refinement sweeps with observed rates.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::assembly::{assemble, AssemblyOptions, ConvectionPath, FormMatrices, PenaltyPolicy};
use crate::mesh::{generate_level, subdomain_mask, DiagonalRule, Mesh, Rect};
use crate::norms::{error_norms, NormReport};
use crate::problems::ProblemSpec;
use crate::quadrature::QuadDegrees;
use crate::solver::{solve, SolveReport, SolverMethod};
use crate::space::DgFunction;
use crate::{Error, Result};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "DWDG_THREADS";

/// Worker threads: `DWDG_THREADS` if set and positive, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Discrete solution plus what produced it.
#[derive(Clone, Debug)]
pub struct Solution {
    pub u_h: DgFunction,
    pub forms: FormMatrices,
    pub report: SolveReport,
}

/// Assembles and solves `problem` on `mesh`.
pub fn solve_problem(mesh: &Mesh, problem: &ProblemSpec, options: &AssemblyOptions, method: SolverMethod) -> Result<Solution> {
    let forms = assemble(mesh, problem, options)?;
    let (x, report) = solve(&forms.a_total, &forms.rhs, method)?;
    Ok(Solution {
        u_h: DgFunction::from_coefficients(mesh, x)?,
        forms,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub label: String,
    pub problem: ProblemSpec,
    /// Inverse grid spacings, `h = 1/level`.
    pub levels: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub mask: Option<Rect>,
    pub mesh_rule: DiagonalRule,
    pub quad: QuadDegrees,
    pub solver: SolverMethod,
    pub path: ConvectionPath,
}

impl ConvergenceConfig {
    pub fn new(label: impl Into<String>, problem: ProblemSpec, levels: Vec<usize>, sigmas: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            problem,
            levels,
            sigmas,
            mask: None,
            mesh_rule: DiagonalRule::default(),
            quad: QuadDegrees::default(),
            solver: SolverMethod::default(),
            path: ConvectionPath::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub h: f64,
    pub sigma: f64,
    pub elements: usize,
    pub dofs: usize,
    pub errors: NormReport,
    /// Observed rates against the previous level with the same `σ`.
    pub rates: Option<[f64; 10]>,
    pub saturated: bool,
    pub solve: SolveReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub eps: f64,
    pub mask: Option<[f64; 4]>,
    pub mesh_rule: String,
    pub quad_assembly: usize,
    pub quad_error: usize,
    pub rows: Vec<LevelRow>,
}

/// `log(e_coarse/e_fine) / log(h_coarse/h_fine)`.
pub fn observed_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

fn fill_rates(rows: &mut [LevelRow]) {
    for i in 0..rows.len() {
        let prev = (0..i).rev().find(|&j| rows[j].sigma == rows[i].sigma);
        rows[i].rates = prev.map(|j| {
            let (a, b) = (rows[j].errors.values(), rows[i].errors.values());
            std::array::from_fn(|k| observed_rate(a[k], b[k], rows[j].h, rows[i].h))
        });
    }
}

impl ConvergenceReport {
    pub fn rows_for(&self, sigma: f64) -> impl Iterator<Item = &LevelRow> {
        self.rows.iter().filter(move |r| r.sigma == sigma)
    }

    /// Rate of `norm` at the finest level with penalty `sigma`.
    pub fn final_rate(&self, sigma: f64, norm: &str) -> Option<f64> {
        let k = NormReport::NAMES.iter().position(|n| *n == norm)?;
        self.rows_for(sigma).last()?.rates.map(|r| r[k])
    }

    pub fn final_error(&self, sigma: f64, norm: &str) -> Option<f64> {
        self.rows_for(sigma).last()?.errors.get(norm)
    }

    /// Recomputes every rate from the error columns; returns the largest discrepancy.
    pub fn rate_consistency(&self) -> f64 {
        let mut copy = self.rows.clone();
        fill_rates(&mut copy);
        copy.iter()
            .zip(&self.rows)
            .filter_map(|(a, b)| Some((a.rates?, b.rates?)))
            .flat_map(|(a, b)| (0..10).map(move |k| (a[k] - b[k]).abs()))
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    /// One row per (level, σ, norm); no timing, so reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("example,eps,h,sigma,norm,error,rate\n");
        for r in &self.rows {
            for (k, name) in NormReport::NAMES.iter().enumerate() {
                let rate = r.rates.map_or(String::new(), |v| format!("{:.6}", v[k]));
                let _ = writeln!(
                    s,
                    "{},{:e},{:e},{},{},{:.10e},{}",
                    self.label,
                    self.eps,
                    r.h,
                    r.sigma,
                    name,
                    r.errors.values()[k],
                    rate
                );
            }
        }
        s
    }

    /// Aligned markdown table with the columns of the benchmark tables.
    pub fn to_markdown(&self) -> String {
        let cols = ["L2", "h", "h#"];
        let mut s = format!("### {} (eps = {:e})\n\n", self.label, self.eps);
        if let Some(m) = self.mask {
            let _ = writeln!(s, "mask: [{}, {}] x [{}, {}]\n", m[0], m[2], m[1], m[3]);
        }
        let mut header = format!("| {:>6} | {:>5} |", "h", "sigma");
        let mut rule = String::from("|-------:|------:|");
        for c in cols {
            let _ = write!(header, " {:>10} | {:>5} |", format!("‖e‖_{c}"), "rate");
            rule.push_str("-----------:|------:|");
        }
        let _ = writeln!(s, "{header}\n{rule}");
        for r in &self.rows {
            let _ = write!(s, "| 1/{:<4} | {:>5} |", r.level, r.sigma);
            for c in cols {
                let k = NormReport::NAMES.iter().position(|n| *n == c).unwrap();
                let rate = r.rates.map_or("".to_string(), |v| format!("{:.2}", v[k]));
                let _ = write!(s, " {:>10.2e} | {:>5} |", r.errors.values()[k], rate);
            }
            s.push('\n');
        }
        if self.rows.iter().any(|r| r.saturated) {
            s.push_str("\nwarning: error quadrature not saturated on at least one level\n");
        }
        s
    }

    /// Wall times and solver statistics, kept out of the data file.
    pub fn timing_summary(&self) -> String {
        let mut s = String::from("level,sigma,dofs,nnz,method,iterations,relative_residual,wall_seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.3e},{:.3}",
                r.level,
                r.sigma,
                r.dofs,
                r.solve.nonzeros,
                r.solve.method,
                r.solve.iterations,
                r.solve.relative_residual,
                r.solve.wall_seconds
            );
        }
        s
    }
}

fn run_one(cfg: &ConvergenceConfig, level: usize, sigma: f64) -> Result<LevelRow> {
    let mesh = generate_level(cfg.problem.domain, level, cfg.mesh_rule)?;
    let penalty = PenaltyPolicy::constant(sigma)?;
    let opts = AssemblyOptions {
        penalty: penalty.clone(),
        path: cfg.path,
        quad_degree: cfg.quad.assembly,
    };
    let sol = solve_problem(&mesh, &cfg.problem, &opts, cfg.solver)?;
    let mask = cfg.mask.map(|r| subdomain_mask(&mesh, r));
    let check = if cfg.quad.error > 2 { cfg.quad.error - 2 } else { cfg.quad.error + 2 };
    let errs = error_norms(&mesh, &cfg.problem, &sol.u_h, &penalty, mask.as_deref(), (cfg.quad.error, check))?;
    Ok(LevelRow {
        level,
        h: 1.0 / level as f64,
        sigma,
        elements: mesh.num_elements(),
        dofs: 3 * mesh.num_elements(),
        errors: errs.report,
        rates: None,
        saturated: errs.saturated,
        solve: sol.report,
    })
}

/// One solve per `(level, σ)`, run on [`thread_count`] workers. Rows are
/// ordered by `σ` (as given), then by level (as given).
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.problem.exact()?;
    if cfg.levels.is_empty() || cfg.sigmas.is_empty() {
        return Err(Error::InvalidArgument("need at least one level and one sigma".into()));
    }
    if cfg.levels.contains(&0) {
        return Err(Error::InvalidArgument("levels must be positive".into()));
    }
    let jobs: Vec<(f64, usize)> = cfg
        .sigmas
        .iter()
        .flat_map(|&s| cfg.levels.iter().map(move |&l| (s, l)))
        .collect();
    // largest meshes first so the slowest job does not start last
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(jobs[i].1));
    let slots: Vec<Mutex<Option<Result<LevelRow>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread_count().min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = order.get(k) else { break };
                let (sigma, level) = jobs[i];
                let row = run_one(cfg, level, sigma);
                *slots[i].lock().expect("worker panicked") = Some(row);
            });
        }
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for slot in slots {
        rows.push(slot.into_inner().expect("worker panicked").expect("every job ran")?);
    }
    fill_rates(&mut rows);
    Ok(ConvergenceReport {
        label: cfg.label.clone(),
        eps: cfg.problem.eps,
        mask: cfg.mask.map(|r| [r.x0, r.y0, r.x1, r.y1]),
        mesh_rule: match cfg.mesh_rule {
            DiagonalRule::UniformNe => "uniform-ne".into(),
            DiagonalRule::CornerSafe => "corner-safe".into(),
        },
        quad_assembly: cfg.quad.assembly,
        quad_error: cfg.quad.error,
        rows,
    })
}
