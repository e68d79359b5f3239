//! Command-line front end: `solve`, `check` and `list`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NpasaError, Result};
use crate::kkt::{ErrorReport, KktResiduals};
use crate::model::{self, DerivativeSource, Problem};
use crate::polyproj;
use crate::registry;
use crate::solver::{self, NpasaConfig, SolveResult, Termination, TraceRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "npasa", version, about = "Two-phase active set solver for nonlinear programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one or more problems.
    Solve(SolveArgs),
    /// Verify derivatives and the projection against the brute-force oracle.
    Check(CheckArgs),
    /// List the built-in problems.
    List(ListArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Built-in problem name (repeatable).
    #[arg(long = "problem")]
    pub problems: Vec<String>,
    /// Problem JSON file (repeatable).
    #[arg(long = "file")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: ProblemArgs,
    /// Solver configuration JSON; omitted fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Trace output (JSON lines). A directory when solving several problems.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Run report output. A directory when solving several problems.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    /// Starting point as comma separated values; defaults to the origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Print the run reports as JSON instead of summary lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub source: ProblemArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ListArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub trace: Option<String>,
    pub report: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub converged: bool,
    pub termination: Termination,
    pub errors: ErrorReport,
    pub kkt: KktResiduals,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub wall_time_s: f64,
    pub outer_iterations: usize,
    pub global_steps: usize,
    pub local_steps: usize,
    pub artifacts: Artifacts,
}

impl RunReport {
    pub fn from_result(problem: &str, res: &SolveResult, wall_time_s: f64, artifacts: Artifacts) -> Self {
        Self {
            problem: problem.to_string(),
            converged: res.converged,
            termination: res.termination,
            errors: res.report.clone(),
            kkt: res.report.kkt.clone(),
            x: res.iterate.x.iter().copied().collect(),
            lambda: res.iterate.lambda.iter().copied().collect(),
            mu: res.iterate.mu.iter().copied().collect(),
            wall_time_s,
            outer_iterations: res.trace.last().map_or(0, |r| r.k),
            global_steps: res.global_steps,
            local_steps: res.local_steps,
            artifacts,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} E1={:.3e} k={} (global {}, local {}) {:.3}s",
            self.problem,
            if self.converged { "converged" } else { "not converged" },
            self.errors.e1,
            self.outer_iterations,
            self.global_steps,
            self.local_steps,
            self.wall_time_s
        )
    }
}

pub fn init_logging() {
    let level = std::env::var("NPASA_LOG").unwrap_or_else(|_| "warn".to_string());
    let _ = env_logger::Builder::new().parse_filters(&level).format_timestamp(None).try_init();
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Check(args) => cmd_check(&args),
        Command::List(args) => cmd_list(&args),
    }
}

fn load_problems(src: &ProblemArgs) -> Result<Vec<Problem>> {
    let mut out = Vec::new();
    for name in &src.problems {
        out.push(registry::get(name)?);
    }
    for path in &src.files {
        let text = fs::read_to_string(path).map_err(|e| NpasaError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut problem = model::load_problem_json(&text).map_err(|e| match e {
            NpasaError::Parse { path: inner, message } => {
                NpasaError::Parse { path: format!("{}: {inner}", path.display()), message }
            }
            other => other,
        })?;
        let named = serde_json::from_str::<serde_json::Value>(&text).is_ok_and(|v| v.get("name").is_some());
        if let (false, Some(stem)) = (named, path.file_stem()) {
            problem.name = stem.to_string_lossy().into_owned();
        }
        out.push(problem);
    }
    if out.is_empty() {
        return Err(NpasaError::InvalidParameter("no problem given (use --problem or --file)".into()));
    }
    Ok(out)
}

fn load_config(args: &SolveArgs) -> Result<NpasaConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| NpasaError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => NpasaConfig::default(),
    };
    if let Some(eps) = args.eps {
        cfg.epsilon = eps;
    }
    if let Some(k) = args.max_outer {
        cfg.max_outer_iters = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn artifact_path(base: &Option<PathBuf>, batch: bool, name: &str, ext: &str) -> Result<Option<PathBuf>> {
    match base {
        None => Ok(None),
        Some(p) if batch => {
            fs::create_dir_all(p)?;
            Ok(Some(p.join(format!("{name}.{ext}"))))
        }
        Some(p) => Ok(Some(p.clone())),
    }
}

/// Solve one problem, streaming the trace and writing the report.
pub fn solve_one(
    problem: &Problem,
    cfg: &NpasaConfig,
    x0: Option<&[f64]>,
    trace_path: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<RunReport> {
    let x0 = match x0 {
        Some(v) if v.len() != problem.n() => {
            return Err(NpasaError::Dimension(format!("x0 has {} entries, problem has {}", v.len(), problem.n())));
        }
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(problem.n()),
    };
    let lambda0 = DVector::zeros(problem.l());
    let mu0 = DVector::zeros(problem.polyhedron().stacked_len());
    let mut writer = match trace_path {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut write_err: Option<std::io::Error> = None;
    let mut observer = |r: &TraceRecord| {
        if let Some(w) = writer.as_mut() {
            let line = serde_json::to_string(r).expect("trace records serialize");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                write_err.get_or_insert(e);
            }
        }
    };
    let start = Instant::now();
    let res = solver::solve_observed(problem, &x0, &lambda0, &mu0, cfg, Some(&mut observer))?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let artifacts = Artifacts {
        trace: trace_path.map(|p| p.display().to_string()),
        report: report_path.map(|p| p.display().to_string()),
    };
    let report = RunReport::from_result(&problem.name, &res, elapsed, artifacts);
    if let Some(p) = report_path {
        fs::write(p, serde_json::to_string_pretty(&report).expect("reports serialize"))?;
    }
    Ok(report)
}

pub fn cmd_solve(args: &SolveArgs) -> i32 {
    let prepared = load_problems(&args.source).and_then(|ps| Ok((ps, load_config(args)?)));
    let (problems, cfg) = match prepared {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let batch = problems.len() > 1;
    let mut jobs = Vec::new();
    for p in &problems {
        let paths = artifact_path(&args.trace, batch, &p.name, "jsonl")
            .and_then(|t| Ok((t, artifact_path(&args.report, batch, &p.name, "report.json")?)));
        match paths {
            Ok((t, r)) => jobs.push((p, t, r)),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT;
            }
        }
    }
    let x0 = args.x0.as_deref();
    let run_job = |(p, t, r): &(&Problem, Option<PathBuf>, Option<PathBuf>)| {
        solve_one(p, &cfg, x0, t.as_deref(), r.as_deref())
    };
    let workers = args.jobs.max(1).min(jobs.len());
    let results: Vec<Result<RunReport>> = if workers <= 1 {
        jobs.iter().map(run_job).collect()
    } else {
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(run_job).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("solver thread panicked")).collect()
        })
    };
    let mut code = EXIT_OK;
    let mut reports = Vec::new();
    for (res, (p, _, _)) in results.into_iter().zip(&jobs) {
        match res {
            Ok(rep) => {
                if !rep.converged && code == EXIT_OK {
                    code = EXIT_NOT_CONVERGED;
                }
                if !args.json {
                    println!("{}", rep.summary());
                }
                reports.push(rep);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", p.name);
                code = EXIT_INPUT;
            }
        }
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize"));
    }
    code
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub passed: bool,
    pub skipped: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub problem: String,
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed || r.skipped)
    }
}

/// Points at which derivatives are compared: the known solution, if any, and
/// a few fixed pseudo-random points.
fn sample_points(problem: &Problem) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut pts: Vec<DVector<f64>> = problem.known_kkt.iter().map(|k| k.x.clone()).collect();
    for _ in 0..4 {
        pts.push(DVector::from_fn(problem.n(), |_, _| rng.gen_range(-2.0..2.0)));
    }
    pts
}

/// Derivative and projection checks for one problem.
pub fn run_check(problem: &Problem) -> CheckReport {
    let mut rows = Vec::new();
    let mut worst: Option<(f64, String)> = None;
    let mut failure: Option<String> = None;
    for x in sample_points(problem) {
        match model::check_derivatives(problem, &x, model::DEFAULT_FD_STEP) {
            Ok(rep) => {
                let err = rep.max_rel_err_grad.max(rep.max_rel_err_jac);
                if worst.as_ref().is_none_or(|(w, _)| err > *w) {
                    worst = Some((err, format!("max relative error {err:.2e}")));
                }
                if let Some(flag) = rep.flagged.first() {
                    let which = match flag.source {
                        DerivativeSource::Objective => "objective gradient".to_string(),
                        DerivativeSource::Constraint(j) => format!("constraint {j} gradient"),
                    };
                    failure.get_or_insert(format!(
                        "{which}, component {}: analytic {:.6e} vs difference {:.6e}",
                        flag.component, flag.analytic, flag.finite_difference
                    ));
                }
            }
            Err(e) => {
                failure.get_or_insert(format!("evaluation failed: {e}"));
            }
        }
    }
    rows.push(CheckRow {
        check: "derivatives".into(),
        passed: failure.is_none(),
        skipped: false,
        detail: failure.unwrap_or_else(|| worst.map(|w| w.1).unwrap_or_default()),
    });

    let poly = problem.polyhedron();
    if poly.n() + poly.m() > polyproj::ORACLE_LIMIT {
        rows.push(CheckRow {
            check: "projection".into(),
            passed: true,
            skipped: true,
            detail: format!("skipped: n + m = {} exceeds {}", poly.n() + poly.m(), polyproj::ORACLE_LIMIT),
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0ac1e);
        let mut worst = 0.0f64;
        let mut problem_detail = None;
        for _ in 0..20 {
            let x = DVector::from_fn(poly.n(), |_, _| rng.gen_range(-4.0..4.0));
            match (polyproj::project_point(poly, &x), polyproj::oracle_project(poly, &x)) {
                (Ok(a), Ok(b)) => worst = worst.max((a - b).amax()),
                (Err(NpasaError::Infeasible(_)), Err(NpasaError::Infeasible(_))) => {}
                (a, b) => {
                    problem_detail.get_or_insert(format!("solver {:?} vs oracle {:?}", a.err(), b.err()));
                }
            }
        }
        let passed = problem_detail.is_none() && worst <= 1e-8;
        rows.push(CheckRow {
            check: "projection".into(),
            passed,
            skipped: false,
            detail: problem_detail.unwrap_or_else(|| format!("max deviation from oracle {worst:.2e}")),
        });
    }
    CheckReport { problem: problem.name.clone(), rows }
}

pub fn cmd_check(args: &CheckArgs) -> i32 {
    let problems = match load_problems(&args.source) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let reports: Vec<CheckReport> = problems.iter().map(run_check).collect();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize"));
    } else {
        for rep in &reports {
            for row in &rep.rows {
                let status = if row.skipped { "SKIP" } else if row.passed { "PASS" } else { "FAIL" };
                println!("{:<10} {:<12} {status:<5} {}", rep.problem, row.check, row.detail);
            }
        }
    }
    if reports.iter().all(CheckReport::passed) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListRow {
    pub name: String,
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub known_solution: bool,
}

pub fn list_rows() -> Vec<ListRow> {
    registry::all()
        .into_iter()
        .map(|p| ListRow { n: p.n(), l: p.l(), m: p.m(), known_solution: p.known_kkt.is_some(), name: p.name })
        .collect()
}

pub fn cmd_list(args: &ListArgs) -> i32 {
    let rows = list_rows();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    } else {
        println!("{:<6} {:>3} {:>3} {:>3}  known solution", "name", "n", "l", "m");
        for r in rows {
            println!("{:<6} {:>3} {:>3} {:>3}  {}", r.name, r.n, r.l, r.m, if r.known_solution { "yes" } else { "no" });
        }
    }
    EXIT_OK
}
