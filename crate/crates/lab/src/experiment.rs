//! Runs the cross product of a config and writes the result files.
//!
//! Output layout under the output directory:
//!
//! | file | contents |
//! |---|---|
//! | `results.csv` | `method,I,k,beta,outer_iters,LS_total,converged` |
//! | `iterations.csv` | `method,I,k,beta,n,ls_G,ls_in,ls_min,error,residual` |
//! | `curves/<run>.csv` | `step,error,LS` with step 0 the initial guess |
//! | `residuals/<layout>.csv` | `cell,residual,interface` after one RAS step |
//! | `summary.json` | config echo, versions, seed, wall times, failures |
//!
//! Everything except `summary.json` is a pure function of the config, so
//! repeated runs produce byte-identical CSV files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use raspen_core::{
    fixed_point_solve, global_newton, outer_newton, reference_solution, DecompositionLayout, DiffusionProblem2D,
    Error as CoreError, ForchheimerProblem1D, IterationRecord, NonlinearProblem, PreconditionedSystem,
    PreconditionerKind, RunResult,
};
use serde_json::json;

use crate::config::{ExperimentConfig, FieldSpec, InitialGuess, Method, ProblemKind};
use crate::error::{LabError, Result};

/// The two problem families behind one type so that jobs can be mixed.
#[derive(Debug, Clone)]
pub enum AnyProblem {
    Forchheimer(ForchheimerProblem1D),
    Diffusion(DiffusionProblem2D),
}

impl NonlinearProblem for AnyProblem {
    fn dof_count(&self) -> usize {
        match self {
            AnyProblem::Forchheimer(p) => p.dof_count(),
            AnyProblem::Diffusion(p) => p.dof_count(),
        }
    }

    fn residual_row(&self, u: &[f64], row: usize) -> f64 {
        match self {
            AnyProblem::Forchheimer(p) => p.residual_row(u, row),
            AnyProblem::Diffusion(p) => p.residual_row(u, row),
        }
    }

    fn jacobian_row(&self, u: &[f64], row: usize, entries: &mut Vec<(usize, f64)>) {
        match self {
            AnyProblem::Forchheimer(p) => p.jacobian_row(u, row, entries),
            AnyProblem::Diffusion(p) => p.jacobian_row(u, row, entries),
        }
    }

    fn boundary_data(&self) -> Vec<f64> {
        match self {
            AnyProblem::Forchheimer(p) => p.boundary_data(),
            AnyProblem::Diffusion(p) => p.boundary_data(),
        }
    }
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub method: Method,
    pub subdomains: usize,
    pub overlap: usize,
    pub beta: Option<f64>,
    pub outer_iters: usize,
    pub ls_total: usize,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
    pub initial_error: Option<f64>,
    pub reason: Option<String>,
    pub gmres_flagged: bool,
    pub wall_time: f64,
}

impl RunRow {
    fn from_run(method: Method, key: &Key, run: &RunResult, settings_threshold: f64) -> Self {
        let reason = match (&run.failure, run.converged) {
            (Some(e), _) => Some(e.to_string()),
            (None, true) => None,
            (None, false) => {
                let last = run.ledger.records().last().and_then(|r| r.error);
                Some(match last {
                    Some(e) if !(e <= settings_threshold) => format!("diverged (error {e:e})"),
                    _ => format!("no convergence after {} iterations", run.outer_iterations),
                })
            }
        };
        RunRow {
            method,
            subdomains: key.subdomains,
            overlap: key.overlap,
            beta: key.beta,
            outer_iters: run.outer_iterations,
            ls_total: run.ls_total(),
            converged: run.converged,
            records: run.ledger.records().to_vec(),
            initial_error: run.initial_error,
            reason,
            gmres_flagged: run.gmres_flagged(),
            wall_time: 0.0,
        }
    }

    fn failed(method: Method, key: &Key, reason: String) -> Self {
        RunRow {
            method,
            subdomains: key.subdomains,
            overlap: key.overlap,
            beta: key.beta,
            outer_iters: 0,
            ls_total: 0,
            converged: false,
            records: Vec::new(),
            initial_error: None,
            reason: Some(reason),
            gmres_flagged: false,
            wall_time: 0.0,
        }
    }

    /// File stem used for the curve of this run.
    pub fn stem(&self) -> String {
        stem(self.method.name(), self.subdomains, self.overlap, self.beta)
    }
}

/// Residual `F` after one RAS step from the initial guess.
#[derive(Debug, Clone)]
pub struct ResidualExport {
    pub subdomains: usize,
    pub overlap: usize,
    pub beta: Option<f64>,
    pub values: Vec<f64>,
    /// Cells whose stencil reaches a cell owned by another subdomain.
    pub interface: Vec<bool>,
    pub max_off_interface: f64,
    pub within_inner_tol: bool,
}

impl ResidualExport {
    pub fn stem(&self) -> String {
        stem("first_ras", self.subdomains, self.overlap, self.beta)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<RunRow>,
    pub residuals: Vec<ResidualExport>,
    /// Layouts whose residual export failed, with the reason.
    pub residual_failures: Vec<(usize, usize, Option<f64>, String)>,
    /// β values (or `None` in 2D) without a reference solution.
    pub reference_failures: Vec<(usize, Option<f64>, String)>,
    pub wall_time: f64,
}

impl ExperimentOutput {
    pub fn row(&self, method: Method, subdomains: usize, overlap: usize, beta: Option<f64>) -> Option<&RunRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.subdomains == subdomains && r.overlap == overlap && r.beta == beta
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    subdomains: usize,
    overlap: usize,
    beta: Option<f64>,
}

fn stem(name: &str, i: usize, k: usize, beta: Option<f64>) -> String {
    match beta {
        Some(b) => format!("{name}_I{i}_k{k}_beta{b}"),
        None => format!("{name}_I{i}_k{k}"),
    }
}

/// Builds the problem for `subdomains` subdomains at `beta`.
pub fn build_problem(
    cfg: &ExperimentConfig,
    files: Option<&(Vec<f64>, Vec<f64>)>,
    subdomains: usize,
    beta: Option<f64>,
) -> Result<AnyProblem> {
    let n = cfg.cells_for(subdomains);
    let p = match cfg.problem {
        ProblemKind::Diffusion2d => AnyProblem::Diffusion(DiffusionProblem2D::standard(n, n)?),
        ProblemKind::Forchheimer1d => {
            let beta = beta.unwrap_or(0.0);
            let p = match &cfg.field {
                FieldSpec::Smooth => ForchheimerProblem1D::smooth(n, cfg.length, beta)?,
                FieldSpec::Random { .. } => {
                    let f = cfg.field.random_field().expect("random field");
                    f.problem(n, cfg.length, beta)?
                }
                FieldSpec::File { .. } => {
                    let (l, s) = files.ok_or_else(|| LabError::Config("field files not loaded".into()))?;
                    ForchheimerProblem1D::new(
                        cfg.length,
                        beta,
                        l.clone(),
                        s.clone(),
                        ForchheimerProblem1D::DEFAULT_DIRICHLET,
                    )?
                }
            };
            AnyProblem::Forchheimer(p)
        }
    };
    Ok(p)
}

/// Reference solution by global Newton from zero. For 1D problems where that
/// fails, falls back to a warm-started chain in β.
pub fn reference_for(problem: &AnyProblem) -> std::result::Result<Vec<f64>, CoreError> {
    let direct = reference_solution(problem);
    let AnyProblem::Forchheimer(p) = problem else {
        return direct;
    };
    if direct.is_ok() || p.beta() == 0.0 {
        return direct;
    }
    let mut u = vec![0.0; p.cells()];
    for t in [0.0, 0.1, 0.2, 0.5, 1.0] {
        let q = p.with_beta(t * p.beta())?;
        let run = global_newton(&q, &u, raspen_core::newton::REFERENCE_TOL, 100, None)?;
        if !run.converged {
            return direct;
        }
        u = run.solution;
    }
    Ok(u)
}

fn initial_guess(cfg: &ExperimentConfig, problem: &AnyProblem) -> Vec<f64> {
    match (cfg.initial_guess, problem) {
        (InitialGuess::Linear, AnyProblem::Forchheimer(p)) => {
            let (a, b) = p.dirichlet();
            p.centres().iter().map(|x| a + (b - a) * x / p.length()).collect()
        }
        _ => vec![0.0; problem.dof_count()],
    }
}

struct Prepared {
    problem: AnyProblem,
    reference: Option<Vec<f64>>,
}

/// Runs a chain of β values for one method and layout, each run started from
/// the previous solution when `warm` is set.
fn run_chain(
    cfg: &ExperimentConfig,
    method: Method,
    layout: &DecompositionLayout,
    subdomains: usize,
    overlap: usize,
    prepared: &[(Option<f64>, &Prepared)],
    warm: bool,
) -> Vec<RunRow> {
    let mut rows = Vec::with_capacity(prepared.len());
    let mut start: Option<Vec<f64>> = None;
    let mut stopped: Option<String> = None;
    for &(beta, p) in prepared {
        let key = Key { subdomains, overlap, beta };
        if let Some(why) = &stopped {
            rows.push(RunRow::failed(method, &key, why.clone()));
            continue;
        }
        let u0 = match (&start, warm) {
            (Some(u), true) => u.clone(),
            _ => initial_guess(cfg, &p.problem),
        };
        let (row, solution) = run_keeping_solution(cfg, method, layout, p, &u0, &key);
        if warm {
            match solution {
                Some(u) if row.converged => start = Some(u),
                _ => stopped = Some(format!("continuation stopped at beta = {}", beta.unwrap_or(0.0))),
            }
        }
        rows.push(row);
    }
    rows
}

fn run_keeping_solution(
    cfg: &ExperimentConfig,
    method: Method,
    layout: &DecompositionLayout,
    prepared: &Prepared,
    u0: &[f64],
    key: &Key,
) -> (RunRow, Option<Vec<f64>>) {
    let s = cfg.settings;
    let start = Instant::now();
    let reference = prepared.reference.as_deref();
    let problem = &prepared.problem;
    let run = match method.kind() {
        None => global_newton(problem, u0, s.outer_tol, s.max_outer, reference),
        Some(kind) => {
            let mode = if method.is_fixed_point() {
                kind.default_mode()
            } else {
                cfg.jacobian_mode(kind)
            };
            PreconditionedSystem::new(problem, layout.clone(), kind, mode, s).and_then(|mut sys| {
                if method.is_fixed_point() {
                    fixed_point_solve(&mut sys, u0, &s, s.max_fixed_point_steps, reference)
                } else {
                    outer_newton(&mut sys, u0, &s, reference)
                }
            })
        }
    };
    let (mut row, solution) = match run {
        Ok(run) => (
            RunRow::from_run(method, key, &run, s.divergence_threshold),
            Some(run.solution),
        ),
        Err(e) => (RunRow::failed(method, key, e.to_string()), None),
    };
    row.wall_time = start.elapsed().as_secs_f64();
    (row, solution)
}

fn residual_export(
    cfg: &ExperimentConfig,
    layout: &DecompositionLayout,
    prepared: &Prepared,
    key: &Key,
) -> std::result::Result<ResidualExport, CoreError> {
    let problem = &prepared.problem;
    let u0 = initial_guess(cfg, problem);
    let mut sys = PreconditionedSystem::with_default_mode(problem, layout.clone(), PreconditionerKind::Raspen1, cfg.settings)?;
    let u1 = sys.fixed_point_step(&u0)?;
    let values = problem.residual(&u1)?;
    let owners = layout.owners();
    let mut entries = Vec::new();
    let interface: Vec<bool> = (0..values.len())
        .map(|j| {
            entries.clear();
            problem.jacobian_row(&u1, j, &mut entries);
            entries.iter().any(|&(c, _)| owners[c] != owners[j])
        })
        .collect();
    let max_off_interface = values
        .iter()
        .zip(&interface)
        .filter(|(_, &at)| !at)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
    Ok(ResidualExport {
        subdomains: key.subdomains,
        overlap: key.overlap,
        beta: key.beta,
        values,
        interface,
        max_off_interface,
        within_inner_tol: max_off_interface <= cfg.settings.inner_tol,
    })
}

/// Runs every combination of the config on the current rayon pool.
///
/// All problems and layouts are built before the first solve, so an invalid
/// combination fails the whole call without producing results. Failures of
/// individual runs are recorded in their rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let clock = Instant::now();
    let files = cfg.load_field_files()?;
    let betas = cfg.beta_values();

    // problems depend on (I, β) through the mesh size
    let mut problems = BTreeMap::new();
    for &i in &cfg.subdomains {
        for (bi, &beta) in betas.iter().enumerate() {
            let p = build_problem(cfg, files.as_ref(), i, beta)?;
            problems.insert((i, bi), p);
        }
    }
    let mut layouts = BTreeMap::new();
    for &i in &cfg.subdomains {
        for &k in &cfg.overlaps {
            layouts.insert((i, k), cfg.layout(i, k)?);
        }
    }

    let keys: Vec<(usize, usize)> = problems.keys().copied().collect();
    let prepared: Vec<((usize, usize), Prepared, Option<String>)> = keys
        .into_par_iter()
        .map(|key| {
            let problem = problems[&key].clone();
            let (reference, why) = match reference_for(&problem) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            (key, Prepared { problem, reference }, why)
        })
        .collect();
    let mut reference_failures = Vec::new();
    let mut by_key = BTreeMap::new();
    for (key, p, why) in prepared {
        if let Some(why) = why {
            reference_failures.push((key.0, betas[key.1], why));
        }
        by_key.insert(key, p);
    }

    // one job per method and layout; without continuation each β is its own job
    let mut jobs = Vec::new();
    for &method in &cfg.methods {
        for &i in &cfg.subdomains {
            for &k in &cfg.overlaps {
                if cfg.continuation {
                    jobs.push((method, i, k, (0..betas.len()).collect::<Vec<_>>()));
                } else {
                    for bi in 0..betas.len() {
                        jobs.push((method, i, k, vec![bi]));
                    }
                }
            }
        }
    }
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|(method, i, k, bis)| {
            let chain: Vec<(Option<f64>, &Prepared)> = bis.iter().map(|&bi| (betas[bi], &by_key[&(*i, bi)])).collect();
            run_chain(cfg, *method, &layouts[&(*i, *k)], *i, *k, &chain, cfg.continuation)
        })
        .flatten()
        .collect();

    let mut exports = Vec::new();
    for &i in &cfg.subdomains {
        for &k in &cfg.overlaps {
            for (bi, &beta) in betas.iter().enumerate() {
                exports.push((i, k, bi, beta));
            }
        }
    }
    let results: Vec<_> = exports
        .par_iter()
        .map(|&(i, k, bi, beta)| {
            let key = Key { subdomains: i, overlap: k, beta };
            residual_export(cfg, &layouts[&(i, k)], &by_key[&(i, bi)], &key).map_err(|e| (i, k, beta, e.to_string()))
        })
        .collect();
    let mut residuals = Vec::new();
    let mut residual_failures = Vec::new();
    for r in results {
        match r {
            Ok(x) => residuals.push(x),
            Err(f) => residual_failures.push(f),
        }
    }

    Ok(ExperimentOutput {
        rows,
        residuals,
        residual_failures,
        reference_failures,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// [`run_experiment`] on a pool of `threads` workers (`None` for the rayon
/// default).
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutput> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}

fn fmt_beta(beta: Option<f64>) -> String {
    beta.map(|b| b.to_string()).unwrap_or_default()
}

fn fmt_sci(v: Option<f64>) -> String {
    match v {
        Some(v) if !v.is_nan() => format!("{v:e}"),
        _ => String::new(),
    }
}

pub const RESULTS_HEADER: [&str; 7] = ["method", "I", "k", "beta", "outer_iters", "LS_total", "converged"];
pub const ITERATIONS_HEADER: [&str; 10] =
    ["method", "I", "k", "beta", "n", "ls_G", "ls_in", "ls_min", "error", "residual"];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Facts about the invocation that go into `summary.json`.
#[derive(Debug, Clone, Default)]
pub struct RunInfo {
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Writes all result files into `dir`, creating it if needed.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path, info: &RunInfo) -> Result<()> {
    fs::create_dir_all(dir.join("curves")).map_err(|e| LabError::io(dir, e))?;
    fs::create_dir_all(dir.join("residuals")).map_err(|e| LabError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("results.csv"))?;
    w.write_record(RESULTS_HEADER)?;
    for r in &out.rows {
        w.write_record([
            r.method.name().to_string(),
            r.subdomains.to_string(),
            r.overlap.to_string(),
            fmt_beta(r.beta),
            r.outer_iters.to_string(),
            r.ls_total.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| LabError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("iterations.csv"))?;
    w.write_record(ITERATIONS_HEADER)?;
    for r in &out.rows {
        for rec in &r.records {
            w.write_record([
                r.method.name().to_string(),
                r.subdomains.to_string(),
                r.overlap.to_string(),
                fmt_beta(r.beta),
                rec.n.to_string(),
                rec.ls_g.to_string(),
                rec.ls_in.to_string(),
                rec.ls_min.to_string(),
                fmt_sci(rec.error),
                fmt_sci(Some(rec.residual)),
            ])?;
        }
    }
    w.flush().map_err(|e| LabError::io(dir, e))?;

    if cfg.curves {
        for r in &out.rows {
            let path = dir.join("curves").join(format!("{}.csv", r.stem()));
            let mut w = csv_writer(&path)?;
            w.write_record(["step", "error", "LS"])?;
            w.write_record(["0".to_string(), fmt_sci(r.initial_error), "0".to_string()])?;
            for rec in &r.records {
                w.write_record([rec.n.to_string(), fmt_sci(rec.error), rec.ls_total.to_string()])?;
            }
            w.flush().map_err(|e| LabError::io(&path, e))?;
        }
    }

    for x in &out.residuals {
        let path = dir.join("residuals").join(format!("{}.csv", x.stem()));
        let mut w = csv_writer(&path)?;
        w.write_record(["cell", "residual", "interface"])?;
        for (j, (v, at)) in x.values.iter().zip(&x.interface).enumerate() {
            w.write_record([j.to_string(), format!("{v:e}"), (*at as u8).to_string()])?;
        }
        w.flush().map_err(|e| LabError::io(&path, e))?;
    }

    let runs: Vec<_> = out
        .rows
        .iter()
        .map(|r| {
            json!({
                "method": r.method.name(),
                "I": r.subdomains,
                "k": r.overlap,
                "beta": r.beta,
                "outer_iters": r.outer_iters,
                "LS_total": r.ls_total,
                "converged": r.converged,
                "gmres_budget_hit": r.gmres_flagged,
                "wall_time_s": r.wall_time,
                "reason": r.reason,
            })
        })
        .collect();
    let failures: Vec<_> = out
        .rows
        .iter()
        .filter(|r| !r.converged)
        .map(|r| {
            json!({
                "method": r.method.name(),
                "I": r.subdomains,
                "k": r.overlap,
                "beta": r.beta,
                "reason": r.reason,
            })
        })
        .collect();
    let residuals: Vec<_> = out
        .residuals
        .iter()
        .map(|x| {
            json!({
                "file": format!("residuals/{}.csv", x.stem()),
                "I": x.subdomains,
                "k": x.overlap,
                "beta": x.beta,
                "max_off_interface": x.max_off_interface,
                "within_inner_tol": x.within_inner_tol,
            })
        })
        .chain(out.residual_failures.iter().map(|(i, k, beta, why)| {
            json!({ "I": i, "k": k, "beta": beta, "error": why })
        }))
        .collect();
    let references: Vec<_> = out
        .reference_failures
        .iter()
        .map(|(i, beta, why)| json!({ "I": i, "beta": beta, "error": why }))
        .collect();
    let summary = json!({
        "config": cfg.raw,
        "config_path": info.config_path,
        "seed": info.seed,
        "threads": info.threads,
        "versions": {
            "raspen": env!("CARGO_PKG_VERSION"),
            "raspen-core": raspen_core::VERSION,
        },
        "wall_time_s": out.wall_time,
        "runs": runs,
        "failures": failures,
        "reference_failures": references,
        "residual_exports": residuals,
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(&path, text + "\n").map_err(|e| LabError::io(&path, e))
}
