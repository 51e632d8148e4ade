//! Outer drivers: Newton on a preconditioned system, plain fixed-point
//! iteration, continuation in β, and direct global Newton.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::krylov::gmres;
use crate::linalg::{all_finite, check_len, norm1, norm2, BandedLu};
use crate::local_solver::SolverSettings;
use crate::precond::PreconditionedSystem;
use crate::problems::NonlinearProblem;

/// `‖u - reference‖₁ / ‖reference‖₁`, or the absolute l¹ distance when the
/// reference vanishes.
pub fn relative_l1_error(u: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = u.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
    let scale = norm1(reference);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// One row of the iteration ledger. Row `n` describes the step from `u_{n-1}`
/// to `u_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub ls_g: usize,
    pub ls_in: usize,
    pub ls_min: usize,
    /// Running total `Σ_{j≤n} (ls_in + ls_G)`.
    pub ls_total: usize,
    /// Relative l¹ error of `u_n`, when a reference is known.
    pub error: Option<f64>,
    /// Norm of the residual (or fixed-point step) measured at `u_n`.
    /// NaN when it was never evaluated.
    pub residual: f64,
    /// GMRES stopped on its iteration budget.
    pub gmres_flagged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLedger {
    records: Vec<IterationRecord>,
}

impl IterationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, ls_g: usize, ls_in: usize, ls_min: usize, error: Option<f64>) {
        let ls_total = self.ls_total() + ls_g + ls_in;
        let n = self.records.len() + 1;
        self.records.push(IterationRecord {
            n,
            ls_g,
            ls_in,
            ls_min,
            ls_total,
            error,
            residual: f64::NAN,
            gmres_flagged: false,
        });
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ls_total(&self) -> usize {
        self.records.last().map_or(0, |r| r.ls_total)
    }

    fn set_last_residual(&mut self, r: f64) {
        if let Some(last) = self.records.last_mut() {
            last.residual = r;
        }
    }

    fn flag_last_gmres(&mut self) {
        if let Some(last) = self.records.last_mut() {
            last.gmres_flagged = true;
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub solution: Vec<f64>,
    pub ledger: IterationLedger,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Residual (or first step) norm at the initial guess.
    pub initial_residual: f64,
    /// Residual (or step) norm at the final iterate.
    pub final_residual: f64,
    /// Error of the initial guess, when a reference is known.
    pub initial_error: Option<f64>,
    /// The solver failure that ended the run, if any.
    pub failure: Option<Error>,
}

impl RunResult {
    pub fn ls_total(&self) -> usize {
        self.ledger.ls_total()
    }

    /// Whether any GMRES solve hit its iteration budget.
    pub fn gmres_flagged(&self) -> bool {
        self.ledger.records().iter().any(|r| r.gmres_flagged)
    }
}

fn check_start(u0: &[f64], n: usize, reference: Option<&[f64]>) -> Result<()> {
    check_len(u0.len(), n)?;
    if let Some(r) = reference {
        check_len(r.len(), n)?;
    }
    if !all_finite(u0) {
        return Err(Error::NonFinite("initial guess"));
    }
    Ok(())
}

/// Newton's method on `residual(u) = 0` with matrix-free GMRES for the
/// Newton step and no damping.
///
/// Convergence is declared when `‖residual(u)‖₂ ≤ outer_tol`; the iteration
/// count is the number of Newton updates. Subdomain or coarse failures end
/// the run with `converged = false` and the error in `failure`.
pub fn outer_newton<P: NonlinearProblem>(
    system: &mut PreconditionedSystem<P>,
    u0: &[f64],
    settings: &SolverSettings,
    reference: Option<&[f64]>,
) -> Result<RunResult> {
    settings.validate()?;
    let n = system.dof_count();
    check_start(u0, n, reference)?;
    let max_gmres = settings.max_gmres.unwrap_or(n).max(1);
    let err = |u: &[f64]| reference.map(|r| relative_l1_error(u, r));

    let mut u = u0.to_vec();
    let mut ledger = IterationLedger::new();
    let mut initial_residual = f64::NAN;
    let mut failure = None;
    let mut converged = false;
    let mut last_norm = f64::NAN;
    loop {
        let r = match system.residual(&u) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let rn = norm2(&r);
        last_norm = rn;
        if ledger.is_empty() {
            initial_residual = rn;
        }
        ledger.set_last_residual(rn);
        if !rn.is_finite() {
            failure = Some(Error::NonFinite("preconditioned residual"));
            break;
        }
        if rn <= settings.outer_tol {
            converged = true;
            break;
        }
        if ledger.len() >= settings.max_outer {
            failure = Some(Error::NewtonNonConvergence {
                iterations: ledger.len(),
                residual: rn,
            });
            break;
        }
        let counts = system.last_counts().unwrap_or_default();
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let solved = gmres(
            |v, out| system.apply_cached_jacobian(v, out),
            &rhs,
            settings.gmres_tol,
            max_gmres,
        );
        let (delta, report) = match solved {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        for (ui, d) in u.iter_mut().zip(&delta) {
            *ui += d;
        }
        ledger.push(report.iterations, counts.ls_in, counts.ls_min, err(&u));
        if !report.converged {
            ledger.flag_last_gmres();
        }
    }
    Ok(RunResult {
        outer_iterations: ledger.len(),
        initial_error: err(u0),
        solution: u,
        ledger,
        converged,
        initial_residual,
        final_residual: last_norm,
        failure,
    })
}

/// Iterates `u ← u + residual(u)`, the Schwarz method underlying the system.
///
/// With a reference the run stops once the relative l¹ error is at most
/// `outer_tol`, and gives up once it exceeds `divergence_threshold`. Without
/// one, the l² norm of the step is used instead. A failing subdomain solve
/// ends the run with `converged = false`.
pub fn fixed_point_solve<P: NonlinearProblem>(
    system: &mut PreconditionedSystem<P>,
    u0: &[f64],
    settings: &SolverSettings,
    max_steps: usize,
    reference: Option<&[f64]>,
) -> Result<RunResult> {
    settings.validate()?;
    let n = system.dof_count();
    check_start(u0, n, reference)?;
    let err = |u: &[f64]| reference.map(|r| relative_l1_error(u, r));

    let mut u = u0.to_vec();
    let mut ledger = IterationLedger::new();
    let mut initial_residual = f64::NAN;
    let mut final_residual = f64::NAN;
    let mut failure = None;
    let mut converged = match err(&u) {
        Some(e) => e <= settings.outer_tol,
        None => false,
    };
    while !converged && ledger.len() < max_steps {
        let step = match system.residual(&u) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let sn = norm2(&step);
        if ledger.is_empty() {
            initial_residual = sn;
        }
        if !sn.is_finite() {
            failure = Some(Error::NonFinite("fixed-point step"));
            break;
        }
        let counts = system.last_counts().unwrap_or_default();
        for (ui, s) in u.iter_mut().zip(&step) {
            *ui += s;
        }
        let e = err(&u);
        ledger.push(0, counts.ls_in, counts.ls_min, e);
        ledger.set_last_residual(sn);
        final_residual = sn;
        match e {
            Some(e) if !(e <= settings.divergence_threshold) => break,
            Some(e) => converged = e <= settings.outer_tol,
            None => converged = sn <= settings.outer_tol,
        }
    }
    Ok(RunResult {
        outer_iterations: ledger.len(),
        initial_error: err(u0),
        solution: u,
        ledger,
        converged,
        initial_residual,
        final_residual,
        failure,
    })
}

/// Result of a continuation chain. `failure` holds the β at which the chain
/// stopped together with the cause.
#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub runs: Vec<(f64, RunResult)>,
    pub failure: Option<(f64, Error)>,
}

/// Outer Newton runs for increasing β, each started from the previous
/// solution. `factory(β)` builds the system and, optionally, its reference.
pub fn continuation_solve<P, F>(
    mut factory: F,
    betas: &[f64],
    u0: &[f64],
    settings: &SolverSettings,
) -> Result<ContinuationResult>
where
    P: NonlinearProblem,
    F: FnMut(f64) -> Result<(PreconditionedSystem<P>, Option<Vec<f64>>)>,
{
    if betas.is_empty() {
        return Err(Error::InvalidArgument("continuation needs at least one β".into()));
    }
    if betas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("continuation β values must increase".into()));
    }
    let mut u = u0.to_vec();
    let mut runs = Vec::new();
    for &beta in betas {
        let (mut system, reference) = match factory(beta) {
            Ok(s) => s,
            Err(e) => return Ok(ContinuationResult { runs, failure: Some((beta, e)) }),
        };
        let run = outer_newton(&mut system, &u, settings, reference.as_deref())?;
        let ok = run.converged;
        let cause = run.failure.clone();
        u = run.solution.clone();
        runs.push((beta, run));
        if !ok {
            let e = cause.unwrap_or(Error::NewtonNonConvergence {
                iterations: settings.max_outer,
                residual: f64::NAN,
            });
            return Ok(ContinuationResult { runs, failure: Some((beta, e)) });
        }
    }
    Ok(ContinuationResult { runs, failure: None })
}

/// Newton's method on `F(u) = 0` with a direct banded solve per step.
///
/// Stops when `‖F(u)‖₂ ≤ tol` or when the Newton update is at round-off
/// level relative to `u`. Each ledger row counts one global linear
/// solve as `ls_G = 1`.
pub fn global_newton<P: NonlinearProblem + ?Sized>(
    problem: &P,
    u0: &[f64],
    tol: f64,
    max_iter: usize,
    reference: Option<&[f64]>,
) -> Result<RunResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let n = problem.dof_count();
    check_start(u0, n, reference)?;
    let err = |u: &[f64]| reference.map(|r| relative_l1_error(u, r));
    let mut u = u0.to_vec();
    let mut ledger = IterationLedger::new();
    let mut initial_residual = f64::NAN;
    let mut failure = None;
    let mut converged = false;
    let mut last;
    loop {
        let r = problem.residual(&u)?;
        let rn = norm2(&r);
        last = rn;
        if ledger.is_empty() {
            initial_residual = rn;
        }
        ledger.set_last_residual(rn);
        if !rn.is_finite() {
            failure = Some(Error::NonFinite("global residual"));
            break;
        }
        if rn <= tol {
            converged = true;
            break;
        }
        if ledger.len() >= max_iter {
            failure = Some(Error::NewtonNonConvergence {
                iterations: ledger.len(),
                residual: rn,
            });
            break;
        }
        let lu = match BandedLu::factor(&problem.jacobian(&u)?) {
            Ok(lu) => lu,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let step = lu.solve(&r);
        for (ui, s) in u.iter_mut().zip(&step) {
            *ui -= s;
        }
        ledger.push(1, 0, 0, err(&u));
        if at_roundoff(&step, &u) {
            // the residual cannot be reduced further in floating point
            ledger.set_last_residual(norm2(&problem.residual(&u)?));
            last = ledger.records().last().map_or(last, |r| r.residual);
            converged = true;
            break;
        }
    }
    Ok(RunResult {
        outer_iterations: ledger.len(),
        initial_error: err(u0),
        solution: u,
        ledger,
        converged,
        initial_residual,
        final_residual: last,
        failure,
    })
}

fn at_roundoff(step: &[f64], u: &[f64]) -> bool {
    let su = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let uu = u.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    su <= 16.0 * f64::EPSILON * (1.0 + uu)
}

/// Tolerance used for reference solutions.
pub const REFERENCE_TOL: f64 = 1e-12;

/// Discrete reference solution by global Newton from zero, tightened to
/// [`REFERENCE_TOL`].
pub fn reference_solution<P: NonlinearProblem + ?Sized>(problem: &P) -> Result<Vec<f64>> {
    let n = problem.dof_count();
    let run = global_newton(problem, &vec![0.0; n], REFERENCE_TOL, 100, None)?;
    match run.failure {
        None if run.converged => Ok(run.solution),
        Some(e) => Err(e),
        None => Err(Error::NewtonNonConvergence {
            iterations: run.outer_iterations,
            residual: run.final_residual,
        }),
    }
}
