//! Galerkin coarse problem `F_0(u_0) = R̃_0 F(g + P_0 u_0)` and the two
//! nonlinear coarse corrections built on it. `P_0` vanishes on Dirichlet
//! boundaries; the fixed lift `g` interpolates the boundary data over the
//! same end segments so that coarse states are full approximations of the
//! solution. Corrections are prolonged by `P_0` alone.
//!
//! * FAS: `F_0(R_0 u + C_0(u)) = F_0(R_0 u) - R̃_0 F(u)`, solved from `R_0 u`.
//! * Additive: `F_0(u_0* + C_0^A(u)) = -R̃_0 F(u)` with `F_0(u_0*) = 0`,
//!   solved from `u_0*`.
//!
//! Coarse Jacobians are small and assembled densely.

use alloc::vec;
use alloc::vec::Vec;

use crate::decomposition::DecompositionLayout;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, check_len, norm2, CsrMatrix, DenseLu, DenseMatrix};
use crate::local_solver::{SolverSettings, StateToken};
use crate::problems::NonlinearProblem;

/// The lift `g`: boundary data interpolated with the layout's boundary profiles.
pub fn coarse_lift<P: NonlinearProblem + ?Sized>(problem: &P, layout: &DecompositionLayout) -> Result<Vec<f64>> {
    let data = problem.boundary_data();
    let mut g = vec![0.0; layout.n_cells()];
    if data.is_empty() {
        return Ok(g);
    }
    let profiles = layout.boundary_profiles();
    check_len(data.len(), profiles.len())?;
    for (d, prof) in data.iter().zip(profiles) {
        for (gi, p) in g.iter_mut().zip(prof) {
            *gi += d * p;
        }
    }
    Ok(g)
}

/// `g + P_0 u_0`
pub fn coarse_state<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    u0: &[f64],
) -> Result<Vec<f64>> {
    check_len(problem.dof_count(), layout.n_cells())?;
    let mut fine = layout.coarse_prolong(u0)?;
    for (f, g) in fine.iter_mut().zip(coarse_lift(problem, layout)?) {
        *f += g;
    }
    Ok(fine)
}

pub fn coarse_residual<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    u0: &[f64],
) -> Result<Vec<f64>> {
    let fine = coarse_state(problem, layout, u0)?;
    layout.coarse_restrict_residual(&problem.residual(&fine)?)
}

/// `R̃_0 J(g + P_0 u_0) P_0` as a dense matrix.
pub fn coarse_jacobian<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    u0: &[f64],
) -> Result<DenseMatrix> {
    let fine = coarse_state(problem, layout, u0)?;
    let jac = problem.jacobian(&fine)?;
    Ok(galerkin_product(&jac, layout, &layout.owners()))
}

fn galerkin_product(jac: &CsrMatrix, layout: &DecompositionLayout, owners: &[usize]) -> DenseMatrix {
    let p0 = layout.coarse_prolongation();
    let n0 = layout.coarse_dim();
    let mut out = DenseMatrix::zeros(n0, n0);
    let mut weights = Vec::new();
    for r in 0..jac.nrows() {
        layout.residual_restriction_weights(r, owners, &mut weights);
        let (cols, vals) = jac.row(r);
        for &(s, ws) in &weights {
            for (&c, &v) in cols.iter().zip(vals) {
                let (pc, pv) = p0.row(c);
                for (&j, &w) in pc.iter().zip(pv) {
                    out[(s, j)] += ws * v * w;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CoarseSolveResult {
    /// `C_0(u)` or `C_0^A(u)`.
    pub correction: Vec<f64>,
    /// `J_0 = F_0'(R_0 u)`, the Jacobian at the FAS starting point.
    pub initial_jacobian: Option<DenseMatrix>,
    /// `Ĵ_0`, the coarse Jacobian at the converged coarse iterate.
    pub converged_jacobian: DenseMatrix,
    pub factorization: DenseLu,
    /// `J(u)` on the fine mesh.
    pub fine_jacobian: CsrMatrix,
    pub inner_iterations: usize,
    pub token: StateToken,
}

struct CoarseNewton {
    solution: Vec<f64>,
    iterations: usize,
    first_jacobian: DenseMatrix,
    last_jacobian: DenseMatrix,
    factorization: DenseLu,
}

/// Newton for `F_0(x) = rhs` starting at `x0`.
fn coarse_newton<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    x0: Vec<f64>,
    rhs: &[f64],
    settings: &SolverSettings,
) -> Result<CoarseNewton> {
    let mut x = x0;
    let mut iterations = 0;
    let mut first_jacobian = None;
    loop {
        let mut r = coarse_residual(problem, layout, &x)?;
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri -= bi;
        }
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::CoarseNonConvergence {
                iterations,
                residual: rn,
            });
        }
        let jac = coarse_jacobian(problem, layout, &x)?;
        if first_jacobian.is_none() {
            first_jacobian = Some(jac.clone());
        }
        let lu = DenseLu::factor(&jac).map_err(|_| Error::SingularCoarse)?;
        if rn <= settings.inner_tol {
            return Ok(CoarseNewton {
                solution: x,
                iterations,
                first_jacobian: first_jacobian.unwrap(),
                last_jacobian: jac,
                factorization: lu,
            });
        }
        if iterations >= settings.max_inner {
            return Err(Error::CoarseNonConvergence {
                iterations,
                residual: rn,
            });
        }
        let step = lu.solve(&r);
        for (xi, s) in x.iter_mut().zip(&step) {
            *xi -= s;
        }
        iterations += 1;
    }
}

/// FAS coarse correction `C_0(u)`.
pub fn fas_correction<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    u: &[f64],
    settings: &SolverSettings,
) -> Result<CoarseSolveResult> {
    check_len(u.len(), layout.n_cells())?;
    if !all_finite(u) {
        return Err(Error::NonFinite("coarse correction input"));
    }
    let start = layout.coarse_restrict_mean(u)?;
    let fine_residual = problem.residual(u)?;
    let restricted = layout.coarse_restrict_residual(&fine_residual)?;
    let mut rhs = coarse_residual(problem, layout, &start)?;
    for (b, r) in rhs.iter_mut().zip(&restricted) {
        *b -= r;
    }
    let solve = coarse_newton(problem, layout, start.clone(), &rhs, settings)?;
    let correction = solve.solution.iter().zip(&start).map(|(x, s)| x - s).collect();
    Ok(CoarseSolveResult {
        correction,
        initial_jacobian: Some(solve.first_jacobian),
        converged_jacobian: solve.last_jacobian,
        factorization: solve.factorization,
        fine_jacobian: problem.jacobian(u)?,
        inner_iterations: solve.iterations,
        token: StateToken::of(u),
    })
}

/// `dC_0/du · v = -R_0 v + Ĵ_0⁻¹ (J_0 R_0 v - R̃_0 J(u) v)`.
pub fn fas_correction_jacobian_action(
    result: &CoarseSolveResult,
    layout: &DecompositionLayout,
    u: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    if StateToken::of(u) != result.token {
        return Err(Error::StaleCache);
    }
    fas_action_unchecked(result, layout, v)
}

pub(crate) fn fas_action_unchecked(
    result: &CoarseSolveResult,
    layout: &DecompositionLayout,
    v: &[f64],
) -> Result<Vec<f64>> {
    let j0 = result
        .initial_jacobian
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("coarse result does not come from a FAS solve".into()))?;
    let r0v = layout.coarse_restrict_mean(v)?;
    let jv = layout.coarse_restrict_residual(&result.fine_jacobian.matvec(v))?;
    let rhs: Vec<f64> = j0.matvec(&r0v).iter().zip(&jv).map(|(a, b)| a - b).collect();
    let y = result.factorization.solve(&rhs);
    Ok(y.iter().zip(&r0v).map(|(yi, ri)| yi - ri).collect())
}

/// Solves `F_0(u_0*) = 0` from a zero initial guess.
pub fn aspin_coarse_setup<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    check_len(problem.dof_count(), layout.n_cells())?;
    let n0 = layout.coarse_dim();
    Ok(coarse_newton(problem, layout, vec![0.0; n0], &vec![0.0; n0], settings)?.solution)
}

/// Additive coarse correction `C_0^A(u)`.
pub fn aspin_coarse_correction<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    u: &[f64],
    coarse_solution: &[f64],
    settings: &SolverSettings,
) -> Result<CoarseSolveResult> {
    check_len(u.len(), layout.n_cells())?;
    check_len(coarse_solution.len(), layout.coarse_dim())?;
    if !all_finite(u) {
        return Err(Error::NonFinite("coarse correction input"));
    }
    let rhs: Vec<f64> = layout
        .coarse_restrict_residual(&problem.residual(u)?)?
        .iter()
        .map(|r| -r)
        .collect();
    let solve = coarse_newton(problem, layout, coarse_solution.to_vec(), &rhs, settings)?;
    let correction = solve
        .solution
        .iter()
        .zip(coarse_solution)
        .map(|(x, s)| x - s)
        .collect();
    Ok(CoarseSolveResult {
        correction,
        initial_jacobian: None,
        converged_jacobian: solve.last_jacobian,
        factorization: solve.factorization,
        fine_jacobian: problem.jacobian(u)?,
        inner_iterations: solve.iterations,
        token: StateToken::of(u),
    })
}

/// `dC_0^A/du · v = -Ĵ_0⁻¹ R̃_0 J(u) v`.
pub fn aspin_coarse_correction_jacobian_action(
    result: &CoarseSolveResult,
    layout: &DecompositionLayout,
    u: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    if StateToken::of(u) != result.token {
        return Err(Error::StaleCache);
    }
    aspin_action_unchecked(result, layout, v)
}

pub(crate) fn aspin_action_unchecked(
    result: &CoarseSolveResult,
    layout: &DecompositionLayout,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_len(v.len(), layout.n_cells())?;
    let jv = layout.coarse_restrict_residual(&result.fine_jacobian.matvec(v))?;
    Ok(result.factorization.solve(&jv).iter().map(|y| -y).collect())
}
