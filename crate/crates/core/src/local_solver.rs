//! Nonlinear subdomain solves.
//!
//! For subdomain `i` the correction `C_i(u)` solves `R_i F(u + P_i C_i(u)) = 0`
//! with the values of `u` outside `M_i` frozen. The solve keeps the factorized
//! local Jacobian `R_i J(u⁽ⁱ⁾) P_i` and the columns of `R_i J(u⁽ⁱ⁾)` outside
//! `M_i`, which is everything needed for the exact derivative of `C_i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::decomposition::DecompositionLayout;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, check_len, norm2, BandedLu, CsrMatrix};
use crate::problems::NonlinearProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub gmres_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Upper bound on GMRES iterations; `None` means the system dimension.
    pub max_gmres: Option<usize>,
    pub max_fixed_point_steps: usize,
    /// Fixed-point runs stop once the error exceeds this value.
    pub divergence_threshold: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            inner_tol: 1e-8,
            outer_tol: 1e-8,
            gmres_tol: 1e-8,
            max_inner: 50,
            max_outer: 50,
            max_gmres: None,
            max_fixed_point_steps: 500,
            divergence_threshold: 1e6,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.inner_tol, self.outer_tol, self.gmres_tol, self.divergence_threshold];
        if positive.iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("tolerances must be positive and finite".into()))
        }
    }
}

/// Fingerprint of a state vector, used to tie cached linearizations to the
/// point they were computed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateToken(u64);

impl StateToken {
    pub fn of(u: &[f64]) -> Self {
        // FNV-1a over the bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in u {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h ^= u.len() as u64;
        Self(h)
    }
}

#[derive(Debug, Clone)]
pub struct LocalSolveResult {
    pub subdomain: usize,
    /// `C_i(u)` in the local numbering of `M_i`.
    pub correction: Vec<f64>,
    /// `A_ii = R_i J(u⁽ⁱ⁾) P_i`, local numbering.
    pub local_jacobian: CsrMatrix,
    pub factorization: BandedLu,
    /// Columns of `R_i J(u⁽ⁱ⁾)` outside `M_i`, global column numbering.
    pub coupling: CsrMatrix,
    /// Number of linear subdomain solves done by the inner Newton iteration.
    pub inner_iterations: usize,
    pub token: StateToken,
}

/// Splits rows of a global Jacobian into the block on `cells` (local columns)
/// and the remaining columns (global numbering).
pub(crate) fn split_local_block(
    rows: &CsrMatrix,
    cells: &[usize],
    n_global: usize,
) -> (CsrMatrix, CsrMatrix) {
    let mut inner = CsrMatrix::new(cells.len());
    let mut outer = CsrMatrix::new(n_global);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in 0..rows.nrows() {
        a.clear();
        b.clear();
        let (cols, vals) = rows.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            match cells.binary_search(&c) {
                Ok(p) => a.push((p, v)),
                Err(_) => b.push((c, v)),
            }
        }
        inner.push_row(&mut a);
        outer.push_row(&mut b);
    }
    (inner, outer)
}

/// Factorized local block `R_i J(w) P_i` together with its coupling columns.
pub(crate) fn local_linearization<P: NonlinearProblem + ?Sized>(
    problem: &P,
    cells: &[usize],
    w: &[f64],
    subdomain: usize,
) -> Result<(CsrMatrix, BandedLu, CsrMatrix)> {
    let rows = problem.jacobian_rows(w, cells)?;
    let (inner, coupling) = split_local_block(&rows, cells, w.len());
    let lu = BandedLu::factor(&inner).map_err(|_| Error::SingularLocal { subdomain })?;
    Ok((inner, lu, coupling))
}

/// Solves `R_i F(u + P_i C_i) = 0` for `C_i` by Newton's method from `C_i = 0`.
pub fn solve_local<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    i: usize,
    u: &[f64],
    settings: &SolverSettings,
) -> Result<LocalSolveResult> {
    check_len(problem.dof_count(), layout.n_cells())?;
    check_len(u.len(), layout.n_cells())?;
    if !all_finite(u) {
        return Err(Error::NonFinite("subdomain boundary data"));
    }
    let cells = layout.subdomain(i)?.overlap();
    let mut w = u.to_vec();
    let mut correction = vec![0.0; cells.len()];
    let mut iterations = 0;
    loop {
        let r = problem.residual_rows(&w, cells)?;
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::LocalNonConvergence {
                subdomain: i,
                iterations,
                residual: rn,
            });
        }
        if rn <= settings.inner_tol {
            break;
        }
        if iterations >= settings.max_inner {
            return Err(Error::LocalNonConvergence {
                subdomain: i,
                iterations,
                residual: rn,
            });
        }
        let (_, lu, _) = local_linearization(problem, cells, &w, i)?;
        let mut step = r;
        lu.solve_in_place(&mut step);
        for ((c, &cell), s) in correction.iter_mut().zip(cells).zip(&step) {
            *c -= s;
            w[cell] -= s;
        }
        iterations += 1;
    }
    let (local_jacobian, factorization, coupling) = local_linearization(problem, cells, &w, i)?;
    Ok(LocalSolveResult {
        subdomain: i,
        correction,
        local_jacobian,
        factorization,
        coupling,
        inner_iterations: iterations,
        token: StateToken::of(u),
    })
}

/// `dC_i/du · v = -A_ii⁻¹ R_i J(u⁽ⁱ⁾) v`, using the factorization cached by
/// [`solve_local`] at `u`.
///
/// `R_i J(u⁽ⁱ⁾) v = A_ii R_i v + coupling · v`, so the action reduces to
/// `-(R_i v + A_ii⁻¹ coupling · v)`: one sparse product and one
/// back-substitution.
pub fn local_correction_jacobian_action(
    result: &LocalSolveResult,
    layout: &DecompositionLayout,
    u: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    if StateToken::of(u) != result.token {
        return Err(Error::StaleCache);
    }
    local_action_unchecked(result, layout, v)
}

pub(crate) fn local_action_unchecked(
    result: &LocalSolveResult,
    layout: &DecompositionLayout,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_len(v.len(), layout.n_cells())?;
    let cells = layout.subdomain(result.subdomain)?.overlap();
    let mut y = result.coupling.matvec(v);
    result.factorization.solve_in_place(&mut y);
    for (yi, &c) in y.iter_mut().zip(cells) {
        *yi = -(*yi + v[c]);
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub results: Vec<LocalSolveResult>,
    /// Largest inner iteration count over the subdomains.
    pub ls_in_max: usize,
    /// Smallest inner iteration count over the subdomains.
    pub ls_in_min: usize,
}

/// Solves every subdomain problem at `u`. The first failure is returned.
pub fn sweep_locals<P: NonlinearProblem + ?Sized>(
    problem: &P,
    layout: &DecompositionLayout,
    u: &[f64],
    settings: &SolverSettings,
) -> Result<Sweep> {
    let results = (0..layout.subdomain_count())
        .map(|i| solve_local(problem, layout, i, u, settings))
        .collect::<Result<Vec<_>>>()?;
    let ls_in_max = results.iter().map(|r| r.inner_iterations).max().unwrap_or(0);
    let ls_in_min = results.iter().map(|r| r.inner_iterations).min().unwrap_or(0);
    Ok(Sweep {
        results,
        ls_in_max,
        ls_in_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ForchheimerProblem1D;

    #[test]
    fn token_tracks_state() {
        let a = [1.0, 2.0];
        assert_eq!(StateToken::of(&a), StateToken::of(&[1.0, 2.0]));
        assert_ne!(StateToken::of(&a), StateToken::of(&[1.0, 2.0 + 1e-15]));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let p = ForchheimerProblem1D::smooth(12, 1.5, 1.0).unwrap();
        let l = DecompositionLayout::build_1d(12, 2, 1).unwrap();
        let u = vec![0.0; 12];
        let r = solve_local(&p, &l, 0, &u, &SolverSettings::default()).unwrap();
        let mut moved = u.clone();
        moved[3] = 0.5;
        assert_eq!(
            local_correction_jacobian_action(&r, &l, &moved, &u).unwrap_err(),
            Error::StaleCache
        );
        assert!(local_correction_jacobian_action(&r, &l, &u, &u).is_ok());
    }

    #[test]
    fn nonconvergence_is_reported_with_subdomain() {
        let p = ForchheimerProblem1D::smooth(12, 1.5, 1.0).unwrap();
        let l = DecompositionLayout::build_1d(12, 2, 1).unwrap();
        let s = SolverSettings {
            max_inner: 0,
            ..SolverSettings::default()
        };
        match solve_local(&p, &l, 1, &[0.0; 12], &s) {
            Err(Error::LocalNonConvergence { subdomain: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exterior_untouched_and_local_residual_small() {
        let p = ForchheimerProblem1D::smooth(20, 1.5, 1.0).unwrap();
        let l = DecompositionLayout::build_1d(20, 3, 2).unwrap();
        let u: Vec<f64> = (0..20).map(|k| 0.05 * k as f64).collect();
        for i in 0..3 {
            let r = solve_local(&p, &l, i, &u, &SolverSettings::default()).unwrap();
            let mut w = u.clone();
            l.prolong_add(i, 1.0, &r.correction, &mut w).unwrap();
            let cells = l.subdomain(i).unwrap().overlap();
            for k in 0..20 {
                if cells.binary_search(&k).is_err() {
                    assert_eq!(w[k], u[k]);
                }
            }
            let res = p.residual_rows(&w, cells).unwrap();
            assert!(norm2(&res) <= 1e-8);
        }
    }
}
