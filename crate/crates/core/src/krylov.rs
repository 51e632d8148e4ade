//! Unrestarted GMRES with modified Gram-Schmidt and Givens rotations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};

/// Arnoldi vectors shorter than this end the iteration (lucky breakdown).
pub const BREAKDOWN: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct GmresReport {
    /// Number of operator applications.
    pub iterations: usize,
    /// Final residual norm relative to `‖rhs‖`.
    pub relative_residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration, starting with 1 for the zero guess.
    pub history: Vec<f64>,
}

/// Solves `A x = rhs` from `x = 0`, where `action(v, out)` writes `A v`.
///
/// Running out of iterations is not an error: the best iterate is returned
/// with `converged = false`.
pub fn gmres<F>(mut action: F, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, GmresReport)>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = rhs.len();
    let beta = norm2(rhs);
    if !beta.is_finite() {
        return Err(Error::NonFinite("GMRES right-hand side"));
    }
    if beta == 0.0 {
        return Ok((
            vec![0.0; n],
            GmresReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                history: vec![0.0],
            },
        ));
    }

    let mut basis: Vec<Vec<f64>> = vec![rhs.iter().map(|v| v / beta).collect()];
    // column k of the Hessenberg matrix, already rotated
    let mut hess: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut history = vec![1.0];
    let mut converged = false;
    let mut w = vec![0.0; n];

    while hess.len() < max_iter {
        let k = hess.len();
        action(&basis[k], &mut w)?;
        let mut h = vec![0.0; k + 2];
        for (j, vj) in basis.iter().enumerate() {
            let hj = dot(&w, vj);
            h[j] = hj;
            for (wi, vi) in w.iter_mut().zip(vj) {
                *wi -= hj * vi;
            }
        }
        let hnext = norm2(&w);
        if !hnext.is_finite() {
            return Err(Error::NonFinite("GMRES Arnoldi vector"));
        }
        h[k + 1] = hnext;

        for j in 0..k {
            let t = cs[j] * h[j] + sn[j] * h[j + 1];
            h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
            h[j] = t;
        }
        let r = libm::hypot(h[k], h[k + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (h[k] / r, h[k + 1] / r) };
        h[k] = r;
        h[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        hess.push(h);

        let rel = g[k + 1].abs() / beta;
        history.push(rel);
        if rel <= tol || hnext <= BREAKDOWN * beta {
            converged = true;
            break;
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
    }

    // back substitution on the rotated triangular system
    let m = hess.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| hess[j][i] * y[j]).sum();
        y[i] = if hess[i][i] != 0.0 { (g[i] - s) / hess[i][i] } else { 0.0 };
    }
    let mut x = vec![0.0; n];
    for (yj, vj) in y.iter().zip(&basis) {
        for (xi, vi) in x.iter_mut().zip(vj) {
            *xi += yj * vi;
        }
    }
    let relative_residual = *history.last().unwrap();
    Ok((
        x,
        GmresReport {
            iterations: m,
            relative_residual,
            converged,
            history,
        },
    ))
}
