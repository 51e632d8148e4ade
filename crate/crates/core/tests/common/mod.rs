#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raspen_core::linalg::CsrMatrix;
use raspen_core::{DecompositionLayout, NonlinearProblem, PreconditionedSystem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Linear ramp from 0 to 1 plus a perturbation, away from flux kinks.
pub fn generic_state(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> Vec<f64> {
    (0..n)
        .map(|k| (k as f64 + 0.5) / n as f64 + amplitude * rng.random_range(-1.0..1.0))
        .collect()
}

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            out[(i, j)] += v;
        }
    }
    out
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Dense `R_i` for subdomain `i`.
pub fn restriction(layout: &DecompositionLayout, i: usize) -> DMatrix<f64> {
    let s = &layout.subdomains()[i];
    let mut r = DMatrix::zeros(s.len(), layout.n_cells());
    for (p, &c) in s.overlap().iter().enumerate() {
        r[(p, c)] = 1.0;
    }
    r
}

/// Dense `P̃_i`: `P_i` with the rows outside the owned cells zeroed.
pub fn restricted_prolongation(layout: &DecompositionLayout, i: usize) -> DMatrix<f64> {
    let s = &layout.subdomains()[i];
    let mut p = DMatrix::zeros(layout.n_cells(), s.len());
    for (p_local, &c) in s.overlap().iter().enumerate() {
        if s.owned().contains(&c) {
            p[(c, p_local)] = 1.0;
        }
    }
    p
}

/// Dense coarse restriction of residuals, built column by column.
pub fn coarse_residual_restriction(layout: &DecompositionLayout) -> DMatrix<f64> {
    let n = layout.n_cells();
    let mut out = DMatrix::zeros(layout.coarse_dim(), n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = layout.coarse_restrict_residual(&e).unwrap();
        for (i, v) in col.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Central differences of the preconditioned residual along `v`.
pub fn fd_residual<P: NonlinearProblem>(
    sys: &mut PreconditionedSystem<P>,
    u: &[f64],
    v: &[f64],
    eps: f64,
) -> Vec<f64> {
    let plus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - eps * b).collect();
    let fp = sys.residual(&plus).unwrap();
    let fm = sys.residual(&minus).unwrap();
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}
