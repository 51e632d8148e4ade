//! Small dense, banded and compressed-row kernels used by the solvers.
//!
//! Everything here is sized for desk-scale problems: subdomain systems with a
//! few hundred unknowns and coarse systems with at most a few hundred rows.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn check_len(found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(ncols: usize) -> Self {
        Self {
            nrows: 0,
            ncols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row. Duplicate columns are summed and entries sorted by column.
    pub fn push_row(&mut self, entries: &mut Vec<(usize, f64)>) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for &(c, v) in entries.iter() {
            debug_assert!(c < self.ncols);
            if last == Some(c) {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.col_idx.push(c);
                self.values.push(v);
                last = Some(c);
            }
        }
        self.nrows += 1;
        self.row_ptr.push(self.col_idx.len());
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut m = Self::new(ncols);
        for mut r in rows {
            m.push_row(&mut r);
        }
        m
    }

    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut m = Self::new(dense.ncols());
        let mut row = Vec::new();
        for i in 0..dense.nrows() {
            row.clear();
            row.extend(
                (0..dense.ncols())
                    .map(|j| (j, dense[(i, j)]))
                    .filter(|e| e.1 != 0.0),
            );
            m.push_row(&mut row);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n);
        for i in 0..n {
            m.push_row(&mut vec![(i, 1.0)]);
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(i, c)] = v;
            }
        }
        d
    }

    /// Lower and upper bandwidth of a square matrix.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.nrows {
            for &c in self.row(i).0 {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        for (i, v) in col.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        self.data
            .chunks_exact(self.ncols.max(1))
            .take(self.nrows)
            .map(|row| dot(row, x))
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.ncols, other.nrows);
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o -= b;
        }
        out
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// LU factorization with partial pivoting of a dense square matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        check_len(a.ncols(), a.nrows())?;
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmax > 1e-14 * scale) || !pmax.is_finite() {
                return Err(Error::SingularMatrix { pivot: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for r in k + 1..n {
                let m = lu[(r, k)] / pivot;
                lu[(r, k)] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        let t = lu[(k, j)];
                        lu[(r, j)] -= m * t;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }
}

/// Banded LU factorization with partial pivoting.
///
/// Row interchanges only touch the active part of the two rows, so the
/// multipliers of each elimination step are kept per column and replayed in
/// order during the forward solve. The upper factor has bandwidth `ku + kl`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        check_len(a.ncols(), a.nrows())?;
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut f = Self {
            n,
            kl,
            ku,
            width,
            band: vec![0.0; n * width],
            lower: vec![0.0; n * kl],
            pivots: vec![0; n],
        };
        let mut scale = 0.0f64;
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let idx = f.at(i, c);
                f.band[idx] = v;
                scale = scale.max(v.abs());
            }
        }
        let uw = ku + kl;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = f.band[f.at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = f.band[f.at(r, k)].abs();
                if v > pmax {
                    pmax = v;
                    p = r;
                }
            }
            if !(pmax > 1e-14 * scale) || !pmax.is_finite() {
                return Err(Error::SingularMatrix { pivot: k });
            }
            f.pivots[k] = p;
            let last_col = (k + uw).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (ik, ip) = (f.at(k, j), f.at(p, j));
                    f.band.swap(ik, ip);
                }
            }
            let pivot = f.band[f.at(k, k)];
            for r in k + 1..=last_row {
                let irk = f.at(r, k);
                let m = f.band[irk] / pivot;
                f.band[irk] = 0.0;
                f.lower[k * kl + (r - k - 1)] = m;
                if m != 0.0 {
                    for j in k + 1..=last_col {
                        let t = f.band[f.at(k, j)];
                        let irj = f.at(r, j);
                        f.band[irj] -= m * t;
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    b[r] -= self.lower[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        let uw = self.ku + kl;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + uw).min(n - 1) {
                s -= self.band[self.at(i, j)] * b[j];
            }
            b[i] = s / self.band[self.at(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
