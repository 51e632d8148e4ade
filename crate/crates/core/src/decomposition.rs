//! Overlapping decompositions of the fine mesh and the operators they induce.
//!
//! Cells are numbered from 0. In 2D the cell `(ix, iy)` of an `nx × ny` grid
//! has index `iy * nx + ix`, and subdomain `(sx, sy)` of an `N × N` layout has
//! index `sy * N + sx`.
//!
//! For subdomain `i` the overlapping set `M_i` defines the restriction `R_i`
//! (selection) and the prolongation `P_i` (zero extension). The owned set
//! `M̃_i ⊆ M_i`, a partition of all cells, defines the restricted prolongation
//! `P̃_i` which only writes owned cells, so that `Σ P̃_i R_i = I`.
//!
//! The coarse space has one unknown per subdomain, associated with the owned
//! block of that subdomain.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{check_len, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    owned: Vec<usize>,
    overlap: Vec<usize>,
    /// Positions of the owned cells inside `overlap`.
    owned_local: Vec<usize>,
}

impl Subdomain {
    fn new(owned: Vec<usize>, overlap: Vec<usize>) -> Self {
        let owned_local = owned
            .iter()
            .map(|c| overlap.binary_search(c).expect("owned cell outside overlap"))
            .collect();
        Self {
            owned,
            overlap,
            owned_local,
        }
    }

    /// Owned (nonoverlapping) cells, sorted.
    pub fn owned(&self) -> &[usize] {
        &self.owned
    }

    /// Overlapping cells, sorted.
    pub fn overlap(&self) -> &[usize] {
        &self.overlap
    }

    /// Positions of the owned cells within the local (overlap) numbering.
    pub fn owned_local(&self) -> &[usize] {
        &self.owned_local
    }

    pub fn len(&self) -> usize {
        self.overlap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overlap.is_empty()
    }

    pub fn local_position(&self, cell: usize) -> Option<usize> {
        self.overlap.binary_search(&cell).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Uniform cells on an interval with Dirichlet data at both ends.
    Line,
    /// `nx × ny` cells on the unit square split into `per_side × per_side`
    /// blocks; Dirichlet data on the edge `x = 1`.
    Grid {
        nx: usize,
        ny: usize,
        per_side: usize,
    },
}

/// Restriction `R̃_0` of residuals to the coarse space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualRestriction {
    /// Sum of the residual over each coarse cell.
    BlockSum,
    /// `P_0ᵀ`, the transpose of the coarse interpolation.
    #[default]
    Transpose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionLayout {
    n_cells: usize,
    overlap_layers: usize,
    geometry: Geometry,
    subdomains: Vec<Subdomain>,
    coarse_prolongation: CsrMatrix,
    boundary_profiles: Vec<Vec<f64>>,
    residual_restriction: ResidualRestriction,
}

/// Near-equal contiguous blocks; the first `n % parts` blocks get one extra cell.
fn block_bounds(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = n / parts;
    let rem = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < rem);
            let b = (start, start + len);
            start += len;
            b
        })
        .collect()
}

/// Interpolation end condition outside the outermost coarse nodes.
#[derive(Clone, Copy)]
enum End {
    /// Linear decay to zero at the given position.
    Zero(f64),
    /// Constant extension of the outermost node value.
    Constant,
}

/// Weight of a unit value at `x1` in the interpolation beyond the last node,
/// or before the first node when `x1` lies below it.
fn end_profile(x: f64, nodes: &[f64], x1: f64) -> f64 {
    let first = nodes[0];
    let last = nodes[nodes.len() - 1];
    if x1 > last && x > last {
        (x - last) / (x1 - last)
    } else if x1 < first && x < first {
        (first - x) / (first - x1)
    } else {
        0.0
    }
}

/// Piecewise-linear interpolation weights at `x` for values at `nodes`.
fn linear_weights(x: f64, nodes: &[f64], left: End, right: End) -> Vec<(usize, f64)> {
    let first = nodes[0];
    let last = nodes[nodes.len() - 1];
    if x <= first {
        return match left {
            End::Constant => vec![(0, 1.0)],
            End::Zero(x0) => vec![(0, (x - x0) / (first - x0))],
        };
    }
    if x >= last {
        let n = nodes.len() - 1;
        return match right {
            End::Constant => vec![(n, 1.0)],
            End::Zero(x1) => vec![(n, (x1 - x) / (x1 - last))],
        };
    }
    let j = nodes.partition_point(|&c| c <= x) - 1;
    let t = (x - nodes[j]) / (nodes[j + 1] - nodes[j]);
    vec![(j, 1.0 - t), (j + 1, t)]
}

impl DecompositionLayout {
    /// Splits `n_cells` cells on a line into `subdomains` contiguous blocks and
    /// grows each block by `overlap` cells towards both neighbours.
    pub fn build_1d(n_cells: usize, subdomains: usize, overlap: usize) -> Result<Self> {
        if subdomains == 0 || n_cells < subdomains {
            return Err(Error::InvalidLayout(format!(
                "need 1 <= subdomains <= cells, got {subdomains} subdomains for {n_cells} cells"
            )));
        }
        let bounds = block_bounds(n_cells, subdomains);
        let subs = bounds
            .iter()
            .map(|&(s, e)| {
                let lo = s.saturating_sub(overlap);
                let hi = (e + overlap).min(n_cells);
                Subdomain::new((s..e).collect(), (lo..hi).collect())
            })
            .collect();

        // coarse nodes at the block centres, zero at both Dirichlet ends,
        // positions measured in cell widths
        let centres: Vec<f64> = bounds.iter().map(|&(s, e)| 0.5 * (s + e) as f64).collect();
        let mut p0 = CsrMatrix::new(subdomains);
        for k in 0..n_cells {
            let mut w = linear_weights(
                k as f64 + 0.5,
                &centres,
                End::Zero(0.0),
                End::Zero(n_cells as f64),
            );
            p0.push_row(&mut w);
        }
        let boundary_profiles = [0.0, n_cells as f64]
            .iter()
            .map(|&x1| (0..n_cells).map(|k| end_profile(k as f64 + 0.5, &centres, x1)).collect())
            .collect();
        let layout = Self {
            n_cells,
            overlap_layers: overlap,
            geometry: Geometry::Line,
            subdomains: subs,
            coarse_prolongation: p0,
            boundary_profiles,
            residual_restriction: ResidualRestriction::default(),
        };
        layout.check_overlap_extent()?;
        Ok(layout)
    }

    /// Tensor-product analogue of [`build_1d`](Self::build_1d) on an `nx × ny`
    /// grid with `per_side × per_side` rectangular subdomains.
    pub fn build_2d(nx: usize, ny: usize, per_side: usize, overlap: usize) -> Result<Self> {
        if per_side == 0 || nx == 0 || ny == 0 || nx % per_side != 0 || ny % per_side != 0 {
            return Err(Error::InvalidLayout(format!(
                "grid {nx}x{ny} is not divisible into {per_side}x{per_side} subdomains"
            )));
        }
        let bx = nx / per_side;
        let by = ny / per_side;
        let mut subs = Vec::with_capacity(per_side * per_side);
        for sy in 0..per_side {
            for sx in 0..per_side {
                let (x0, x1) = (sx * bx, (sx + 1) * bx);
                let (y0, y1) = (sy * by, (sy + 1) * by);
                let (ox0, ox1) = (x0.saturating_sub(overlap), (x1 + overlap).min(nx));
                let (oy0, oy1) = (y0.saturating_sub(overlap), (y1 + overlap).min(ny));
                let owned = (y0..y1)
                    .flat_map(|iy| (x0..x1).map(move |ix| iy * nx + ix))
                    .collect();
                let over = (oy0..oy1)
                    .flat_map(|iy| (ox0..ox1).map(move |ix| iy * nx + ix))
                    .collect();
                subs.push(Subdomain::new(owned, over));
            }
        }

        // bilinear over the lattice of block centres: zero at x = 1,
        // constant extension towards the Neumann edges
        let cx: Vec<f64> = (0..per_side).map(|s| (s as f64 + 0.5) * bx as f64).collect();
        let cy: Vec<f64> = (0..per_side).map(|s| (s as f64 + 0.5) * by as f64).collect();
        let mut p0 = CsrMatrix::new(per_side * per_side);
        let mut row = Vec::new();
        for iy in 0..ny {
            let wy = linear_weights(iy as f64 + 0.5, &cy, End::Constant, End::Constant);
            for ix in 0..nx {
                let wx = linear_weights(ix as f64 + 0.5, &cx, End::Constant, End::Zero(nx as f64));
                row.clear();
                for &(jy, a) in &wy {
                    for &(jx, b) in &wx {
                        row.push((jy * per_side + jx, a * b));
                    }
                }
                p0.push_row(&mut row);
            }
        }
        let edge = (0..ny)
            .flat_map(|_| (0..nx).map(|ix| end_profile(ix as f64 + 0.5, &cx, nx as f64)))
            .collect();
        let layout = Self {
            n_cells: nx * ny,
            overlap_layers: overlap,
            geometry: Geometry::Grid { nx, ny, per_side },
            subdomains: subs,
            coarse_prolongation: p0,
            boundary_profiles: vec![edge],
            residual_restriction: ResidualRestriction::default(),
        };
        layout.check_overlap_extent()?;
        Ok(layout)
    }

    /// Overlap may cover a neighbouring block completely but must not reach
    /// past it into the next one.
    fn check_overlap_extent(&self) -> Result<()> {
        let owner = self.owners();
        let adjacent = |i: usize, j: usize| match self.geometry {
            Geometry::Line => i.abs_diff(j) <= 1,
            Geometry::Grid { per_side, .. } => {
                (i % per_side).abs_diff(j % per_side) <= 1 && (i / per_side).abs_diff(j / per_side) <= 1
            }
        };
        for (i, si) in self.subdomains.iter().enumerate() {
            if let Some(&c) = si.overlap.iter().find(|&&c| !adjacent(i, owner[c])) {
                return Err(Error::InvalidLayout(format!(
                    "overlap of subdomain {i} reaches cell {c} of subdomain {}, past its neighbours",
                    owner[c]
                )));
            }
        }
        Ok(())
    }

    pub fn with_residual_restriction(mut self, r: ResidualRestriction) -> Self {
        self.residual_restriction = r;
        self
    }

    pub fn residual_restriction(&self) -> ResidualRestriction {
        self.residual_restriction
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn overlap_layers(&self) -> usize {
        self.overlap_layers
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn subdomain_count(&self) -> usize {
        self.subdomains.len()
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, i: usize) -> Result<&Subdomain> {
        self.subdomains.get(i).ok_or(Error::SubdomainIndex {
            index: i,
            count: self.subdomains.len(),
        })
    }

    /// Dimension of the coarse space (one unknown per subdomain).
    pub fn coarse_dim(&self) -> usize {
        self.subdomains.len()
    }

    /// Owning subdomain of every cell.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n_cells];
        for (i, s) in self.subdomains.iter().enumerate() {
            for &c in &s.owned {
                owner[c] = i;
            }
        }
        owner
    }

    /// `R_i v`
    pub fn restrict(&self, i: usize, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.n_cells)?;
        Ok(self.subdomain(i)?.overlap.iter().map(|&c| v[c]).collect())
    }

    /// `P_i v_i`
    pub fn prolong(&self, i: usize, vi: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_cells];
        self.prolong_add(i, 1.0, vi, &mut out)?;
        Ok(out)
    }

    /// `P̃_i v_i`
    pub fn restricted_prolong(&self, i: usize, vi: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_cells];
        self.restricted_prolong_add(i, 1.0, vi, &mut out)?;
        Ok(out)
    }

    /// `out += alpha * P_i v_i`
    pub fn prolong_add(&self, i: usize, alpha: f64, vi: &[f64], out: &mut [f64]) -> Result<()> {
        let s = self.subdomain(i)?;
        check_len(vi.len(), s.overlap.len())?;
        check_len(out.len(), self.n_cells)?;
        for (&c, v) in s.overlap.iter().zip(vi) {
            out[c] += alpha * v;
        }
        Ok(())
    }

    /// `out += alpha * P̃_i v_i`
    pub fn restricted_prolong_add(
        &self,
        i: usize,
        alpha: f64,
        vi: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let s = self.subdomain(i)?;
        check_len(vi.len(), s.overlap.len())?;
        check_len(out.len(), self.n_cells)?;
        for (&c, &p) in s.owned.iter().zip(&s.owned_local) {
            out[c] += alpha * vi[p];
        }
        Ok(())
    }

    /// `R_0 v`: mean over each coarse cell.
    pub fn coarse_restrict_mean(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.n_cells)?;
        Ok(self
            .subdomains
            .iter()
            .map(|s| s.owned.iter().map(|&c| v[c]).sum::<f64>() / s.owned.len() as f64)
            .collect())
    }

    /// `R̃_0 r`: sum over each coarse cell.
    pub fn coarse_restrict_sum(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len(r.len(), self.n_cells)?;
        Ok(self
            .subdomains
            .iter()
            .map(|s| s.owned.iter().map(|&c| r[c]).sum())
            .collect())
    }

    /// `R̃_0 r` with the configured [`ResidualRestriction`].
    pub fn coarse_restrict_residual(&self, r: &[f64]) -> Result<Vec<f64>> {
        match self.residual_restriction {
            ResidualRestriction::BlockSum => self.coarse_restrict_sum(r),
            ResidualRestriction::Transpose => {
                check_len(r.len(), self.n_cells)?;
                let mut out = vec![0.0; self.coarse_dim()];
                for (k, rk) in r.iter().enumerate() {
                    let (cols, vals) = self.coarse_prolongation.row(k);
                    for (&j, &w) in cols.iter().zip(vals) {
                        out[j] += w * rk;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Nonzero weights `(coarse index, weight)` of fine row `k` in `R̃_0`,
    /// written to `out`.
    pub(crate) fn residual_restriction_weights(&self, k: usize, owners: &[usize], out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self.residual_restriction {
            ResidualRestriction::BlockSum => out.push((owners[k], 1.0)),
            ResidualRestriction::Transpose => {
                let (cols, vals) = self.coarse_prolongation.row(k);
                out.extend(cols.iter().copied().zip(vals.iter().copied()));
            }
        }
    }

    /// `P_0 v_0`: interpolation from the coarse nodes.
    pub fn coarse_prolong(&self, v0: &[f64]) -> Result<Vec<f64>> {
        check_len(v0.len(), self.coarse_dim())?;
        Ok(self.coarse_prolongation.matvec(v0))
    }

    /// Interpolation profiles of unit Dirichlet data, the complement of the
    /// vanishing end segments of `P_0`: `[left, right]` on a line, `[x = 1]`
    /// on a grid.
    pub fn boundary_profiles(&self) -> &[Vec<f64>] {
        &self.boundary_profiles
    }

    /// `P_0` as an `n_cells × coarse_dim` sparse matrix.
    pub fn coarse_prolongation(&self) -> &CsrMatrix {
        &self.coarse_prolongation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(a: usize, b: usize) -> Vec<usize> {
        (a..b).collect()
    }

    #[test]
    fn zero_overlap_blocks() {
        let l = DecompositionLayout::build_1d(9, 3, 0).unwrap();
        for (i, s) in l.subdomains().iter().enumerate() {
            assert_eq!(s.owned(), &range(3 * i, 3 * i + 3)[..]);
            assert_eq!(s.overlap(), s.owned());
        }
    }

    #[test]
    fn one_layer_overlap_by_hand() {
        let l = DecompositionLayout::build_1d(9, 3, 1).unwrap();
        assert_eq!(l.subdomain(0).unwrap().overlap(), &range(0, 4)[..]);
        assert_eq!(l.subdomain(1).unwrap().overlap(), &range(2, 7)[..]);
        assert_eq!(l.subdomain(2).unwrap().overlap(), &range(5, 9)[..]);
        let p = l.restricted_prolong(1, &[1.0; 5]).unwrap();
        let expected: Vec<f64> = (0..9).map(|k| if (3..6).contains(&k) { 1.0 } else { 0.0 }).collect();
        assert_eq!(p, expected);
    }

    #[test]
    fn remainder_goes_to_leading_subdomains() {
        let l = DecompositionLayout::build_1d(11, 3, 0).unwrap();
        let sizes: Vec<usize> = l.subdomains().iter().map(|s| s.owned().len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(DecompositionLayout::build_1d(3, 4, 0).is_err());
        assert!(DecompositionLayout::build_1d(5, 0, 0).is_err());
        // overlap reaching past the neighbour into the next block
        assert!(DecompositionLayout::build_1d(9, 3, 4).is_err());
        assert!(DecompositionLayout::build_1d(200, 40, 6).is_err());
        assert!(DecompositionLayout::build_2d(12, 12, 3, 5).is_err());
        // covering the neighbour exactly is allowed
        assert!(DecompositionLayout::build_1d(9, 3, 3).is_ok());
        assert!(DecompositionLayout::build_1d(200, 40, 5).is_ok());
        assert!(DecompositionLayout::build_2d(12, 12, 3, 4).is_ok());
        assert!(DecompositionLayout::build_2d(10, 10, 3, 1).is_err());
    }

    #[test]
    fn single_subdomain_is_whole_mesh() {
        let l = DecompositionLayout::build_1d(7, 1, 3).unwrap();
        assert_eq!(l.subdomain(0).unwrap().overlap(), &range(0, 7)[..]);
    }

    #[test]
    fn grid_blocks() {
        let l = DecompositionLayout::build_2d(4, 4, 2, 0).unwrap();
        assert_eq!(l.subdomain(0).unwrap().owned(), &[0, 1, 4, 5]);
        assert_eq!(l.subdomain(3).unwrap().owned(), &[10, 11, 14, 15]);
        let l = DecompositionLayout::build_2d(8, 8, 2, 1).unwrap();
        for s in l.subdomains() {
            assert_eq!(s.owned().len(), 16);
            assert_eq!(s.overlap().len(), 25);
        }
        // subdomain 0 spans columns/rows 0..5
        let expected: Vec<usize> = (0..5).flat_map(|y| (0..5).map(move |x| y * 8 + x)).collect();
        assert_eq!(l.subdomain(0).unwrap().overlap(), &expected[..]);
    }

    #[test]
    fn dimension_and_index_errors() {
        let l = DecompositionLayout::build_1d(9, 3, 1).unwrap();
        assert!(matches!(l.restrict(0, &[0.0; 8]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(l.restrict(3, &[0.0; 9]), Err(Error::SubdomainIndex { .. })));
        assert!(l.prolong(0, &[0.0; 3]).is_err());
        assert!(l.coarse_prolong(&[0.0; 2]).is_err());
    }

    #[test]
    fn coarse_restrictions() {
        let l = DecompositionLayout::build_1d(9, 3, 0).unwrap();
        assert_eq!(l.coarse_restrict_sum(&[1.0; 9]).unwrap(), vec![3.0, 3.0, 3.0]);
        assert_eq!(l.coarse_restrict_mean(&[2.5; 9]).unwrap(), vec![2.5, 2.5, 2.5]);
    }

    #[test]
    fn coarse_prolongation_hits_nodes_and_boundaries() {
        // blocks of 3 cells: centres at 1.5, 4.5, 7.5 coincide with cell centres 1, 4, 7
        let l = DecompositionLayout::build_1d(9, 3, 1).unwrap();
        let v = l.coarse_prolong(&[1.0, 2.0, 3.0]).unwrap();
        assert!((v[1] - 1.0).abs() < 1e-15);
        assert!((v[4] - 2.0).abs() < 1e-15);
        assert!((v[7] - 3.0).abs() < 1e-15);
        // first cell centre 0.5 lies a third of the way from 0 to 1.5
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v[8] - 1.0).abs() < 1e-15);
        assert_eq!(l.coarse_prolong(&[0.0; 3]).unwrap(), vec![0.0; 9]);
    }

    #[test]
    fn grid_coarse_prolongation() {
        let l = DecompositionLayout::build_2d(8, 8, 2, 1).unwrap();
        let v = l.coarse_prolong(&[1.0; 4]).unwrap();
        // constant away from x = 1, decaying towards the Dirichlet edge
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[8 * 7 + 2] - 1.0).abs() < 1e-15);
        assert!(v[7] < 1.0 && v[7] > 0.0);
    }
}
