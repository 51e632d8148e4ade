//! Discrete nonlinear problems `F(u) = 0` with their Jacobians.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{check_len, CsrMatrix};

/// Residual and Jacobian of a discrete nonlinear problem with its boundary
/// data already eliminated. Implementations evaluate single rows so that
/// subdomain solves only touch the cells they own.
pub trait NonlinearProblem {
    fn dof_count(&self) -> usize;

    /// Row `row` of `F(u)`.
    fn residual_row(&self, u: &[f64], row: usize) -> f64;

    /// Nonzero entries `(column, value)` of row `row` of `J(u)`, appended to `entries`.
    fn jacobian_row(&self, u: &[f64], row: usize, entries: &mut Vec<(usize, f64)>);

    /// Dirichlet values matching [`DecompositionLayout::boundary_profiles`],
    /// used to lift coarse interpolants onto the boundary data. Empty means
    /// no lift.
    ///
    /// [`DecompositionLayout::boundary_profiles`]: crate::decomposition::DecompositionLayout::boundary_profiles
    fn boundary_data(&self) -> Vec<f64> {
        Vec::new()
    }

    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(u.len(), self.dof_count())?;
        Ok((0..self.dof_count()).map(|r| self.residual_row(u, r)).collect())
    }

    fn residual_rows(&self, u: &[f64], rows: &[usize]) -> Result<Vec<f64>> {
        check_len(u.len(), self.dof_count())?;
        Ok(rows.iter().map(|&r| self.residual_row(u, r)).collect())
    }

    fn jacobian(&self, u: &[f64]) -> Result<CsrMatrix> {
        let rows: Vec<usize> = (0..self.dof_count()).collect();
        self.jacobian_rows(u, &rows)
    }

    /// The selected rows of `J(u)` with global column numbering.
    fn jacobian_rows(&self, u: &[f64], rows: &[usize]) -> Result<CsrMatrix> {
        check_len(u.len(), self.dof_count())?;
        let mut m = CsrMatrix::new(self.dof_count());
        let mut entries = Vec::new();
        for &r in rows {
            entries.clear();
            self.jacobian_row(u, r, &mut entries);
            m.push_row(&mut entries);
        }
        Ok(m)
    }
}

impl<P: NonlinearProblem + ?Sized> NonlinearProblem for &P {
    fn dof_count(&self) -> usize {
        (**self).dof_count()
    }
    fn residual_row(&self, u: &[f64], row: usize) -> f64 {
        (**self).residual_row(u, row)
    }
    fn jacobian_row(&self, u: &[f64], row: usize, entries: &mut Vec<(usize, f64)>) {
        (**self).jacobian_row(u, row, entries)
    }
    fn boundary_data(&self) -> Vec<f64> {
        (**self).boundary_data()
    }
}

/// `F(u) = A u - b`.
#[derive(Debug, Clone)]
pub struct AffineProblem {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
}

impl AffineProblem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Result<Self> {
        check_len(matrix.ncols(), matrix.nrows())?;
        check_len(rhs.len(), matrix.nrows())?;
        Ok(Self { matrix, rhs })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

impl NonlinearProblem for AffineProblem {
    fn dof_count(&self) -> usize {
        self.rhs.len()
    }

    fn residual_row(&self, u: &[f64], row: usize) -> f64 {
        let (cols, vals) = self.matrix.row(row);
        cols.iter().zip(vals).map(|(&c, v)| v * u[c]).sum::<f64>() - self.rhs[row]
    }

    fn jacobian_row(&self, _u: &[f64], row: usize, entries: &mut Vec<(usize, f64)>) {
        let (cols, vals) = self.matrix.row(row);
        entries.extend(cols.iter().copied().zip(vals.iter().copied()));
    }
}

/// Below this value of `beta` the flux law is the linear Darcy limit.
pub const DARCY_THRESHOLD: f64 = 1e-12;

/// Forchheimer flux law `q(g) = sgn(g) (-1 + sqrt(1 + 4 beta |g|)) / (2 beta)`.
pub fn q_flux(g: f64, beta: f64) -> f64 {
    if beta <= DARCY_THRESHOLD {
        return g;
    }
    let a = g.abs();
    // (-1 + sqrt(1 + 4 b a)) / (2 b) rewritten without cancellation
    let mag = 2.0 * a / (1.0 + libm::sqrt(1.0 + 4.0 * beta * a));
    if g < 0.0 {
        -mag
    } else {
        mag
    }
}

/// `q'(g) = 1 / sqrt(1 + 4 beta |g|)`.
pub fn q_flux_derivative(g: f64, beta: f64) -> f64 {
    if beta <= DARCY_THRESHOLD {
        return 1.0;
    }
    1.0 / libm::sqrt(1.0 + 4.0 * beta * g.abs())
}

/// Two-point transmissibilities on a uniform mesh of cell width `h`.
///
/// Entry `K` is the transmissibility of the face left of cell `K`, so the
/// result has `M + 1` entries with both boundary faces at the ends.
pub fn build_transmissibilities(h: f64, lambda: &[f64]) -> Result<Vec<f64>> {
    if let Some((cell, &value)) = lambda.iter().enumerate().find(|(_, &l)| !(l > 0.0)) {
        return Err(Error::NonpositivePermeability { cell, value });
    }
    if !(h > 0.0) || lambda.is_empty() {
        return Err(Error::InvalidArgument("mesh width must be positive and mesh nonempty".into()));
    }
    let m = lambda.len();
    let mut t = Vec::with_capacity(m + 1);
    t.push(2.0 * lambda[0] / h);
    for k in 0..m - 1 {
        t.push(1.0 / (0.5 * h / lambda[k] + 0.5 * h / lambda[k + 1]));
    }
    t.push(2.0 * lambda[m - 1] / h);
    Ok(t)
}

/// Cell averages `(1/h) ∫ g` of a function given by its antiderivative.
pub fn cell_averages(m: usize, length: f64, antiderivative: impl Fn(f64) -> f64) -> Vec<f64> {
    let h = length / m as f64;
    (0..m)
        .map(|k| (antiderivative((k + 1) as f64 * h) - antiderivative(k as f64 * h)) / h)
        .collect()
}

/// Cell integrals `∫ g` of a function given by its antiderivative.
pub fn cell_integrals(m: usize, length: f64, antiderivative: impl Fn(f64) -> f64) -> Vec<f64> {
    let h = length / m as f64;
    (0..m)
        .map(|k| antiderivative((k + 1) as f64 * h) - antiderivative(k as f64 * h))
        .collect()
}

/// One-dimensional Forchheimer flow `(q(-λ u'))' = f` on `(0, L)`,
/// discretized with two-point flux finite volumes on `M` uniform cells.
#[derive(Debug, Clone)]
pub struct ForchheimerProblem1D {
    length: f64,
    beta: f64,
    lambda: Vec<f64>,
    source: Vec<f64>,
    dirichlet: (f64, f64),
    transmissibility: Vec<f64>,
}

impl ForchheimerProblem1D {
    pub const DEFAULT_LENGTH: f64 = 1.5;
    pub const DEFAULT_DIRICHLET: (f64, f64) = (0.0, 1.0);

    /// `lambda` holds cell-averaged permeabilities and `source` cell-integrated
    /// sources `f_K`.
    pub fn new(
        length: f64,
        beta: f64,
        lambda: Vec<f64>,
        source: Vec<f64>,
        dirichlet: (f64, f64),
    ) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument("Forchheimer parameter must be >= 0".into()));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidArgument("domain length must be positive".into()));
        }
        check_len(source.len(), lambda.len())?;
        let h = length / lambda.len().max(1) as f64;
        let transmissibility = build_transmissibilities(h, &lambda)?;
        Ok(Self {
            length,
            beta,
            lambda,
            source,
            dirichlet,
            transmissibility,
        })
    }

    /// `λ(x) = cos x`, `f(x) = cos x` on `(0, length)`, `u(0) = 0`, `u(L) = 1`.
    pub fn smooth(cells: usize, length: f64, beta: f64) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidArgument("need at least one cell".into()));
        }
        Self::new(
            length,
            beta,
            cell_averages(cells, length, libm::sin),
            cell_integrals(cells, length, libm::sin),
            Self::DEFAULT_DIRICHLET,
        )
    }

    /// Same fields with a different Forchheimer parameter.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.length,
            beta,
            self.lambda.clone(),
            self.source.clone(),
            self.dirichlet,
        )
    }

    pub fn cells(&self) -> usize {
        self.lambda.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cell_width(&self) -> f64 {
        self.length / self.cells() as f64
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn dirichlet(&self) -> (f64, f64) {
        self.dirichlet
    }

    pub fn transmissibilities(&self) -> &[f64] {
        &self.transmissibility
    }

    /// Cell centres.
    pub fn centres(&self) -> Vec<f64> {
        let h = self.cell_width();
        (0..self.cells()).map(|k| (k as f64 + 0.5) * h).collect()
    }

    #[inline]
    fn neighbours(&self, u: &[f64], k: usize) -> (f64, f64) {
        let m = self.cells();
        let left = if k == 0 { self.dirichlet.0 } else { u[k - 1] };
        let right = if k + 1 == m { self.dirichlet.1 } else { u[k + 1] };
        (left, right)
    }
}

impl NonlinearProblem for ForchheimerProblem1D {
    fn dof_count(&self) -> usize {
        self.lambda.len()
    }

    fn boundary_data(&self) -> Vec<f64> {
        alloc::vec![self.dirichlet.0, self.dirichlet.1]
    }

    fn residual_row(&self, u: &[f64], k: usize) -> f64 {
        let (left, right) = self.neighbours(u, k);
        let t = &self.transmissibility;
        q_flux(t[k + 1] * (u[k] - right), self.beta) + q_flux(t[k] * (u[k] - left), self.beta)
            - self.source[k]
    }

    fn jacobian_row(&self, u: &[f64], k: usize, entries: &mut Vec<(usize, f64)>) {
        let m = self.cells();
        let (left, right) = self.neighbours(u, k);
        let t = &self.transmissibility;
        let dr = q_flux_derivative(t[k + 1] * (u[k] - right), self.beta) * t[k + 1];
        let dl = q_flux_derivative(t[k] * (u[k] - left), self.beta) * t[k];
        if k > 0 {
            entries.push((k - 1, -dl));
        }
        entries.push((k, dl + dr));
        if k + 1 < m {
            entries.push((k + 1, -dr));
        }
    }
}

/// Nonlinear diffusion `-∇·((1 + u²)∇u) = f` on the unit square with `u = 1`
/// on `x = 1` and zero flux elsewhere.
///
/// Cell-centred flux-form differences: the coefficient on a face is the mean
/// of `1 + u²` over the two adjacent values, the Dirichlet face sits half a
/// cell from the last centre. Rows are scaled by the cell area.
#[derive(Debug, Clone)]
pub struct DiffusionProblem2D {
    nx: usize,
    ny: usize,
    source: Vec<f64>,
    boundary_value: f64,
}

impl DiffusionProblem2D {
    pub const BOUNDARY_VALUE: f64 = 1.0;

    /// `source` holds point values of `f` at the cell centres.
    pub fn new(nx: usize, ny: usize, source: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("grid must have at least one cell".into()));
        }
        check_len(source.len(), nx * ny)?;
        Ok(Self {
            nx,
            ny,
            source,
            boundary_value: Self::BOUNDARY_VALUE,
        })
    }

    pub fn with_source_fn(nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let source = (0..ny)
            .flat_map(|iy| (0..nx).map(move |ix| ((ix as f64 + 0.5) * hx, (iy as f64 + 0.5) * hy)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(nx, ny, source)
    }

    /// Source `f(x, y) = x sin y`.
    pub fn standard(nx: usize, ny: usize) -> Result<Self> {
        Self::with_source_fn(nx, ny, |x, y| x * libm::sin(y))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Visits the faces of cell `p` as `(neighbour value, neighbour index, face weight)`;
    /// the Dirichlet face has no neighbour index.
    #[inline]
    fn faces(&self, u: &[f64], p: usize, mut visit: impl FnMut(f64, Option<usize>, f64)) {
        let (nx, ny) = (self.nx, self.ny);
        let (ix, iy) = (p % nx, p / nx);
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let wx = hy / hx;
        let wy = hx / hy;
        if ix > 0 {
            visit(u[p - 1], Some(p - 1), wx);
        }
        if ix + 1 < nx {
            visit(u[p + 1], Some(p + 1), wx);
        } else {
            visit(self.boundary_value, None, 2.0 * wx);
        }
        if iy > 0 {
            visit(u[p - nx], Some(p - nx), wy);
        }
        if iy + 1 < ny {
            visit(u[p + nx], Some(p + nx), wy);
        }
    }
}

impl NonlinearProblem for DiffusionProblem2D {
    fn dof_count(&self) -> usize {
        self.nx * self.ny
    }

    fn boundary_data(&self) -> Vec<f64> {
        alloc::vec![self.boundary_value]
    }

    fn residual_row(&self, u: &[f64], p: usize) -> f64 {
        let up = u[p];
        let mut r = 0.0;
        self.faces(u, p, |un, _, w| {
            let a = 1.0 + 0.5 * (up * up + un * un);
            r += w * a * (up - un);
        });
        r - self.source[p] / (self.nx * self.ny) as f64
    }

    fn jacobian_row(&self, u: &[f64], p: usize, entries: &mut Vec<(usize, f64)>) {
        let up = u[p];
        let mut diag = 0.0;
        self.faces(u, p, |un, n, w| {
            let a = 1.0 + 0.5 * (up * up + un * un);
            let d = up - un;
            diag += w * (up * d + a);
            if let Some(n) = n {
                entries.push((n, w * (un * d - a)));
            }
        });
        entries.push((p, diag));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn flux_values() {
        assert_eq!(q_flux(0.0, 1.0), 0.0);
        assert!((q_flux(2.0, 1.0) - 1.0).abs() < 1e-15);
        for g in [-3.0, 0.5, 7.0] {
            assert_eq!(q_flux(g, 0.0), g);
            assert_eq!(q_flux_derivative(g, 0.0), 1.0);
        }
        assert!((q_flux_derivative(2.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn transmissibility_values() {
        let t = build_transmissibilities(0.1, &[1.0; 4]).unwrap();
        assert!((t[0] - 20.0).abs() < 1e-12 && (t[4] - 20.0).abs() < 1e-12);
        for &ti in &t[1..4] {
            assert!((ti - 10.0).abs() < 1e-12);
        }
        let t = build_transmissibilities(0.1, &[1.0, 3.0]).unwrap();
        assert!((t[1] - 15.0).abs() < 1e-12);
        let t = build_transmissibilities(0.1, &[2.5; 3]).unwrap();
        assert!((t[1] - 25.0).abs() < 1e-12);
        assert!(matches!(
            build_transmissibilities(0.1, &[1.0, 0.0]),
            Err(Error::NonpositivePermeability { cell: 1, .. })
        ));
    }

    #[test]
    fn residual_dimension_check() {
        let p = ForchheimerProblem1D::smooth(10, 1.5, 1.0).unwrap();
        assert!(matches!(p.residual(&[0.0; 9]), Err(Error::DimensionMismatch { .. })));
        let d = DiffusionProblem2D::standard(4, 4).unwrap();
        assert!(d.jacobian(&[0.0; 15]).is_err());
    }

    #[test]
    fn constant_state_solves_homogeneous_diffusion() {
        let d = DiffusionProblem2D::new(5, 4, vec![0.0; 20]).unwrap();
        let r = d.residual(&[1.0; 20]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn smooth_fields_are_cosine_averages() {
        let p = ForchheimerProblem1D::smooth(3, 1.5, 1.0).unwrap();
        let h = 0.5;
        let expected = (libm::sin(1.0) - libm::sin(0.5)) / h;
        assert!((p.lambda()[1] - expected).abs() < 1e-15);
        assert!((p.source()[1] - expected * h).abs() < 1e-15);
    }
}
