//! Nonlinearly preconditioned functions and their Jacobian actions.
//!
//! | kind      | residual                                        | fixed point          |
//! |-----------|-------------------------------------------------|----------------------|
//! | `Raspen1` | `Σ P̃_i C_i(u)`                                  | restricted additive  |
//! | `Aspin1`  | `Σ P_i C_i(u)`                                  | additive             |
//! | `Raspen2` | `P_0 C_0(u) + Σ P̃_i C_i(u + P_0 C_0(u))`        | FAS coarse, then RAS |
//! | `Aspin2`  | `P_0 C_0^A(u) + Σ P_i C_i(u)`                   | additive coarse      |
//!
//! Each residual is the difference between the next fixed-point iterate and
//! `u`. Newton's method is applied to `residual(u) = 0`.
//!
//! A residual evaluation caches every linearization it produced; Jacobian
//! actions are only valid at the state of the most recent evaluation.

use alloc::vec;
use alloc::vec::Vec;

use crate::coarse::{
    aspin_action_unchecked, aspin_coarse_correction, aspin_coarse_setup, fas_action_unchecked,
    fas_correction, CoarseSolveResult,
};
use crate::decomposition::DecompositionLayout;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, check_len, BandedLu, CsrMatrix};
use crate::local_solver::{
    local_action_unchecked, sweep_locals, LocalSolveResult, SolverSettings, StateToken,
};
use crate::problems::NonlinearProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreconditionerKind {
    Raspen1,
    Aspin1,
    Raspen2,
    Aspin2,
}

impl PreconditionerKind {
    pub const ALL: [Self; 4] = [Self::Raspen1, Self::Aspin1, Self::Raspen2, Self::Aspin2];

    pub fn is_two_level(self) -> bool {
        matches!(self, Self::Raspen2 | Self::Aspin2)
    }

    /// Whether subdomain corrections are glued with the restricted prolongation.
    pub fn is_restricted(self) -> bool {
        matches!(self, Self::Raspen1 | Self::Raspen2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Raspen1 => "raspen1",
            Self::Aspin1 => "aspin1",
            Self::Raspen2 => "raspen2",
            Self::Aspin2 => "aspin2",
        }
    }

    pub fn default_mode(self) -> JacobianMode {
        if self.is_restricted() {
            JacobianMode::Exact
        } else {
            JacobianMode::Inexact
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JacobianMode {
    /// Derivative of the preconditioned function.
    Exact,
    /// Additive Schwarz preconditioned `J(u)`, for the additive kinds only.
    Inexact,
}

/// Inner iteration counts of one residual evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InnerCounts {
    /// Maximum over subdomains and the coarse solve.
    pub ls_in: usize,
    /// Minimum over subdomains.
    pub ls_min: usize,
    pub coarse: usize,
}

#[derive(Debug, Clone)]
struct InexactLinearization {
    /// `J(u)`, absent when the coarse result already holds it.
    fine: Option<CsrMatrix>,
    /// Factorizations of `R_i J(u) P_i`.
    factors: Vec<BandedLu>,
}

#[derive(Debug, Clone)]
struct Evaluation {
    token: StateToken,
    coarse: Option<CoarseSolveResult>,
    /// Point of the subdomain sweep: `u`, or `u + P_0 C_0(u)` for `Raspen2`.
    sweep_point: Vec<f64>,
    locals: Vec<LocalSolveResult>,
    inexact: Option<InexactLinearization>,
    counts: InnerCounts,
}

#[derive(Debug, Clone)]
pub struct PreconditionedSystem<P> {
    problem: P,
    layout: DecompositionLayout,
    kind: PreconditionerKind,
    mode: JacobianMode,
    settings: SolverSettings,
    coarse_solution: Option<Vec<f64>>,
    cache: Option<Evaluation>,
}

impl<P: NonlinearProblem> PreconditionedSystem<P> {
    pub fn new(
        problem: P,
        layout: DecompositionLayout,
        kind: PreconditionerKind,
        mode: JacobianMode,
        settings: SolverSettings,
    ) -> Result<Self> {
        settings.validate()?;
        check_len(problem.dof_count(), layout.n_cells())?;
        if mode == JacobianMode::Inexact && kind.is_restricted() {
            return Err(Error::InvalidArgument(
                "the inexact Jacobian is only defined for the additive kinds".into(),
            ));
        }
        let coarse_solution = if kind == PreconditionerKind::Aspin2 {
            Some(aspin_coarse_setup(&problem, &layout, &settings)?)
        } else {
            None
        };
        Ok(Self {
            problem,
            layout,
            kind,
            mode,
            settings,
            coarse_solution,
            cache: None,
        })
    }

    pub fn with_default_mode(
        problem: P,
        layout: DecompositionLayout,
        kind: PreconditionerKind,
        settings: SolverSettings,
    ) -> Result<Self> {
        Self::new(problem, layout, kind, kind.default_mode(), settings)
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn layout(&self) -> &DecompositionLayout {
        &self.layout
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn mode(&self) -> JacobianMode {
        self.mode
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn dof_count(&self) -> usize {
        self.layout.n_cells()
    }

    /// `u_0*` for the additive two-level kind.
    pub fn coarse_solution(&self) -> Option<&[f64]> {
        self.coarse_solution.as_deref()
    }

    /// Inner counts of the last residual evaluation.
    pub fn last_counts(&self) -> Option<InnerCounts> {
        self.cache.as_ref().map(|c| c.counts)
    }

    /// Coarse solve of the last residual evaluation.
    pub fn last_coarse(&self) -> Option<&CoarseSolveResult> {
        self.cache.as_ref().and_then(|c| c.coarse.as_ref())
    }

    /// Subdomain solves of the last residual evaluation.
    pub fn last_locals(&self) -> Option<&[LocalSolveResult]> {
        self.cache.as_ref().map(|c| c.locals.as_slice())
    }

    /// Evaluates the preconditioned function at `u` and caches the
    /// linearizations for [`jacobian_action`](Self::jacobian_action).
    pub fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(u.len(), self.dof_count())?;
        if !all_finite(u) {
            return Err(Error::NonFinite("outer iterate"));
        }
        self.cache = None;
        let layout = &self.layout;
        let problem = &self.problem;
        let mut out = vec![0.0; layout.n_cells()];

        let coarse = match self.kind {
            PreconditionerKind::Raspen2 => Some(fas_correction(problem, layout, u, &self.settings)?),
            PreconditionerKind::Aspin2 => Some(aspin_coarse_correction(
                problem,
                layout,
                u,
                self.coarse_solution.as_deref().expect("coarse solution computed at construction"),
                &self.settings,
            )?),
            _ => None,
        };
        let mut sweep_point = u.to_vec();
        if let Some(c) = &coarse {
            let p0c = layout.coarse_prolong(&c.correction)?;
            for (o, p) in out.iter_mut().zip(&p0c) {
                *o += p;
            }
            if self.kind == PreconditionerKind::Raspen2 {
                for (w, p) in sweep_point.iter_mut().zip(&p0c) {
                    *w += p;
                }
            }
        }

        let sweep = sweep_locals(problem, layout, &sweep_point, &self.settings)?;
        for r in &sweep.results {
            if self.kind.is_restricted() {
                layout.restricted_prolong_add(r.subdomain, 1.0, &r.correction, &mut out)?;
            } else {
                layout.prolong_add(r.subdomain, 1.0, &r.correction, &mut out)?;
            }
        }

        let inexact = if self.mode == JacobianMode::Inexact {
            let fine = match &coarse {
                Some(_) => None,
                None => Some(problem.jacobian(u)?),
            };
            let jac = fine
                .as_ref()
                .or(coarse.as_ref().map(|c| &c.fine_jacobian))
                .expect("fine Jacobian available");
            let factors = layout
                .subdomains()
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let rows = select_rows(jac, s.overlap());
                    let (block, _) = crate::local_solver::split_local_block(&rows, s.overlap(), u.len());
                    BandedLu::factor(&block).map_err(|_| Error::SingularLocal { subdomain: i })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(InexactLinearization { fine, factors })
        } else {
            None
        };

        let coarse_its = coarse.as_ref().map_or(0, |c| c.inner_iterations);
        let counts = InnerCounts {
            ls_in: sweep.ls_in_max.max(coarse_its),
            ls_min: sweep.ls_in_min,
            coarse: coarse_its,
        };
        self.cache = Some(Evaluation {
            token: StateToken::of(u),
            coarse,
            sweep_point,
            locals: sweep.results,
            inexact,
            counts,
        });
        Ok(out)
    }

    /// Jacobian of the preconditioned function at `u` applied to `v`.
    /// `u` must be the state of the most recent [`residual`](Self::residual) call.
    pub fn jacobian_action(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let cache = self.cache.as_ref().ok_or(Error::StaleCache)?;
        if StateToken::of(u) != cache.token {
            return Err(Error::StaleCache);
        }
        let mut out = vec![0.0; self.dof_count()];
        self.cached_action(cache, v, &mut out)?;
        Ok(out)
    }

    /// Jacobian action at the state of the last residual evaluation.
    pub fn apply_cached_jacobian(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let cache = self.cache.as_ref().ok_or(Error::StaleCache)?;
        check_len(out.len(), self.dof_count())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        self.cached_action(cache, v, out)
    }

    fn cached_action(&self, cache: &Evaluation, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(v.len(), self.dof_count())?;
        let layout = &self.layout;
        let restricted = self.kind.is_restricted();

        if let Some(inexact) = &cache.inexact {
            let jac = inexact
                .fine
                .as_ref()
                .or(cache.coarse.as_ref().map(|c| &c.fine_jacobian))
                .expect("fine Jacobian available");
            let jv = jac.matvec(v);
            for (i, lu) in inexact.factors.iter().enumerate() {
                let mut y = layout.restrict(i, &jv)?;
                lu.solve_in_place(&mut y);
                layout.prolong_add(i, -1.0, &y, out)?;
            }
            if let Some(c) = &cache.coarse {
                let d0 = aspin_action_unchecked(c, layout, v)?;
                add(out, &layout.coarse_prolong(&d0)?);
            }
            return Ok(());
        }

        // direction seen by the subdomain solves
        let mut direction = v.to_vec();
        if let Some(c) = &cache.coarse {
            let d0 = match self.kind {
                PreconditionerKind::Raspen2 => fas_action_unchecked(c, layout, v)?,
                _ => aspin_action_unchecked(c, layout, v)?,
            };
            let p0d = layout.coarse_prolong(&d0)?;
            add(out, &p0d);
            if self.kind == PreconditionerKind::Raspen2 {
                add(&mut direction, &p0d);
            }
        }
        for r in &cache.locals {
            let y = local_action_unchecked(r, layout, &direction)?;
            if restricted {
                layout.restricted_prolong_add(r.subdomain, 1.0, &y, out)?;
            } else {
                layout.prolong_add(r.subdomain, 1.0, &y, out)?;
            }
        }
        Ok(())
    }

    /// `u + residual(u)`: one step of the underlying fixed-point iteration.
    pub fn fixed_point_step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        let mut next = self.residual(u)?;
        add(&mut next, u);
        Ok(next)
    }

    /// Point at which the subdomain solves of the last evaluation were done.
    pub fn last_sweep_point(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.sweep_point.as_slice())
    }
}

fn add(out: &mut [f64], x: &[f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += xi;
    }
}

fn select_rows(m: &CsrMatrix, rows: &[usize]) -> CsrMatrix {
    let mut out = CsrMatrix::new(m.ncols());
    let mut entries = Vec::new();
    for &r in rows {
        entries.clear();
        let (cols, vals) = m.row(r);
        entries.extend(cols.iter().copied().zip(vals.iter().copied()));
        out.push_row(&mut entries);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ForchheimerProblem1D;

    #[test]
    fn kind_properties() {
        use PreconditionerKind::*;
        assert_eq!(PreconditionerKind::ALL.map(|k| k.name()), ["raspen1", "aspin1", "raspen2", "aspin2"]);
        assert_eq!(Raspen2.default_mode(), JacobianMode::Exact);
        assert_eq!(Aspin2.default_mode(), JacobianMode::Inexact);
        assert!(Raspen2.is_two_level() && !Aspin1.is_two_level());
    }

    #[test]
    fn counts_include_the_coarse_solve() {
        let p = ForchheimerProblem1D::smooth(100, 1.5, 1.0).unwrap();
        let layout = DecompositionLayout::build_1d(100, 4, 2).unwrap();
        let mut sys =
            PreconditionedSystem::with_default_mode(&p, layout, PreconditionerKind::Raspen2, SolverSettings::default())
                .unwrap();
        assert!(sys.last_counts().is_none());
        let u = vec![0.0; 100];
        sys.residual(&u).unwrap();
        let c = sys.last_counts().unwrap();
        let locals = sys.last_locals().unwrap();
        let max_local = locals.iter().map(|r| r.inner_iterations).max().unwrap();
        assert_eq!(c.ls_in, max_local.max(c.coarse));
        assert!(c.coarse > 0);
        // the sweep runs at u + P_0 C_0(u)
        let shift = sys.layout().coarse_prolong(&sys.last_coarse().unwrap().correction).unwrap();
        assert_eq!(sys.last_sweep_point().unwrap(), shift.as_slice());
    }

    #[test]
    fn fixed_point_step_adds_the_residual() {
        let p = ForchheimerProblem1D::smooth(40, 1.5, 1.0).unwrap();
        let layout = DecompositionLayout::build_1d(40, 4, 1).unwrap();
        let mut sys =
            PreconditionedSystem::with_default_mode(&p, layout, PreconditionerKind::Aspin1, SolverSettings::default())
                .unwrap();
        let u: Vec<f64> = (0..40).map(|k| 0.01 * k as f64).collect();
        let r = sys.residual(&u).unwrap();
        let next = sys.fixed_point_step(&u).unwrap();
        for ((n, a), b) in next.iter().zip(&u).zip(&r) {
            assert_eq!(*n, a + b);
        }
    }
}
