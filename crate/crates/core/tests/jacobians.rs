//! Jacobians against central finite differences.

mod common;

use common::*;
use raspen_core::coarse::{
    aspin_coarse_correction, aspin_coarse_correction_jacobian_action, aspin_coarse_setup,
    coarse_jacobian, coarse_residual, fas_correction, fas_correction_jacobian_action,
};
use raspen_core::local_solver::{local_correction_jacobian_action, solve_local};
use raspen_core::*;

fn problem_fd<P: NonlinearProblem>(p: &P, seed: u64, amplitude: f64) {
    let n = p.dof_count();
    let mut r = rng(seed);
    for _ in 0..20 {
        let u = generic_state(&mut r, n, amplitude);
        let v = random_vec(&mut r, n);
        let norm_u = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eps = 1e-6 * (1.0 + norm_u);
        let plus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let fd: Vec<f64> = p
            .residual(&plus)
            .unwrap()
            .iter()
            .zip(p.residual(&minus).unwrap())
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
        let jv = p.jacobian(&u).unwrap().matvec(&v);
        assert!(rel_err(&jv, &fd) < 1e-6, "{}", rel_err(&jv, &fd));
    }
}

#[test]
fn forchheimer_jacobian_matches_differences() {
    for beta in [0.0, 1.0, 10.0] {
        problem_fd(&ForchheimerProblem1D::smooth(40, 1.5, beta).unwrap(), 1, 0.2);
    }
}

#[test]
fn diffusion_jacobian_matches_differences() {
    problem_fd(&DiffusionProblem2D::standard(9, 7).unwrap(), 2, 0.5);
}

fn system_fd<P: NonlinearProblem + Clone>(p: &P, layout: &DecompositionLayout, u: &[f64], seed: u64) {
    let settings = SolverSettings::default();
    for kind in PreconditionerKind::ALL {
        let mut sys = PreconditionedSystem::new(p.clone(), layout.clone(), kind, JacobianMode::Exact, settings).unwrap();
        let mut r = rng(seed);
        for _ in 0..5 {
            let v = random_vec(&mut r, u.len());
            let fd = fd_residual(&mut sys, u, &v, 1e-6);
            sys.residual(u).unwrap();
            let jv = sys.jacobian_action(u, &v).unwrap();
            let e = rel_err(&jv, &fd);
            assert!(e < 1e-5, "{}: {e}", kind.name());
        }
    }
}

#[test]
fn preconditioned_jacobians_forchheimer() {
    let p = ForchheimerProblem1D::smooth(60, 1.5, 1.0).unwrap();
    let layout = DecompositionLayout::build_1d(60, 4, 2).unwrap();
    let u = generic_state(&mut rng(3), 60, 0.05);
    system_fd(&p, &layout, &u, 4);
}

#[test]
fn preconditioned_jacobians_diffusion() {
    let p = DiffusionProblem2D::standard(8, 8).unwrap();
    let layout = DecompositionLayout::build_2d(8, 8, 2, 1).unwrap();
    let u = generic_state(&mut rng(5), 64, 0.3);
    system_fd(&p, &layout, &u, 6);
}

#[test]
fn preconditioned_jacobians_with_block_sum_restriction() {
    let p = ForchheimerProblem1D::smooth(40, 1.5, 1.0).unwrap();
    let layout = DecompositionLayout::build_1d(40, 4, 2)
        .unwrap()
        .with_residual_restriction(ResidualRestriction::BlockSum);
    let u = generic_state(&mut rng(7), 40, 0.05);
    system_fd(&p, &layout, &u, 8);
}

#[test]
fn inexact_jacobian_is_exact_for_affine_problems() {
    let p = ForchheimerProblem1D::smooth(40, 1.5, 0.0).unwrap();
    let layout = DecompositionLayout::build_1d(40, 4, 2).unwrap();
    let u = generic_state(&mut rng(9), 40, 0.1);
    let settings = SolverSettings::default();
    for kind in [PreconditionerKind::Aspin1, PreconditionerKind::Aspin2] {
        let mut exact = PreconditionedSystem::new(&p, layout.clone(), kind, JacobianMode::Exact, settings).unwrap();
        let mut inexact = PreconditionedSystem::new(&p, layout.clone(), kind, JacobianMode::Inexact, settings).unwrap();
        exact.residual(&u).unwrap();
        inexact.residual(&u).unwrap();
        let v = random_vec(&mut rng(10), 40);
        let a = exact.jacobian_action(&u, &v).unwrap();
        let b = inexact.jacobian_action(&u, &v).unwrap();
        assert!(rel_err(&b, &a) < 1e-10, "{}", kind.name());
    }
}

#[test]
fn local_correction_derivative() {
    let p = ForchheimerProblem1D::smooth(30, 1.5, 1.0).unwrap();
    let layout = DecompositionLayout::build_1d(30, 3, 2).unwrap();
    let settings = SolverSettings::default();
    let mut r = rng(11);
    let u = generic_state(&mut r, 30, 0.05);
    let v = random_vec(&mut r, 30);
    let eps = 1e-6;
    for i in 0..3 {
        let plus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let cp = solve_local(&p, &layout, i, &plus, &settings).unwrap().correction;
        let cm = solve_local(&p, &layout, i, &minus, &settings).unwrap().correction;
        let fd: Vec<f64> = cp.iter().zip(&cm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let res = solve_local(&p, &layout, i, &u, &settings).unwrap();
        let action = local_correction_jacobian_action(&res, &layout, &u, &v).unwrap();
        assert!(rel_err(&action, &fd) < 1e-5);
        let zero = local_correction_jacobian_action(&res, &layout, &u, &[0.0; 30]).unwrap();
        assert!(zero.iter().all(|z| *z == 0.0));
    }
}

#[test]
fn coarse_corrections_derivatives() {
    let p = ForchheimerProblem1D::smooth(40, 1.5, 1.0).unwrap();
    let layout = DecompositionLayout::build_1d(40, 4, 2).unwrap();
    let settings = SolverSettings::default();
    let mut r = rng(12);
    let u = generic_state(&mut r, 40, 0.05);
    let v = random_vec(&mut r, 40);
    let eps = 1e-6;
    let plus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
    let diff = |a: Vec<f64>, b: Vec<f64>| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * eps)).collect() };

    let fas = |w: &[f64]| fas_correction(&p, &layout, w, &settings).unwrap();
    let fd = diff(fas(&plus).correction, fas(&minus).correction);
    let action = fas_correction_jacobian_action(&fas(&u), &layout, &u, &v).unwrap();
    assert!(rel_err(&action, &fd) < 1e-5);

    let star = aspin_coarse_setup(&p, &layout, &settings).unwrap();
    let add = |w: &[f64]| aspin_coarse_correction(&p, &layout, w, &star, &settings).unwrap();
    let fd = diff(add(&plus).correction, add(&minus).correction);
    let action = aspin_coarse_correction_jacobian_action(&add(&u), &layout, &u, &v).unwrap();
    assert!(rel_err(&action, &fd) < 1e-5);
}

#[test]
fn galerkin_jacobian_matches_differences() {
    for layout in [
        DecompositionLayout::build_1d(40, 5, 2).unwrap(),
        DecompositionLayout::build_1d(40, 5, 2)
            .unwrap()
            .with_residual_restriction(ResidualRestriction::BlockSum),
    ] {
        let p = ForchheimerProblem1D::smooth(40, 1.5, 1.0).unwrap();
        let mut r = rng(13);
        let u0 = random_vec(&mut r, 5);
        let v0 = random_vec(&mut r, 5);
        let eps = 1e-6;
        let plus: Vec<f64> = u0.iter().zip(&v0).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = u0.iter().zip(&v0).map(|(a, b)| a - eps * b).collect();
        let fd: Vec<f64> = coarse_residual(&p, &layout, &plus)
            .unwrap()
            .iter()
            .zip(coarse_residual(&p, &layout, &minus).unwrap())
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
        let j = coarse_jacobian(&p, &layout, &u0).unwrap();
        assert!(rel_err(&j.matvec(&v0), &fd) < 1e-6);
    }
}

#[test]
fn stale_states_are_rejected() {
    let p = ForchheimerProblem1D::smooth(20, 1.5, 1.0).unwrap();
    let layout = DecompositionLayout::build_1d(20, 2, 1).unwrap();
    let mut sys = PreconditionedSystem::with_default_mode(&p, layout, PreconditionerKind::Raspen2, SolverSettings::default()).unwrap();
    let u = vec![0.25; 20];
    assert_eq!(sys.jacobian_action(&u, &u).unwrap_err(), Error::StaleCache);
    sys.residual(&u).unwrap();
    let mut w = u.clone();
    w[4] += 1e-3;
    assert_eq!(sys.jacobian_action(&w, &u).unwrap_err(), Error::StaleCache);
    assert!(sys.jacobian_action(&u, &u).is_ok());
}

#[test]
fn jacobian_action_is_linear() {
    let p = DiffusionProblem2D::standard(8, 8).unwrap();
    let layout = DecompositionLayout::build_2d(8, 8, 2, 1).unwrap();
    let mut r = rng(14);
    let u = generic_state(&mut r, 64, 0.3);
    let (v, w) = (random_vec(&mut r, 64), random_vec(&mut r, 64));
    let alpha = -1.7;
    for kind in PreconditionerKind::ALL {
        let mut sys = PreconditionedSystem::with_default_mode(&p, layout.clone(), kind, SolverSettings::default()).unwrap();
        sys.residual(&u).unwrap();
        let combo: Vec<f64> = v.iter().zip(&w).map(|(a, b)| alpha * a + b).collect();
        let lhs = sys.jacobian_action(&u, &combo).unwrap();
        let (av, aw) = (sys.jacobian_action(&u, &v).unwrap(), sys.jacobian_action(&u, &w).unwrap());
        let rhs: Vec<f64> = av.iter().zip(&aw).map(|(a, b)| alpha * a + b).collect();
        assert!(rel_err(&lhs, &rhs) < 1e-12, "{}", kind.name());
    }
}
