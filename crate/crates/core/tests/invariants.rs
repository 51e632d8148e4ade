mod common;

use common::*;
use proptest::prelude::*;
use raspen_core::krylov::gmres;
use raspen_core::linalg::CsrMatrix;
use raspen_core::problems::{q_flux, q_flux_derivative};
use raspen_core::*;

fn layout_1d() -> impl Strategy<Value = DecompositionLayout> {
    (1usize..12, 1usize..6, 0usize..5).prop_filter_map("valid layout", |(i, per, k)| {
        DecompositionLayout::build_1d(i * per + (per / 2), i, k).ok()
    })
}

fn layout_2d() -> impl Strategy<Value = DecompositionLayout> {
    (1usize..5, 2usize..5, 0usize..3)
        .prop_filter_map("valid layout", |(n, per, k)| DecompositionLayout::build_2d(n * per, n * per, n, k).ok())
}

fn partition_of_unity(layout: &DecompositionLayout, v: &[f64]) -> std::result::Result<(), TestCaseError> {
    let mut sum = vec![0.0; v.len()];
    for i in 0..layout.subdomain_count() {
        let ri = layout.restrict(i, v).unwrap();
        layout.restricted_prolong_add(i, 1.0, &ri, &mut sum).unwrap();
        // R_i P_i = I
        let back = layout.restrict(i, &layout.prolong(i, &ri).unwrap()).unwrap();
        prop_assert_eq!(&back, &ri);
    }
    prop_assert_eq!(&sum, &v.to_vec());
    Ok(())
}

proptest! {
    #[test]
    fn restricted_prolongations_partition_unity_1d(layout in layout_1d(), seed in any::<u64>()) {
        let v = random_vec(&mut rng(seed), layout.n_cells());
        partition_of_unity(&layout, &v)?;
    }

    #[test]
    fn restricted_prolongations_partition_unity_2d(layout in layout_2d(), seed in any::<u64>()) {
        let v = random_vec(&mut rng(seed), layout.n_cells());
        partition_of_unity(&layout, &v)?;
    }

    #[test]
    fn owned_sets_are_disjoint_and_inside_overlaps(layout in layout_1d()) {
        let mut seen = vec![0usize; layout.n_cells()];
        for s in layout.subdomains() {
            for c in s.owned() {
                seen[*c] += 1;
                prop_assert!(s.overlap().binary_search(c).is_ok());
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn flux_is_odd_and_increasing(g in -1e3f64..1e3, d in 1e-6f64..10.0, beta in 0.0f64..20.0) {
        prop_assert_eq!(q_flux(-g, beta), -q_flux(g, beta));
        prop_assert!(q_flux(g, beta) < q_flux(g + d, beta));
        prop_assert!(q_flux_derivative(g, beta) > 0.0);
    }

    #[test]
    fn darcy_residual_is_affine(seed in any::<u64>(), a in -3.0f64..3.0) {
        let p = ForchheimerProblem1D::smooth(25, 1.5, 0.0).unwrap();
        let mut r = rng(seed);
        let (u, v) = (random_vec(&mut r, 25), random_vec(&mut r, 25));
        let f0 = p.residual(&[0.0; 25]).unwrap();
        let lin = |w: &[f64]| -> Vec<f64> {
            p.residual(w).unwrap().iter().zip(&f0).map(|(x, y)| x - y).collect()
        };
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
        let expect: Vec<f64> = lin(&u).iter().zip(lin(&v)).map(|(x, y)| a * x + y).collect();
        for (x, y) in lin(&combo).iter().zip(&expect) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn gmres_solves_nonsingular_systems_within_n_steps(n in 1usize..20, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut trip = Vec::new();
        for i in 0..n {
            // diagonally dominant, nonsymmetric
            let row = random_vec(&mut r, n);
            let mut off = 0.0;
            for (j, v) in row.iter().enumerate() {
                if j != i {
                    trip.push((i, j, *v));
                    off += v.abs();
                }
            }
            trip.push((i, i, off + 1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, &trip);
        let b = random_vec(&mut r, n);
        let (x, rep) = gmres(|v, out| { a.matvec_into(v, out); Ok(()) }, &b, 1e-10, n).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(rep.iterations <= n);
        let ax = a.matvec(&x);
        prop_assert!(rel_err(&ax, &b) < 1e-9);
        // residual history never increases
        prop_assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn ledger_totals_are_consistent(rows in proptest::collection::vec((0usize..100, 0usize..20, 0usize..20), 0..15)) {
        let mut ledger = IterationLedger::new();
        for (g, i, m) in &rows {
            ledger.push(*g, *i, *m, None);
        }
        let mut prev = 0;
        for (n, rec) in ledger.records().iter().enumerate() {
            prop_assert_eq!(rec.n, n + 1);
            prop_assert_eq!(rec.ls_total - prev, rec.ls_g + rec.ls_in);
            prev = rec.ls_total;
        }
        prop_assert_eq!(ledger.ls_total(), rows.iter().map(|(g, i, _)| g + i).sum::<usize>());
    }

    #[test]
    fn coarse_prolongation_reproduces_constants_inside(i in 2usize..10, per in 2usize..8) {
        // linear interpolation through the centres is exact for affine data
        let m = i * per;
        let layout = DecompositionLayout::build_1d(m, i, 1).unwrap();
        let v0 = vec![1.0; i];
        let fine = layout.coarse_prolong(&v0).unwrap();
        let first_centre = per / 2;
        let last_centre = m - per + per / 2;
        for k in first_centre..last_centre {
            prop_assert!((fine[k] - 1.0).abs() < 1e-12);
        }
    }
}
