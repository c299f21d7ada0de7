mod common;

use common::*;
use mocca::calibration::KSpaceStack;
use mocca::reconstruct::{dense_rank_test, direct_block_solver, finalize_sos, jacobi_richardson, solve, ReconConfig, SolverKind};
use mocca::{PatternKind, SamplingPattern};

#[test]
fn direct_solver_matches_dense_lattice_system() {
    let n = 16;
    for (kind, l, coils) in [(PatternKind::Columns(2), 3, 3), (PatternKind::Columns(4), 5, 5), (PatternKind::RowsCols(2, 2), 3, 4)] {
        let sens = random_sensitivities(n, coils, l, 3);
        let with_acs = SamplingPattern::new(kind, n, 4).unwrap();
        let lattice = with_acs.regular_lattice().unwrap();
        let m = random_image(n, 4);
        // off-lattice calibration samples are ignored by the direct solver
        let stack = KSpaceStack::new(sampled_data(&sens, &with_acs, &m)).unwrap();
        let out = direct_block_solver(&stack, &with_acs, &sens, 1e-3, false).unwrap();
        let ops = sampled_operators(&sens, &lattice);
        let oracle = to_image(n, &dense_solve(&normal_matrix(&ops, 1e-3), &dense_rhs(&ops, &sampled_data(&sens, &lattice, &m))));
        let d = sup_diff(&out.image, &oracle);
        assert!(d < 1e-9, "{kind}: {d:e}");
        assert_eq!(out.singular_groups, 0);
    }
}

#[test]
fn explicit_masks_use_the_iterative_solver() {
    let n = 16;
    let sens = random_sensitivities(n, 3, 3, 8);
    let pattern = random_mask(n, 0.5, 4, 9);
    let m = random_image(n, 10);
    let data = sampled_data(&sens, &pattern, &m);
    let stack = KSpaceStack::new(data.clone()).unwrap();
    // β/N² bounds the contraction rate from below
    let cfg = ReconConfig { beta: 1.0, tol: 1e-12, max_iter: 50_000, ..Default::default() };
    let rec = solve(&stack, &pattern, &sens, &cfg).unwrap();
    assert_eq!(rec.solver, SolverKind::Iterative);
    assert!(solve(&stack, &pattern, &sens, &ReconConfig { solver: SolverKind::Direct, ..cfg.clone() }).is_err());
    let ops = sampled_operators(&sens, &pattern);
    let oracle = to_image(n, &dense_solve(&normal_matrix(&ops, cfg.beta), &dense_rhs(&ops, &data)));
    let it = rec.iterative.as_ref().unwrap();
    let d = sup_diff(&rec.image, &oracle);
    assert!(d < 1e-8, "{d:e} after {} iterations (converged: {})", it.iterations, it.converged);
}

#[test]
fn exact_data_is_recovered_when_the_rank_is_full() {
    let n = 16;
    let sens = random_sensitivities(n, 3, 3, 14);
    let pattern = SamplingPattern::new(PatternKind::Columns(2), n, 4).unwrap();
    assert!(dense_rank_test(&sens, &pattern).unwrap().full());
    let m = random_image(n, 15);
    let stack = KSpaceStack::new(sampled_data(&sens, &pattern, &m)).unwrap();
    let cfg = ReconConfig { beta: 0.0, tol: 1e-13, max_iter: 50_000, ..Default::default() };
    let out = jacobi_richardson(&stack, &pattern, &sens, &cfg).unwrap();
    assert!(sup_diff(&out.image, &m) < 1e-8);
    let (image, adjusted) = finalize_sos(&out.image, &sens).unwrap();
    assert!((image.norm2() - 1.0).abs() < 1e-12);
    // m s̃_j is preserved up to the global scale
    let scale = out.image.norm2();
    for (a, b) in adjusted.normalized().iter().zip(sens.normalized()) {
        for p in 0..n * n {
            let lhs = a.values()[p] * image.values()[p] * scale;
            let rhs = b.values()[p] * out.image.values()[p];
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}

#[test]
fn iterative_residual_is_monotone() {
    let n = 16;
    let sens = random_sensitivities(n, 4, 3, 20);
    let pattern = random_mask(n, 0.3, 4, 21);
    let stack = KSpaceStack::new(sampled_data(&sens, &pattern, &random_image(n, 22))).unwrap();
    let cfg = ReconConfig { fixed_iterations: Some(300), ..Default::default() };
    let out = jacobi_richardson(&stack, &pattern, &sens, &cfg).unwrap();
    for w in out.history.windows(2) {
        assert!(w[1].residual <= w[0].residual * (1.0 + 1e-9) + 1e-12);
    }
}
