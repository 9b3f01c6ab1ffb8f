mod common;

use camp_core::qp::{kkt_residuals, solve_oracle, QpSolver, SolveStatus};
use camp_core::{check_feasible, MpQp};
use common::{inf_dist, random_qp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

#[test]
fn matches_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut solver = QpSolver::default();
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..300 {
        let nz = rng.gen_range(1..=6);
        let nc = rng.gen_range(1..=12);
        let n = rng.gen_range(1..=3);
        let q = random_qp(&mut rng, nz, nc, n, case % 4 == 0);
        let x = random_state(&mut rng, n);
        let all: Vec<usize> = (0..nc).collect();
        let ours = solver.solve(&q, &x, &all).unwrap();
        let oracle = solve_oracle(&q, &x, &all).unwrap();
        assert_eq!(ours.status, oracle.status, "case {case}");
        if oracle.is_optimal() {
            optimal += 1;
            let dz = inf_dist(&ours.z_star, &oracle.z_star);
            assert!(dz <= 1e-8, "case {case}: dz = {dz:e}");
            let kkt = kkt_residuals(&q, &x, &all, &ours).unwrap().max();
            assert!(kkt <= 1e-8, "case {case}: kkt = {kkt:e}");
        } else {
            infeasible += 1;
        }
    }
    assert!(optimal > 100 && infeasible > 5, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn subsets_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut solver = QpSolver::default();
    for case in 0..100 {
        let q = random_qp(&mut rng, 4, 12, 2, false);
        let x = random_state(&mut rng, 2);
        let subset: Vec<usize> = (0..12).filter(|_| rng.gen_bool(0.5)).collect();
        let ours = solver.solve(&q, &x, &subset).unwrap();
        let oracle = solve_oracle(&q, &x, &subset).unwrap();
        assert_eq!(ours.status, SolveStatus::Optimal, "case {case}");
        assert!(inf_dist(&ours.z_star, &oracle.z_star) <= 1e-8, "case {case}");
        assert!(ours.active_set.iter().all(|j| subset.contains(j)));
    }
}

#[test]
fn duplicate_and_parallel_rows() {
    // z₁ ≤ 1 three times over, plus 2z₁ ≤ 2
    let q = MpQp::new(
        camp_core::DenseMatrix::identity(2),
        camp_core::DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
        camp_core::DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap(),
        vec![1.0, 1.0, 1.0, 2.0],
        camp_core::DenseMatrix::zeros(4, 2),
    )
    .unwrap();
    let sol = QpSolver::default().solve_full(&q, &[-3.0, 0.5]).unwrap();
    assert!(sol.is_optimal());
    assert!(inf_dist(&sol.z_star, &[1.0, -0.5]) < 1e-12);
    assert_eq!(sol.active_set, vec![0, 1, 2, 3]);
    assert!(kkt_residuals(&q, &[-3.0, 0.5], &[0, 1, 2, 3], &sol).unwrap().max() < 1e-12);
}

fn qp_strategy() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..=6, 1usize..=12, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_solutions_are_feasible_and_stationary((seed, nz, nc, n) in qp_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qp(&mut rng, nz, nc, n, false);
        let x = random_state(&mut rng, n);
        let sol = QpSolver::default().solve_full(&q, &x).unwrap();
        if sol.status == SolveStatus::Infeasible {
            let all: Vec<usize> = (0..nc).collect();
            prop_assert_eq!(solve_oracle(&q, &x, &all).unwrap().status, SolveStatus::Infeasible);
            return Ok(());
        }
        prop_assert!(sol.is_optimal());
        prop_assert!(check_feasible(&q, &x, &sol.z_star, 1e-9).unwrap().is_feasible());
        let all: Vec<usize> = (0..nc).collect();
        prop_assert!(kkt_residuals(&q, &x, &all, &sol).unwrap().max() <= 1e-8);
        prop_assert_eq!(sol.multipliers.len(), sol.active_set.len());
        prop_assert!(sol.multipliers.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn warm_start_does_not_change_optimum((seed, nz, nc, n) in qp_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qp(&mut rng, nz, nc, n, false);
        let x = random_state(&mut rng, n);
        let all: Vec<usize> = (0..nc).collect();
        let mut solver = QpSolver::default();
        let cold = solver.solve(&q, &x, &all).unwrap();
        let warm_rows: Vec<usize> = (0..nc).filter(|_| rng.gen_bool(0.4)).collect();
        let warm = solver.solve_warm(&q, &x, &all, &warm_rows).unwrap();
        prop_assert_eq!(cold.status, warm.status);
        if cold.is_optimal() {
            prop_assert!(inf_dist(&cold.z_star, &warm.z_star) <= 1e-9);
        }
    }

    #[test]
    fn dropping_inactive_rows_keeps_optimum((seed, nz, nc, n) in qp_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qp(&mut rng, nz, nc, n, false);
        let x = random_state(&mut rng, n);
        let mut solver = QpSolver::default();
        let full = solver.solve_full(&q, &x).unwrap();
        prop_assume!(full.is_optimal());
        let reduced = solver.solve(&q, &x, &full.active_set).unwrap();
        prop_assert!(inf_dist(&full.z_star, &reduced.z_star) <= 1e-9);
    }

    #[test]
    fn row_scaling_keeps_optimum((seed, nz, nc, n) in qp_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qp(&mut rng, nz, nc, n, false);
        let x = random_state(&mut rng, n);
        let phi: Vec<f64> = (0..nc).map(|_| rng.gen_range(0.1..10.0)).collect();
        let scaled = q.scale_rows(&phi).unwrap();
        let mut solver = QpSolver::default();
        let a = solver.solve_full(&q, &x).unwrap();
        let b = solver.solve_full(&scaled, &x).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.is_optimal() {
            prop_assert!(inf_dist(&a.z_star, &b.z_star) <= 1e-9);
        }
    }
}
