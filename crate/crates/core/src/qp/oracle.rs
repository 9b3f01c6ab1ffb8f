//! Brute-force reference solver: enumerate candidate active sets.
//!
//! For every subset of retained rows with linearly independent normals the
//! equality-constrained stationarity system is solved in closed form
//! (`λ = -(G̃H⁻¹G̃ᵀ)⁻¹(b̃ + G̃H⁻¹Fᵀx)`, `z = -H⁻¹(Fᵀx + G̃ᵀλ)`); the
//! candidate that is primal and dual feasible is the optimizer. Only small
//! instances are accepted. The linear algebra here is plain Gauss-Jordan
//! elimination so it shares nothing with the production solver.

use std::time::Instant;

use super::{active_tol, normalize_retained, QpError, QpSolution, SolveStatus};
use crate::linalg::{dot, DenseMatrix};
use crate::model::{evaluate_cost, MpQp};

pub const ORACLE_MAX_ROWS: usize = 12;
pub const ORACLE_MAX_VARS: usize = 6;

const ACCEPT_TOL: f64 = 1e-9;
const PIVOT_REL_TOL: f64 = 1e-10;

/// Inverse by Gauss-Jordan with partial pivoting; `None` when singular
/// relative to `PIVOT_REL_TOL`.
fn invert(m: &DenseMatrix) -> Option<DenseMatrix> {
    let n = m.rows();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &k| a[(i, col)].abs().total_cmp(&a[(k, col)].abs()))?;
        if a[(pivot, col)].abs() <= PIVOT_REL_TOL * scale {
            return None;
        }
        for k in 0..n {
            let (t1, t2) = (a[(col, k)], a[(pivot, k)]);
            a[(col, k)] = t2;
            a[(pivot, k)] = t1;
            let (t1, t2) = (inv[(col, k)], inv[(pivot, k)]);
            inv[(col, k)] = t2;
            inv[(pivot, k)] = t1;
        }
        let d = a[(col, col)];
        for k in 0..n {
            a[(col, k)] /= d;
            inv[(col, k)] /= d;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = a[(i, col)];
            if factor == 0.0 {
                continue;
            }
            for k in 0..n {
                a[(i, k)] -= factor * a[(col, k)];
                inv[(i, k)] -= factor * inv[(col, k)];
            }
        }
    }
    Some(inv)
}

fn subsets(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=max_size.min(items.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i]).collect());
            let mut k = size;
            while k > 0 && idx[k - 1] == items.len() - size + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for i in k..size {
                idx[i] = idx[i - 1] + 1;
            }
        }
    }
    out
}

/// Enumerates active-set candidates; see the module docs.
pub fn solve_oracle(qp: &MpQp, x: &[f64], retained: &[usize]) -> Result<QpSolution, QpError> {
    let start = Instant::now();
    qp.check_state(x)?;
    let retained = normalize_retained(retained, qp.num_constraints())?;
    let nz = qp.num_vars();
    if nz > ORACLE_MAX_VARS || retained.len() > ORACLE_MAX_ROWS {
        return Err(QpError::SizeGuard {
            vars: nz,
            rows: retained.len(),
            max_vars: ORACLE_MAX_VARS,
            max_rows: ORACLE_MAX_ROWS,
        });
    }
    let h_inv = invert(qp.h()).expect("H is positive definite");
    let ftx = qp.f().tr_mul_vec(x)?;
    let h_inv_ftx = h_inv.mul_vec(&ftx)?;
    let rhs: Vec<f64> = (0..qp.num_constraints()).map(|j| qp.rhs_row(j, x)).collect();

    let mut best: Option<(f64, Vec<f64>, Vec<usize>, Vec<f64>)> = None;
    let candidates = subsets(&retained, nz);
    for set in &candidates {
        let k = set.len();
        let lambda = if k == 0 {
            Vec::new()
        } else {
            let g_rows: Vec<&[f64]> = set.iter().map(|&j| qp.g().row(j)).collect();
            let g_sub = DenseMatrix::from_rows(&g_rows)?;
            let hg = h_inv.matmul(&g_sub.transpose())?;
            let m = g_sub.matmul(&hg)?;
            let Some(m_inv) = invert(&m) else {
                continue;
            };
            let v: Vec<f64> = set
                .iter()
                .enumerate()
                .map(|(i, &j)| rhs[j] + dot(g_rows[i], &h_inv_ftx))
                .collect();
            m_inv.mul_vec(&v)?.into_iter().map(|l| -l).collect()
        };
        if lambda.iter().any(|&l| l < -ACCEPT_TOL) {
            continue;
        }
        let mut grad = ftx.clone();
        for (&j, &l) in set.iter().zip(&lambda) {
            for (gk, &gjk) in grad.iter_mut().zip(qp.g().row(j)) {
                *gk += l * gjk;
            }
        }
        let z: Vec<f64> = h_inv.mul_vec(&grad)?.into_iter().map(|v| -v).collect();
        let feasible = retained
            .iter()
            .all(|&j| dot(qp.g().row(j), &z) - rhs[j] <= ACCEPT_TOL * (1.0 + rhs[j].abs()));
        if !feasible {
            continue;
        }
        let obj = evaluate_cost(qp, x, &z)?;
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, z, set.clone(), lambda));
        }
    }

    let elapsed = start.elapsed();
    let iterations = candidates.len();
    Ok(match best {
        None => QpSolution {
            z_star: Vec::new(),
            multipliers: Vec::new(),
            active_set: Vec::new(),
            objective: f64::NAN,
            iterations,
            solve_time: elapsed,
            status: SolveStatus::Infeasible,
        },
        Some((objective, z, set, lambda)) => {
            let mut active_set = Vec::new();
            let mut multipliers = Vec::new();
            for &j in &retained {
                let slack = dot(qp.g().row(j), &z) - rhs[j];
                let pos = set.iter().position(|&s| s == j);
                if slack.abs() <= active_tol(rhs[j]) || pos.is_some() {
                    active_set.push(j);
                    multipliers.push(pos.map_or(0.0, |p| lambda[p].max(0.0)));
                }
            }
            QpSolution {
                z_star: z,
                multipliers,
                active_set,
                objective,
                iterations,
                solve_time: elapsed,
                status: SolveStatus::Optimal,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration_counts() {
        let items: Vec<usize> = (0..5).collect();
        // 1 + 5 + 10 + 10
        assert_eq!(subsets(&items, 3).len(), 26);
        assert_eq!(subsets(&[], 3), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn invert_two_by_two() {
        let m = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let inv = invert(&m).unwrap();
        let id = m.matmul(&inv).unwrap();
        assert!(id.sub(&DenseMatrix::identity(2)).unwrap().max_abs() < 1e-14);
        assert!(invert(&DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap()).is_none());
    }

    #[test]
    fn size_guard() {
        let qp = MpQp::new(
            DenseMatrix::identity(7),
            DenseMatrix::zeros(1, 7),
            DenseMatrix::from_rows(&[vec![1.0; 7]]).unwrap(),
            vec![1.0],
            DenseMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(
            solve_oracle(&qp, &[0.0], &[0]),
            Err(QpError::SizeGuard { .. })
        ));
    }
}
