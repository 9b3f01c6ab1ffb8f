//! Dual active-set method for `min ½zᵀHz + cᵀz  s.t.  G_j z ≤ b_j, j ∈ I`.
//!
//! The iteration keeps a working set `A` of linearly independent rows and an
//! iterate that is optimal for the equality-constrained problem on `A` with
//! nonnegative multipliers. Each outer iteration picks the most violated row
//! (by distance, ties to the smallest index) and raises its multiplier until it
//! is tight, dropping working rows whose multipliers hit zero on the way.
//! Infeasibility shows up as a violated row whose normal is spanned by the
//! working set while no multiplier can be decreased.
//!
//! Everything is carried in the coordinates `y = Lᵀz` where `H = LLᵀ`; there
//! the Hessian is the identity and the working-set normals are the columns of
//! `L⁻¹G_Aᵀ`, which are re-orthonormalized whenever the working set changes.

use std::collections::HashSet;
use std::time::Instant;

use super::{active_tol, normalize_retained, QpError, QpSolution, SolveStatus};
use crate::linalg::{axpy, dot, norm2};
use crate::model::MpQp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Iteration cap is `max_iter_factor · (n_z + |I|)`.
    pub max_iter_factor: usize,
    /// Rows violated by more than `feas_tol · (1 + |b_j|)` are added.
    pub feas_tol: f64,
    /// Relative null-space projection below which a row counts as dependent.
    pub dependency_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter_factor: 50,
            feas_tol: 1e-10,
            dependency_tol: 1e-10,
        }
    }
}

/// Reusable solver; holds scratch space, so one solve at a time per instance.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    settings: SolverSettings,
    in_working: Vec<bool>,
    /// `G_j z − b_j` from the latest scan.
    violations: Vec<f64>,
}

/// Orthonormal basis of the transformed working-set normals.
#[derive(Debug, Default)]
struct WorkingSet {
    rows: Vec<usize>,
    lambda: Vec<f64>,
    /// `L⁻¹ G_jᵀ` per working row.
    normals: Vec<Vec<f64>>,
    /// Orthonormal basis `Q` (columns) with `normals = Q R`.
    basis: Vec<Vec<f64>>,
    /// Upper-triangular `R`, row-major, `r[i][k]` for `k ≥ i`.
    r: Vec<Vec<f64>>,
}

impl WorkingSet {
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Re-orthonormalizes all normals (classical Gram-Schmidt, twice).
    /// Returns false if some normal turns out dependent.
    fn refactor(&mut self, dependency_tol: f64) -> bool {
        self.basis.clear();
        self.r.clear();
        let q = self.normals.len();
        let mut r = vec![vec![0.0; q]; q];
        for k in 0..q {
            let mut v = self.normals[k].clone();
            let scale = norm2(&v);
            for _ in 0..2 {
                for (i, b) in self.basis.iter().enumerate() {
                    let c = dot(b, &v);
                    r[i][k] += c;
                    axpy(-c, b, &mut v);
                }
            }
            let nv = norm2(&v);
            if nv <= dependency_tol * scale {
                return false;
            }
            r[k][k] = nv;
            v.iter_mut().for_each(|x| *x /= nv);
            self.basis.push(v);
        }
        self.r = r;
        true
    }

    /// Splits `y` into its component orthogonal to the working normals and the
    /// coefficients `c` with `y = proj + Σ normals_i c_i`.
    fn project(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut proj = y.to_vec();
        let mut qty = vec![0.0; self.len()];
        for _ in 0..2 {
            for (i, b) in self.basis.iter().enumerate() {
                let c = dot(b, &proj);
                qty[i] += c;
                axpy(-c, b, &mut proj);
            }
        }
        (proj, self.back_substitute(&qty))
    }

    /// Solves `R c = v`.
    fn back_substitute(&self, v: &[f64]) -> Vec<f64> {
        let q = self.len();
        let mut c = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = v[i];
            for k in (i + 1)..q {
                s -= self.r[i][k] * c[k];
            }
            c[i] = s / self.r[i][i];
        }
        c
    }

    /// Solves `Rᵀ v = w`.
    fn forward_substitute(&self, w: &[f64]) -> Vec<f64> {
        let q = self.len();
        let mut v = vec![0.0; q];
        for i in 0..q {
            let mut s = w[i];
            for k in 0..i {
                s -= self.r[k][i] * v[k];
            }
            v[i] = s / self.r[i][i];
        }
        v
    }

    fn remove(&mut self, pos: usize) {
        self.rows.remove(pos);
        self.lambda.remove(pos);
        self.normals.remove(pos);
    }
}

struct Problem<'a> {
    qp: &'a MpQp,
    retained: Vec<usize>,
    /// `b_j = W_j + S_j x`, indexed by global row.
    rhs: Vec<f64>,
    /// `L⁻¹ Fᵀ x`
    y_lin: Vec<f64>,
}

impl Problem<'_> {
    fn violation(&self, j: usize, z: &[f64]) -> f64 {
        dot(self.qp.g().row(j), z) - self.rhs[j]
    }

    fn transformed_normal(&self, j: usize) -> Vec<f64> {
        let mut y = self.qp.g().row(j).to_vec();
        self.qp.h_factor().forward_in_place(&mut y);
        y
    }

    /// `z = -L⁻ᵀ(L⁻¹Fᵀx + Σ normals_i λ_i)`
    fn primal_from_multipliers(&self, ws: &WorkingSet) -> Vec<f64> {
        let mut y = self.y_lin.clone();
        for (nrm, &l) in ws.normals.iter().zip(&ws.lambda) {
            axpy(l, nrm, &mut y);
        }
        self.qp.h_factor().backward_in_place(&mut y);
        y.iter_mut().for_each(|v| *v = -*v);
        y
    }

    /// Equality-constrained optimum on the working set: solves
    /// `(RᵀR) λ = -(b_A + normalsᵀ y_lin)` and returns the primal point.
    fn polish(&self, ws: &mut WorkingSet) -> Vec<f64> {
        if ws.len() > 0 {
            let rhs: Vec<f64> = ws
                .rows
                .iter()
                .zip(&ws.normals)
                .map(|(&j, nrm)| -(self.rhs[j] + dot(nrm, &self.y_lin)))
                .collect();
            let v = ws.forward_substitute(&rhs);
            ws.lambda = ws.back_substitute(&v);
        }
        self.primal_from_multipliers(ws)
    }
}

impl QpSolver {
    pub fn new(settings: SolverSettings) -> Self {
        Self {
            settings,
            in_working: Vec::new(),
            violations: Vec::new(),
        }
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Solves over the rows in `retained`, starting from the unconstrained
    /// minimizer.
    pub fn solve(&mut self, qp: &MpQp, x: &[f64], retained: &[usize]) -> Result<QpSolution, QpError> {
        self.solve_warm(qp, x, retained, &[])
    }

    /// Solves over every row of `qp`.
    pub fn solve_full(&mut self, qp: &MpQp, x: &[f64]) -> Result<QpSolution, QpError> {
        let all: Vec<usize> = (0..qp.num_constraints()).collect();
        self.solve_warm(qp, x, &all, &[])
    }

    /// Like [`solve`](Self::solve), seeding the working set with the rows of
    /// `warm` that are retained (typically a previous active set).
    pub fn solve_warm(
        &mut self,
        qp: &MpQp,
        x: &[f64],
        retained: &[usize],
        warm: &[usize],
    ) -> Result<QpSolution, QpError> {
        let start = Instant::now();
        qp.check_state(x)?;
        let nc = qp.num_constraints();
        let retained = normalize_retained(retained, nc)?;
        let warm = normalize_retained(warm, nc)?;

        let mut y_lin = qp.f().tr_mul_vec(x)?;
        qp.h_factor().forward_in_place(&mut y_lin);
        let mut rhs = vec![0.0; nc];
        for &j in &retained {
            rhs[j] = qp.rhs_row(j, x);
        }
        let prob = Problem {
            qp,
            retained,
            rhs,
            y_lin,
        };

        self.in_working.clear();
        self.in_working.resize(nc, false);
        self.violations.resize(nc, 0.0);
        let mut ws = WorkingSet::default();
        self.seed_working_set(&prob, &mut ws, &warm);
        let mut z = prob.polish(&mut ws);

        let max_iter = self.settings.max_iter_factor * (qp.num_vars() + prob.retained.len());
        let mut iterations = 0;
        let mut stalled: HashSet<Vec<usize>> = HashSet::new();
        let status = loop {
            // most violated row by distance; ties go to the smallest index
            let mut pick: Option<(usize, f64)> = None;
            for &j in &prob.retained {
                let v = prob.violation(j, &z);
                self.violations[j] = v;
                if self.in_working[j] || v <= self.settings.feas_tol * (1.0 + prob.rhs[j].abs()) {
                    continue;
                }
                let dist = v / qp.row_norms()[j];
                if pick.is_none_or(|(_, best)| dist > best) {
                    pick = Some((j, dist));
                }
            }
            let Some((p, _)) = pick else {
                break SolveStatus::Optimal;
            };

            let normal_p = prob.transformed_normal(p);
            let mut lambda_p = 0.0;
            let mut progressed = false;
            let outcome = loop {
                iterations += 1;
                if iterations > max_iter {
                    break Some(SolveStatus::IterationLimit);
                }
                let (proj, coef) = ws.project(&normal_p);
                // raising λ_p by t moves z by t·dz and the working multipliers by -t·coef
                let proj_sq = dot(&proj, &proj);
                let dependent = proj_sq.sqrt() <= self.settings.dependency_tol * norm2(&normal_p);
                let slack = prob.violation(p, &z);
                let full_step = if dependent {
                    f64::INFINITY
                } else {
                    slack.max(0.0) / proj_sq
                };
                let mut partial: Option<(usize, f64)> = None;
                for (pos, (&c, &l)) in coef.iter().zip(&ws.lambda).enumerate() {
                    if c > 0.0 {
                        let t = l.max(0.0) / c;
                        let better = match partial {
                            None => true,
                            Some((bp, bt)) => t < bt || (t == bt && ws.rows[pos] < ws.rows[bp]),
                        };
                        if better {
                            partial = Some((pos, t));
                        }
                    }
                }
                let partial_step = partial.map_or(f64::INFINITY, |(_, t)| t);
                if dependent && partial.is_none() {
                    break Some(SolveStatus::Infeasible);
                }
                let t = full_step.min(partial_step);
                if t > 0.0 {
                    progressed = true;
                }
                if !dependent {
                    // dz = -L⁻ᵀ proj
                    let mut dz = proj;
                    qp.h_factor().backward_in_place(&mut dz);
                    axpy(-t, &dz, &mut z);
                }
                for (l, c) in ws.lambda.iter_mut().zip(&coef) {
                    *l = (*l - t * c).max(0.0);
                }
                lambda_p += t;

                if full_step <= partial_step {
                    ws.rows.push(p);
                    ws.lambda.push(lambda_p);
                    ws.normals.push(normal_p.clone());
                    self.in_working[p] = true;
                    if !ws.refactor(self.settings.dependency_tol) {
                        break Some(SolveStatus::Degenerate);
                    }
                    z = prob.polish(&mut ws);
                    ws.lambda.iter_mut().for_each(|l| *l = l.max(0.0));
                    break None;
                }
                let (pos, _) = partial.expect("finite partial step");
                self.in_working[ws.rows[pos]] = false;
                ws.remove(pos);
                ws.refactor(self.settings.dependency_tol);
            };
            if let Some(status) = outcome {
                break status;
            }
            if progressed {
                stalled.clear();
            } else {
                let mut key = ws.rows.clone();
                key.sort_unstable();
                if !stalled.insert(key) {
                    break SolveStatus::Degenerate;
                }
            }
        };

        Ok(self.finish(&prob, &ws, z, iterations, status, start))
    }

    /// Greedily takes independent warm rows, then drops negative multipliers
    /// until the equality-constrained optimum is dual feasible.
    fn seed_working_set(&mut self, prob: &Problem<'_>, ws: &mut WorkingSet, warm: &[usize]) {
        for &j in warm {
            if prob.retained.binary_search(&j).is_err() {
                continue;
            }
            ws.rows.push(j);
            ws.lambda.push(0.0);
            ws.normals.push(prob.transformed_normal(j));
            if ws.refactor(self.settings.dependency_tol) {
                self.in_working[j] = true;
            } else {
                ws.remove(ws.len() - 1);
                ws.refactor(self.settings.dependency_tol);
            }
        }
        loop {
            prob.polish(ws);
            let worst = ws
                .lambda
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < 0.0)
                .min_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                Some((pos, _)) => {
                    self.in_working[ws.rows[pos]] = false;
                    ws.remove(pos);
                    ws.refactor(self.settings.dependency_tol);
                }
                None => break,
            }
        }
    }

    fn finish(
        &self,
        prob: &Problem<'_>,
        ws: &WorkingSet,
        z: Vec<f64>,
        iterations: usize,
        status: SolveStatus,
        start: Instant,
    ) -> QpSolution {
        let mut active_set = Vec::new();
        let mut multipliers = Vec::new();
        if status == SolveStatus::Optimal {
            // z is unchanged since the last scan
            for &j in &prob.retained {
                let v = self.violations[j];
                if v.abs() <= active_tol(prob.rhs[j]) || self.in_working[j] {
                    active_set.push(j);
                    let lambda = ws
                        .rows
                        .iter()
                        .position(|&r| r == j)
                        .map_or(0.0, |pos| ws.lambda[pos]);
                    multipliers.push(lambda);
                }
            }
        } else {
            let mut pairs: Vec<(usize, f64)> =
                ws.rows.iter().copied().zip(ws.lambda.iter().copied()).collect();
            pairs.sort_unstable_by_key(|p| p.0);
            (active_set, multipliers) = pairs.into_iter().unzip();
        }
        let objective = objective_value(prob, &z);
        QpSolution {
            z_star: z,
            multipliers,
            active_set,
            objective,
            iterations,
            solve_time: start.elapsed(),
            status,
        }
    }
}

/// `½zᵀHz + xᵀFz`, using `‖Lᵀz‖²/2 + (L⁻¹Fᵀx)·(Lᵀz)`.
fn objective_value(prob: &Problem<'_>, z: &[f64]) -> f64 {
    let l = prob.qp.h_factor().lower();
    let n = z.len();
    let lt_z: Vec<f64> = (0..n)
        .map(|i| (i..n).map(|k| l[(k, i)] * z[k]).sum())
        .collect();
    0.5 * dot(&lt_z, &lt_z) + dot(&prob.y_lin, &lt_z)
}
