//! Finite-horizon linear MPC problems and their condensed mp-QP form.
//!
//! The decision vector is the stacked input sequence `z = (u_0, …, u_{N-1})`;
//! predicted states are eliminated through `x_t = Aᵗ x + Σ_{i<t} A^{t-1-i} B u_i`.
//! The result is
//!
//! ```text
//!     min_z  ½ zᵀ H z + xᵀ F z
//!     s.t.   G z ≤ W + S x
//! ```
//!
//! with `x` the measured state acting as the parameter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, cholesky, dot, CholeskyFactor, DenseMatrix, LinalgError};

/// Rows whose decision coefficients are all below this (relative) size are
/// treated as pure state checks.
const ZERO_ROW_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("origin is not strictly feasible: {which}[{index}] = {value} must be > 0")]
    OriginNotInterior {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{which} is not symmetric positive definite: {source}")]
    NotPositiveDefinite {
        which: &'static str,
        source: LinalgError,
    },
    #[error("constraint row {row} has no decision-variable coefficients")]
    ZeroRow { row: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn dim_err(what: &'static str, expected: impl ToString, found: impl ToString) -> ModelError {
    ModelError::DimensionMismatch {
        what,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn check_shape(
    what: &'static str,
    m: &DenseMatrix,
    rows: usize,
    cols: usize,
) -> Result<(), ModelError> {
    if m.rows() != rows || m.cols() != cols {
        return Err(dim_err(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(())
}

fn check_spd(which: &'static str, m: &DenseMatrix) -> Result<CholeskyFactor, ModelError> {
    cholesky(m).map_err(|source| ModelError::NotPositiveDefinite { which, source })
}

/// A linear time-invariant MPC problem with polyhedral stage and terminal
/// constraints and quadratic stage/terminal costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    d: DenseMatrix,
    e: Vec<f64>,
    c_term: DenseMatrix,
    e_term: Vec<f64>,
    q: DenseMatrix,
    r: DenseMatrix,
    p: DenseMatrix,
    horizon: usize,
}

/// Collects the pieces of an [`MpcProblem`]; `build` validates them.
#[derive(Debug, Clone)]
pub struct MpcProblemBuilder {
    a: DenseMatrix,
    b: DenseMatrix,
    horizon: usize,
    stage: Option<(DenseMatrix, DenseMatrix, Vec<f64>)>,
    terminal: Option<(DenseMatrix, Vec<f64>)>,
    weights: Option<(DenseMatrix, DenseMatrix, DenseMatrix)>,
}

impl MpcProblemBuilder {
    /// Stage constraints `C x_t + D u_t ≤ E` for `t = 0..N-1`.
    pub fn stage_constraints(mut self, c: DenseMatrix, d: DenseMatrix, e: Vec<f64>) -> Self {
        self.stage = Some((c, d, e));
        self
    }

    /// Terminal constraint `C_T x_N ≤ E_T`.
    pub fn terminal_constraints(mut self, c_term: DenseMatrix, e_term: Vec<f64>) -> Self {
        self.terminal = Some((c_term, e_term));
        self
    }

    pub fn weights(mut self, q: DenseMatrix, r: DenseMatrix, p: DenseMatrix) -> Self {
        self.weights = Some((q, r, p));
        self
    }

    pub fn build(self) -> Result<MpcProblem, ModelError> {
        let n = self.a.rows();
        let m = self.b.cols();
        check_shape("A", &self.a, n, n)?;
        check_shape("B", &self.b, n, m)?;
        if self.horizon == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        let (c, d, e) = self
            .stage
            .unwrap_or_else(|| (DenseMatrix::zeros(0, n), DenseMatrix::zeros(0, m), vec![]));
        let rows = c.rows();
        check_shape("C", &c, rows, n)?;
        check_shape("D", &d, rows, m)?;
        if e.len() != rows {
            return Err(dim_err("E", rows, e.len()));
        }
        let (c_term, e_term) = self
            .terminal
            .unwrap_or_else(|| (DenseMatrix::zeros(0, n), vec![]));
        check_shape("C_T", &c_term, c_term.rows(), n)?;
        if e_term.len() != c_term.rows() {
            return Err(dim_err("E_T", c_term.rows(), e_term.len()));
        }
        let (q, r, p) = self.weights.unwrap_or_else(|| {
            (
                DenseMatrix::identity(n),
                DenseMatrix::identity(m),
                DenseMatrix::identity(n),
            )
        });
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;
        check_shape("P", &p, n, n)?;
        check_spd("Q", &q)?;
        check_spd("R", &r)?;
        check_spd("P", &p)?;
        for (which, v) in [("E", &e), ("E_T", &e_term)] {
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
                return Err(ModelError::OriginNotInterior {
                    which,
                    index,
                    value,
                });
            }
        }
        Ok(MpcProblem {
            a: self.a,
            b: self.b,
            c,
            d,
            e,
            c_term,
            e_term,
            q,
            r,
            p,
            horizon: self.horizon,
        })
    }
}

impl MpcProblem {
    pub fn builder(a: DenseMatrix, b: DenseMatrix, horizon: usize) -> MpcProblemBuilder {
        MpcProblemBuilder {
            a,
            b,
            horizon,
            stage: None,
            terminal: None,
            weights: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn stage_c(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn stage_d(&self) -> &DenseMatrix {
        &self.d
    }

    pub fn stage_e(&self) -> &[f64] {
        &self.e
    }

    pub fn terminal_c(&self) -> &DenseMatrix {
        &self.c_term
    }

    pub fn terminal_e(&self) -> &[f64] {
        &self.e_term
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn p(&self) -> &DenseMatrix {
        &self.p
    }

    /// `A x + B u`
    pub fn next_state(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = self.a.mul_vec(x).expect("state dimension");
        let bu = self.b.mul_vec(u).expect("input dimension");
        next.iter_mut().zip(bu).for_each(|(a, b)| *a += b);
        next
    }

    /// Predicted states `x_0 = x, …, x_N` under the input sequence `z`.
    pub fn rollout(&self, x: &[f64], z: &[f64]) -> Vec<Vec<f64>> {
        let m = self.input_dim();
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(x.to_vec());
        for t in 0..self.horizon {
            let next = self.next_state(&states[t], &z[t * m..(t + 1) * m]);
            states.push(next);
        }
        states
    }

    /// The stage-plus-terminal cost of the rolled-out trajectory.
    pub fn trajectory_cost(&self, x: &[f64], z: &[f64]) -> f64 {
        let m = self.input_dim();
        let states = self.rollout(x, z);
        let quad = |w: &DenseMatrix, v: &[f64]| dot(v, &w.mul_vec(v).unwrap());
        let mut cost = 0.0;
        for t in 0..self.horizon {
            cost += 0.5 * (quad(&self.q, &states[t]) + quad(&self.r, &z[t * m..(t + 1) * m]));
        }
        cost + 0.5 * quad(&self.p, &states[self.horizon])
    }
}

/// Where a row of the condensed constraint matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowTag {
    /// Row `row` of `(C, D, E)` imposed at prediction step `step`.
    Stage { step: usize, row: usize },
    /// Row `row` of `(C_T, E_T)`.
    Terminal { row: usize },
    /// Row of a directly supplied mp-QP.
    Given { row: usize },
}

/// A constraint with no decision-variable coefficients: `0 ≤ W + S x`.
///
/// These are feasibility checks on the measured state and cannot be influenced
/// by the optimizer, so they are kept out of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCheck {
    pub tag: RowTag,
    pub w: f64,
    pub s: Vec<f64>,
}

impl StateCheck {
    /// Positive when the measured state violates the check.
    pub fn violation(&self, x: &[f64]) -> f64 {
        -(self.w + dot(&self.s, x))
    }
}

/// Condensed multiparametric QP `min ½zᵀHz + xᵀFz  s.t.  Gz ≤ W + Sx`.
#[derive(Debug, Clone)]
pub struct MpQp {
    h: DenseMatrix,
    f: DenseMatrix,
    g: DenseMatrix,
    w: Vec<f64>,
    s: DenseMatrix,
    row_norms: Vec<f64>,
    row_tags: Vec<RowTag>,
    state_checks: Vec<StateCheck>,
    h_factor: CholeskyFactor,
    /// `H⁻¹ Fᵀ`, so the unconstrained optimizer is `-H⁻¹Fᵀx`.
    h_inv_ft: DenseMatrix,
    input_dim: usize,
}

impl MpQp {
    /// Builds an mp-QP from its matrices; `F` is `n × n_z` and `S` is `n_c × n`.
    pub fn new(
        h: DenseMatrix,
        f: DenseMatrix,
        g: DenseMatrix,
        w: Vec<f64>,
        s: DenseMatrix,
    ) -> Result<Self, ModelError> {
        let tags = (0..g.rows()).map(|row| RowTag::Given { row }).collect();
        let nz = h.rows();
        Self::assemble(h, f, g, w, s, tags, Vec::new(), nz)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        h: DenseMatrix,
        f: DenseMatrix,
        g: DenseMatrix,
        w: Vec<f64>,
        s: DenseMatrix,
        row_tags: Vec<RowTag>,
        state_checks: Vec<StateCheck>,
        input_dim: usize,
    ) -> Result<Self, ModelError> {
        let nz = h.rows();
        let n = f.rows();
        let nc = g.rows();
        check_shape("H", &h, nz, nz)?;
        check_shape("F", &f, n, nz)?;
        check_shape("G", &g, nc, nz)?;
        check_shape("S", &s, nc, n)?;
        if w.len() != nc {
            return Err(dim_err("W", nc, w.len()));
        }
        if input_dim == 0 || !nz.is_multiple_of(input_dim) {
            return Err(dim_err("input dimension", format!("a divisor of {nz}"), input_dim));
        }
        let h_factor = check_spd("H", &h)?;
        let row_norms: Vec<f64> = (0..nc).map(|j| linalg::norm2(g.row(j))).collect();
        if let Some(row) = row_norms.iter().position(|&r| r == 0.0) {
            return Err(ModelError::ZeroRow { row });
        }
        let h_inv_ft = linalg::solve_spd(&h_factor, &f.transpose())?;
        Ok(Self {
            h,
            f,
            g,
            w,
            s,
            row_norms,
            row_tags,
            state_checks,
            h_factor,
            h_inv_ft,
            input_dim,
        })
    }

    /// Declares how many leading decision entries form the first input.
    pub fn with_input_dim(mut self, m: usize) -> Result<Self, ModelError> {
        if m == 0 || !self.num_vars().is_multiple_of(m) {
            return Err(dim_err("input dimension", format!("a divisor of {}", self.num_vars()), m));
        }
        self.input_dim = m;
        Ok(self)
    }

    /// Row-scaled copy `(ΦG, ΦW, ΦS)` for a positive diagonal `Φ`. The
    /// feasible set and the optimizer are unchanged.
    pub fn scale_rows(&self, phi: &[f64]) -> Result<Self, ModelError> {
        if phi.len() != self.num_constraints() {
            return Err(dim_err("row scaling", self.num_constraints(), phi.len()));
        }
        let w = self.w.iter().zip(phi).map(|(w, p)| w * p).collect();
        Self::assemble(
            self.h.clone(),
            self.f.clone(),
            self.g.scale_rows(phi)?,
            w,
            self.s.scale_rows(phi)?,
            self.row_tags.clone(),
            self.state_checks.clone(),
            self.input_dim,
        )
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, ModelError> {
        let pick = |m: &DenseMatrix| {
            let r: Vec<&[f64]> = rows.iter().map(|&j| m.row(j)).collect();
            if r.is_empty() {
                Ok(DenseMatrix::zeros(0, m.cols()))
            } else {
                DenseMatrix::from_rows(&r)
            }
        };
        Self::assemble(
            self.h.clone(),
            self.f.clone(),
            pick(&self.g)?,
            rows.iter().map(|&j| self.w[j]).collect(),
            pick(&self.s)?,
            rows.iter().map(|&j| self.row_tags[j]).collect(),
            self.state_checks.clone(),
            self.input_dim,
        )
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn f(&self) -> &DenseMatrix {
        &self.f
    }

    pub fn g(&self) -> &DenseMatrix {
        &self.g
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn s(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn h_factor(&self) -> &CholeskyFactor {
        &self.h_factor
    }

    pub fn h_inv_ft(&self) -> &DenseMatrix {
        &self.h_inv_ft
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn row_tags(&self) -> &[RowTag] {
        &self.row_tags
    }

    pub fn state_checks(&self) -> &[StateCheck] {
        &self.state_checks
    }

    /// `n_z`
    pub fn num_vars(&self) -> usize {
        self.h.rows()
    }

    /// `n_c`
    pub fn num_constraints(&self) -> usize {
        self.g.rows()
    }

    /// `n`
    pub fn state_dim(&self) -> usize {
        self.f.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn check_state(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.state_dim() {
            return Err(dim_err("state", self.state_dim(), x.len()));
        }
        Ok(())
    }

    pub fn check_decision(&self, z: &[f64]) -> Result<(), ModelError> {
        if z.len() != self.num_vars() {
            return Err(dim_err("decision vector", self.num_vars(), z.len()));
        }
        Ok(())
    }

    /// `W_j + S_j x`
    #[inline]
    pub fn rhs_row(&self, j: usize, x: &[f64]) -> f64 {
        self.w[j] + dot(self.s.row(j), x)
    }

    /// `W + S x`
    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_constraints()).map(|j| self.rhs_row(j, x)).collect()
    }

    /// Unconstrained minimizer `-H⁻¹Fᵀx`.
    pub fn unconstrained_minimizer(&self, x: &[f64]) -> Vec<f64> {
        self.h_inv_ft
            .mul_vec(x)
            .expect("state dimension")
            .into_iter()
            .map(|v| -v)
            .collect()
    }

    /// Measured-state checks violated by more than `tol`.
    pub fn violated_state_checks(&self, x: &[f64], tol: f64) -> Vec<(RowTag, f64)> {
        self.state_checks
            .iter()
            .map(|c| (c.tag, c.violation(x)))
            .filter(|(_, v)| *v > tol)
            .collect()
    }
}

/// Condenses an MPC problem into mp-QP form with the inputs as decisions.
///
/// Rows whose decision coefficients vanish (stage-0 state constraints, for
/// instance) are moved to [`MpQp::state_checks`].
pub fn condense(p: &MpcProblem) -> Result<MpQp, ModelError> {
    let n = p.state_dim();
    let m = p.input_dim();
    let horizon = p.horizon();
    let nz = horizon * m;

    // powers[t] = Aᵗ, gammas[t] maps z to the input contribution of x_t
    let mut powers = Vec::with_capacity(horizon + 1);
    let mut gammas = Vec::with_capacity(horizon + 1);
    powers.push(DenseMatrix::identity(n));
    gammas.push(DenseMatrix::zeros(n, nz));
    for t in 0..horizon {
        powers.push(p.a().matmul(&powers[t])?);
        let mut next = p.a().matmul(&gammas[t])?;
        for i in 0..n {
            for k in 0..m {
                next[(i, t * m + k)] += p.b()[(i, k)];
            }
        }
        gammas.push(next);
    }

    let mut h = DenseMatrix::zeros(nz, nz);
    for t in 0..horizon {
        h.set_block(t * m, t * m, p.r());
    }
    let mut f = DenseMatrix::zeros(n, nz);
    for t in 1..=horizon {
        let weight = if t == horizon { p.p() } else { p.q() };
        let wg = weight.matmul(&gammas[t])?;
        h = h.add(&gammas[t].transpose().matmul(&wg)?)?;
        f = f.add(&powers[t].transpose().matmul(&wg)?)?;
    }
    // exact symmetry
    for i in 0..nz {
        for j in (i + 1)..nz {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }

    let mut g_rows: Vec<Vec<f64>> = Vec::new();
    let mut s_rows: Vec<Vec<f64>> = Vec::new();
    let mut w = Vec::new();
    let mut tags = Vec::new();
    let mut checks = Vec::new();
    let mut push_row = |tag: RowTag, c_row: &[f64], d_row: Option<&[f64]>, bound: f64, t: usize| {
        let mut g_row = gammas[t].tr_mul_vec(c_row).expect("state dimension");
        if let Some(d_row) = d_row {
            for (k, &dk) in d_row.iter().enumerate() {
                g_row[t * m + k] += dk;
            }
        }
        let s_row: Vec<f64> = powers[t]
            .tr_mul_vec(c_row)
            .expect("state dimension")
            .into_iter()
            .map(|v| -v)
            .collect();
        let scale = c_row
            .iter()
            .chain(d_row.unwrap_or(&[]))
            .fold(1.0_f64, |a, v| a.max(v.abs()));
        if g_row.iter().all(|v| v.abs() <= ZERO_ROW_TOL * scale) {
            checks.push(StateCheck {
                tag,
                w: bound,
                s: s_row,
            });
        } else {
            g_rows.push(g_row);
            s_rows.push(s_row);
            w.push(bound);
            tags.push(tag);
        }
    };
    for t in 0..horizon {
        for row in 0..p.stage_c().rows() {
            push_row(
                RowTag::Stage { step: t, row },
                p.stage_c().row(row),
                Some(p.stage_d().row(row)),
                p.stage_e()[row],
                t,
            );
        }
    }
    for row in 0..p.terminal_c().rows() {
        push_row(
            RowTag::Terminal { row },
            p.terminal_c().row(row),
            None,
            p.terminal_e()[row],
            horizon,
        );
    }

    let to_matrix = |rows: &[Vec<f64>], cols: usize| {
        if rows.is_empty() {
            Ok(DenseMatrix::zeros(0, cols))
        } else {
            DenseMatrix::from_rows(rows)
        }
    };
    let g = to_matrix(&g_rows, nz)?;
    let s = to_matrix(&s_rows, n)?;
    MpQp::assemble(h, f, g, w, s, tags, checks, m)
}

/// `½ zᵀ H z + xᵀ F z`
pub fn evaluate_cost(q: &MpQp, x: &[f64], z: &[f64]) -> Result<f64, ModelError> {
    q.check_state(x)?;
    q.check_decision(z)?;
    let hz = q.h().mul_vec(z)?;
    let fz = q.f().mul_vec(z)?;
    Ok(0.5 * dot(z, &hz) + dot(x, &fz))
}

/// Rows of `G z ≤ W + S x` violated by more than `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: usize,
    pub max_violation: f64,
    pub worst_row: Option<usize>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations == 0
    }
}

pub fn check_feasible(
    q: &MpQp,
    x: &[f64],
    z: &[f64],
    tol: f64,
) -> Result<FeasibilityReport, ModelError> {
    q.check_state(x)?;
    q.check_decision(z)?;
    let mut report = FeasibilityReport {
        violations: 0,
        max_violation: 0.0,
        worst_row: None,
    };
    for j in 0..q.num_constraints() {
        let v = dot(q.g().row(j), z) - q.rhs_row(j, x);
        if v > tol {
            report.violations += 1;
            if v > report.max_violation {
                report.max_violation = v;
                report.worst_row = Some(j);
            }
        }
    }
    Ok(report)
}
