//! Strictly convex QP solves over a subset of the mp-QP rows.

mod active_set;
mod kkt;
mod oracle;

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::ModelError;

pub use active_set::{QpSolver, SolverSettings};
pub use kkt::{kkt_residuals, KktResiduals};
pub use oracle::{solve_oracle, ORACLE_MAX_ROWS, ORACLE_MAX_VARS};

/// Scale-aware tightness band `1e-8 · (1 + |W_j + S_j x|)`.
#[inline]
pub fn active_tol(rhs: f64) -> f64 {
    1e-8 * (1.0 + rhs.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("row index {index} out of range for {rows} constraints")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("oracle size guard: {vars} variables / {rows} rows exceeds {max_vars} / {max_rows}")]
    SizeGuard {
        vars: usize,
        rows: usize,
        max_vars: usize,
        max_rows: usize,
    },
}

/// Result of one QP solve.
///
/// `active_set` lists every retained row that is tight within
/// [`active_tol`]; `multipliers` is aligned with it and is zero for rows that
/// are tight but carry no force.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z_star: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub solve_time: Duration,
    pub status: SolveStatus,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// First `m` entries of the optimizer.
    pub fn first_input(&self, m: usize) -> &[f64] {
        &self.z_star[..m]
    }
}

/// Sorted, deduplicated copy of `retained`, checked against `rows`.
pub(crate) fn normalize_retained(retained: &[usize], rows: usize) -> Result<Vec<usize>, QpError> {
    let mut r = retained.to_vec();
    if !r.windows(2).all(|w| w[0] < w[1]) {
        r.sort_unstable();
        r.dedup();
    }
    if let Some(&index) = r.last().filter(|&&i| i >= rows) {
        return Err(QpError::IndexOutOfRange { index, rows });
    }
    Ok(r)
}
