use serde::Serialize;

use super::{normalize_retained, QpError, QpSolution};
use crate::linalg::dot;
use crate::model::MpQp;

/// Scaled KKT residuals of a candidate solution, recomputed from the problem
/// data alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `‖Hz + Fᵀx + G_Aᵀλ‖∞ / (1 + ‖Hz‖∞ + ‖Fᵀx‖∞)`
    pub stationarity: f64,
    /// `max_j (G_j z − b_j)₊ / (1 + |b_j|)` over retained rows.
    pub primal: f64,
    /// `max_j (−λ_j)₊`
    pub dual: f64,
    /// `max_j |λ_j (G_j z − b_j)| / (1 + |b_j|)`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Checks `sol` against the KKT system of the QP restricted to `retained`.
/// Multipliers of rows outside `sol.active_set` are taken as zero.
pub fn kkt_residuals(
    q: &MpQp,
    x: &[f64],
    retained: &[usize],
    sol: &QpSolution,
) -> Result<KktResiduals, QpError> {
    q.check_state(x)?;
    q.check_decision(&sol.z_star)?;
    let retained = normalize_retained(retained, q.num_constraints())?;
    let z = &sol.z_star;

    let hz = q.h().mul_vec(z)?;
    let ftx = q.f().tr_mul_vec(x)?;
    let mut grad: Vec<f64> = hz.iter().zip(&ftx).map(|(a, b)| a + b).collect();
    let mut dual = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for (&j, &lambda) in sol.active_set.iter().zip(&sol.multipliers) {
        if retained.binary_search(&j).is_err() {
            return Err(QpError::IndexOutOfRange {
                index: j,
                rows: retained.len(),
            });
        }
        for (gk, &gjk) in grad.iter_mut().zip(q.g().row(j)) {
            *gk += lambda * gjk;
        }
        dual = dual.max(-lambda);
        let b = q.rhs_row(j, x);
        let slack = dot(q.g().row(j), z) - b;
        complementarity = complementarity.max((lambda * slack).abs() / (1.0 + b.abs()));
    }
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let stationarity = inf(&grad) / (1.0 + inf(&hz) + inf(&ftx));
    let primal = retained
        .iter()
        .map(|&j| {
            let b = q.rhs_row(j, x);
            (dot(q.g().row(j), z) - b).max(0.0) / (1.0 + b.abs())
        })
        .fold(0.0, f64::max);
    Ok(KktResiduals {
        stationarity,
        primal,
        dual: dual.max(0.0),
        complementarity,
    })
}
