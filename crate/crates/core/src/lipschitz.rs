//! Explicit Lipschitz bound for the mp-QP solution map.
//!
//! For every retained row subset `I` and states `x₁, x₂`,
//!
//! ```text
//!   ‖z*_I(x₁) − z*_I(x₂)‖ ≤ κ ‖x₁ − x₂‖,
//!   κ = ‖H⁻¹Fᵀ‖ + ‖H⁻¹Gᵀ‖ · ‖S + GH⁻¹Fᵀ‖ / min_j G_j H⁻¹ G_jᵀ.
//! ```
//!
//! Rescaling the rows by a positive diagonal `Φ` leaves every `z*_I`
//! unchanged but changes the bound, which is how the scaled variant is
//! obtained. All norms are spectral norms; the only `n_c`-sized work is
//! forming the two small Gram matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{
    self, dist2, min_row_gram, spectral_norm, DenseMatrix, LinalgError, POWER_ITER_MAX,
};
use crate::model::MpQp;
use crate::qp::{QpError, QpSolver};

/// Relative accuracy requested from each norm.
pub const NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LipschitzError {
    #[error("row scale {index} is {value}, must be positive")]
    NonPositiveScale { index: usize, value: f64 },
    #[error("expected {expected} row scales, got {found}")]
    ScaleLength { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KappaVariant {
    Unscaled,
    Scaled,
}

/// The four factors the bound is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaTerms {
    /// `‖H⁻¹Fᵀ‖₂`
    pub h_inv_ft: f64,
    /// `min_j (ΦG)_j H⁻¹ (ΦG)_jᵀ`
    pub min_row_gram: f64,
    /// `‖H⁻¹GᵀΦᵀ‖₂`
    pub h_inv_gt: f64,
    /// `‖ΦS + ΦGH⁻¹Fᵀ‖₂`
    pub coupling: f64,
}

impl KappaTerms {
    pub fn assemble(&self) -> f64 {
        self.h_inv_ft + self.h_inv_gt * self.coupling / self.min_row_gram
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzCertificate {
    pub kappa: f64,
    pub variant: KappaVariant,
    pub terms: KappaTerms,
    pub norm_tol: f64,
    pub max_iter: usize,
    /// Diagonal of `Φ` for the scaled variant.
    #[serde(skip)]
    pub phi_diag: Option<Vec<f64>>,
}

/// Bound with `Φ = I`.
pub fn kappa_max(q: &MpQp) -> Result<LipschitzCertificate, LipschitzError> {
    certificate(q, None)
}

/// Bound for the row scaling `Φ = diag(phi_diag)`.
pub fn kappa_max_scaled(q: &MpQp, phi_diag: &[f64]) -> Result<LipschitzCertificate, LipschitzError> {
    if phi_diag.len() != q.num_constraints() {
        return Err(LipschitzError::ScaleLength {
            expected: q.num_constraints(),
            found: phi_diag.len(),
        });
    }
    if let Some((index, &value)) = phi_diag.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(LipschitzError::NonPositiveScale { index, value });
    }
    certificate(q, Some(phi_diag))
}

/// `Φ = diag(1/‖G_j‖₂)`, i.e. unit-norm rows.
pub fn row_norm_scaling(q: &MpQp) -> Vec<f64> {
    q.row_norms().iter().map(|r| 1.0 / r).collect()
}

fn certificate(q: &MpQp, phi: Option<&[f64]>) -> Result<LipschitzCertificate, LipschitzError> {
    let fact = q.h_factor();
    let g = match phi {
        Some(p) => q.g().scale_rows(p)?,
        None => q.g().clone(),
    };
    let s = match phi {
        Some(p) => q.s().scale_rows(p)?,
        None => q.s().clone(),
    };
    // rows of ΦG H⁻¹; its spectral norm equals that of H⁻¹GᵀΦᵀ
    let mut g_h_inv = DenseMatrix::zeros(g.rows(), g.cols());
    for j in 0..g.rows() {
        let row = g_h_inv.row_mut(j);
        row.copy_from_slice(g.row(j));
        fact.solve_in_place(row);
    }
    let coupling = s.add(&g.matmul(q.h_inv_ft())?)?;

    let norm = |m: &DenseMatrix| -> Result<f64, LinalgError> {
        if m.rows() == 0 || m.cols() == 0 {
            Ok(0.0)
        } else {
            spectral_norm(m, NORM_TOL, POWER_ITER_MAX)
        }
    };
    let terms = KappaTerms {
        h_inv_ft: norm(q.h_inv_ft())?,
        min_row_gram: if g.rows() == 0 {
            f64::INFINITY
        } else {
            min_row_gram(&g, fact)?
        },
        h_inv_gt: norm(&g_h_inv)?,
        coupling: norm(&coupling)?,
    };
    let second = if g.rows() == 0 {
        0.0
    } else {
        terms.h_inv_gt * terms.coupling / terms.min_row_gram
    };
    Ok(LipschitzCertificate {
        kappa: terms.h_inv_ft + second,
        variant: if phi.is_some() {
            KappaVariant::Scaled
        } else {
            KappaVariant::Unscaled
        },
        terms,
        norm_tol: NORM_TOL,
        max_iter: POWER_ITER_MAX,
        phi_diag: phi.map(<[f64]>::to_vec),
    })
}

/// Sampling setup for [`validate_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    /// Number of feasible state pairs to check.
    pub samples: usize,
    /// Number of retained-row subsets; the first is always the full set.
    pub retained_sets: usize,
    pub seed: u64,
    /// Axis-aligned box the states are drawn from.
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    /// Give up after `max_attempts_factor · samples` draws.
    pub max_attempts_factor: usize,
}

impl ValidationConfig {
    pub fn new(samples: usize, seed: u64, state_lower: Vec<f64>, state_upper: Vec<f64>) -> Self {
        Self {
            samples,
            retained_sets: 20,
            seed,
            state_lower,
            state_upper,
            max_attempts_factor: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kappa: f64,
    pub pairs_checked: usize,
    pub infeasible_skipped: usize,
    pub retained_sets: usize,
    pub violations: usize,
    /// Largest observed `‖Δz‖ / ‖Δx‖`.
    pub max_ratio: f64,
}

/// Empirical check of the bound on random state pairs and retained sets.
///
/// Half of the pairs are drawn independently from the box, the other half
/// as small perturbations of the first state, which probes the local slope.
pub fn validate_bound(
    q: &MpQp,
    kappa: f64,
    solver: &mut QpSolver,
    cfg: &ValidationConfig,
) -> Result<ValidationReport, QpError> {
    let n = q.state_dim();
    let nc = q.num_constraints();
    q.check_state(&cfg.state_lower)?;
    q.check_state(&cfg.state_upper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let num_sets = cfg.retained_sets.max(1);
    let mut sets: Vec<Vec<usize>> = vec![(0..nc).collect()];
    while sets.len() < num_sets {
        let p: f64 = rng.gen_range(0.02..0.9);
        sets.push((0..nc).filter(|_| rng.gen_bool(p)).collect());
    }

    let width: Vec<f64> = cfg
        .state_lower
        .iter()
        .zip(&cfg.state_upper)
        .map(|(l, u)| u - l)
        .collect();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|i| cfg.state_lower[i] + width[i] * rng.gen::<f64>())
            .collect()
    };

    let mut report = ValidationReport {
        kappa,
        pairs_checked: 0,
        infeasible_skipped: 0,
        retained_sets: sets.len(),
        violations: 0,
        max_ratio: 0.0,
    };
    let max_attempts = cfg.samples * cfg.max_attempts_factor.max(1);
    let mut attempt = 0;
    while report.pairs_checked < cfg.samples && attempt < max_attempts {
        let set = &sets[attempt % sets.len()];
        attempt += 1;
        let x1 = draw(&mut rng);
        let x2: Vec<f64> = if rng.gen_bool(0.5) {
            draw(&mut rng)
        } else {
            x1.iter()
                .zip(&width)
                .map(|(x, w)| x + 0.02 * w * rng.gen_range(-1.0..1.0))
                .collect()
        };
        let s1 = solver.solve(q, &x1, set)?;
        let s2 = solver.solve(q, &x2, set)?;
        if !s1.is_optimal() || !s2.is_optimal() {
            report.infeasible_skipped += 1;
            continue;
        }
        report.pairs_checked += 1;
        let dx = dist2(&x1, &x2);
        let dz = dist2(&s1.z_star, &s2.z_star);
        let ratio = if dx == 0.0 { 0.0 } else { dz / dx };
        report.max_ratio = report.max_ratio.max(ratio);
        if dz > kappa * dx * (1.0 + 1e-6) {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Helper for callers holding only `H⁻¹Fᵀ`: `‖H⁻¹Fᵀ‖₂`.
pub fn unconstrained_gain(q: &MpQp) -> Result<f64, LinalgError> {
    linalg::spectral_norm(q.h_inv_ft(), NORM_TOL, POWER_ITER_MAX)
}
