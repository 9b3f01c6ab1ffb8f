//! Linear MPC with constraint removal certified by a Lipschitz bound on the
//! QP optimizer.
//!
//! The pipeline is: build an [`MpcProblem`], [`condense`] it into an
//! [`MpQp`], bound the optimizer's Lipschitz constant with
//! [`kappa_max_scaled`], then drive a [`CaMpcEngine`] in closed loop.

pub mod engine;
pub mod linalg;
pub mod lipschitz;
pub mod model;
pub mod qp;
pub mod scenario;

pub use engine::{
    certify_equivalence, removal_set, run_closed_loop, run_full_loop, verify_removal, CaMpcEngine,
    EngineConfig, EngineError, EquivalenceReport, HistoryRecord, HistoryStore, RemovalReport,
    StepOutcome, TrajectoryLog,
};
pub use linalg::{cholesky, spectral_norm, CholeskyFactor, DenseMatrix, LinalgError};
pub use lipschitz::{
    kappa_max, kappa_max_scaled, row_norm_scaling, validate_bound, LipschitzCertificate,
    LipschitzError, ValidationConfig, ValidationReport,
};
pub use model::{
    check_feasible, condense, evaluate_cost, ModelError, MpQp, MpcProblem, RowTag, StateCheck,
};
pub use qp::{kkt_residuals, solve_oracle, QpError, QpSolution, QpSolver, SolveStatus, SolverSettings};
pub use scenario::{
    build_scenario, linearize_ellipse, run_benchmark, BenchmarkReport, BenchmarkSummary,
    EllipseSpec, Scenario, ScenarioConfig, ScenarioError,
};
