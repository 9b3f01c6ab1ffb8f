//! Constraint-adaptive MPC driven by historical solutions.
//!
//! Every stored record `(x̃, z*(x̃), A(x̃))` certifies a ball around `z*(x̃)`
//! that must contain the reduced optimizer at a nearby state `x`: its radius
//! is `κ‖x − x̃‖`. A row whose half-space (at the current `x`) contains that
//! whole ball cannot be active and is dropped, unless it was active at `x̃`.
//! The reduced QP then has the same optimizer as the full one.

mod log;

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{dist2, dot, norm2};
use crate::model::{ModelError, MpQp, RowTag};
use crate::qp::{kkt_residuals, QpError, QpSolution, QpSolver, SolveStatus};

pub use log::{write_trajectory_csv, TRAJECTORY_COLUMNS};

/// Tolerance on measured-state checks before a warning is raised.
const STATE_CHECK_TOL: f64 = 1e-9;

/// Strictness margin `1e-9 · (1 + |W_j + S_j x|)` for the removal test.
#[inline]
pub fn removal_margin(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("history store is empty")]
    EmptyStore,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("full-constraint solve failed with status {0:?}")]
    SolveFailed(SolveStatus),
}

/// One stored closed-loop sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub x_tilde: Vec<f64>,
    pub z_star: Vec<f64>,
    /// Sorted row indices.
    pub active_set: Vec<usize>,
    /// `W_j − G_j z*(x̃)` for every row.
    pub slack_offsets: Vec<f64>,
}

impl HistoryRecord {
    pub fn new(q: &MpQp, x_tilde: Vec<f64>, z_star: Vec<f64>, mut active_set: Vec<usize>) -> Self {
        active_set.sort_unstable();
        active_set.dedup();
        let slack_offsets = (0..q.num_constraints())
            .map(|j| q.w()[j] - dot(q.g().row(j), &z_star))
            .collect();
        Self {
            x_tilde,
            z_star,
            active_set,
            slack_offsets,
        }
    }

    /// `(0, 0, ∅)`: the origin is the unconstrained optimum and strictly
    /// feasible, so nothing is active there.
    pub fn origin(q: &MpQp) -> Self {
        Self::new(
            q,
            vec![0.0; q.state_dim()],
            vec![0.0; q.num_vars()],
            Vec::new(),
        )
    }
}

/// Past solutions, searched by linear scan.
#[derive(Debug, Clone)]
pub struct HistoryStore {
    records: Vec<HistoryRecord>,
    prune_radius: f64,
}

impl HistoryStore {
    pub fn empty(prune_radius: f64) -> Self {
        Self {
            records: Vec::new(),
            prune_radius: prune_radius.max(0.0),
        }
    }

    /// Store holding only the origin record.
    pub fn seeded(q: &MpQp, prune_radius: f64) -> Self {
        let mut s = Self::empty(prune_radius);
        s.records.push(HistoryRecord::origin(q));
        s
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn prune_radius(&self) -> f64 {
        self.prune_radius
    }

    /// Index and record closest to `x`; ties go to the earliest insertion.
    pub fn nearest(&self, x: &[f64]) -> Result<(usize, &HistoryRecord), EngineError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.records.iter().enumerate() {
            let d: f64 = r
                .x_tilde
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| (i, &self.records[i]))
            .ok_or(EngineError::EmptyStore)
    }

    /// Adds the record unless pruning is on and a stored state lies within
    /// `prune_radius` of it. Returns whether it was stored.
    pub fn insert(&mut self, record: HistoryRecord) -> bool {
        if self.prune_radius > 0.0 {
            if let Ok((_, near)) = self.nearest(&record.x_tilde) {
                if dist2(&near.x_tilde, &record.x_tilde) <= self.prune_radius {
                    return false;
                }
            }
        }
        self.records.push(record);
        true
    }
}

pub fn nearest<'a>(store: &'a HistoryStore, x: &[f64]) -> Result<&'a HistoryRecord, EngineError> {
    store.nearest(x).map(|(_, r)| r)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepTimings {
    pub search: Duration,
    pub removal: Duration,
    pub solve: Duration,
}

impl StepTimings {
    /// Online work of the reduced scheme: search, removal, and solve.
    pub fn online(&self) -> Duration {
        self.search + self.removal + self.solve
    }
}

/// Outcome of the removal rule at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalReport {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    /// Index of the record used, when known.
    pub neighbor: Option<usize>,
    /// `κ‖x − x̃‖₂`
    pub radius: f64,
    pub num_constraints: usize,
    pub timings: StepTimings,
}

impl RemovalReport {
    pub fn removed_fraction(&self) -> f64 {
        if self.num_constraints == 0 {
            0.0
        } else {
            self.removed.len() as f64 / self.num_constraints as f64
        }
    }
}

/// Splits the rows of `q` into kept and removed for state `x` using `rec`.
///
/// Row `j` is removed when `κ‖x − x̃‖‖G_j‖ < W_j + S_j x − G_j z*(x̃) − ε_j`
/// and `j ∉ A(x̃)`.
pub fn removal_set(
    q: &MpQp,
    kappa: f64,
    x: &[f64],
    rec: &HistoryRecord,
) -> Result<RemovalReport, EngineError> {
    q.check_state(x)?;
    q.check_state(&rec.x_tilde)?;
    if rec.slack_offsets.len() != q.num_constraints() {
        return Err(ModelError::DimensionMismatch {
            what: "history record",
            expected: q.num_constraints().to_string(),
            found: rec.slack_offsets.len().to_string(),
        }
        .into());
    }
    let radius = kappa * dist2(x, &rec.x_tilde);
    let nc = q.num_constraints();
    let mut kept = Vec::new();
    let mut removed = Vec::with_capacity(nc);
    match *x {
        [x0] => split_rows::<1>(q, [x0], radius, rec, &mut kept, &mut removed),
        [x0, x1] => split_rows::<2>(q, [x0, x1], radius, rec, &mut kept, &mut removed),
        [x0, x1, x2] => split_rows::<3>(q, [x0, x1, x2], radius, rec, &mut kept, &mut removed),
        _ => {
            let mut active = rec.active_set.iter().peekable();
            for j in 0..nc {
                let sx = dot(q.s().row(j), x);
                let keep = active.next_if_eq(&&j).is_some()
                    || !(radius * q.row_norms()[j]
                        < rec.slack_offsets[j] + sx - removal_margin(q.w()[j] + sx));
                if keep { &mut kept } else { &mut removed }.push(j);
            }
        }
    }
    Ok(RemovalReport {
        kept,
        removed,
        neighbor: None,
        radius,
        num_constraints: nc,
        timings: StepTimings::default(),
    })
}

/// Fixed-dimension body of [`removal_set`].
fn split_rows<const N: usize>(
    q: &MpQp,
    x: [f64; N],
    radius: f64,
    rec: &HistoryRecord,
    kept: &mut Vec<usize>,
    removed: &mut Vec<usize>,
) {
    let mut active = rec.active_set.iter().peekable();
    let (s_rows, _) = q.s().as_slice().as_chunks::<N>();
    let rows = s_rows
        .iter()
        .zip(q.w())
        .zip(q.row_norms())
        .zip(&rec.slack_offsets);
    for (j, (((s_j, &w_j), &norm_j), &offset_j)) in rows.enumerate() {
        let mut sx = 0.0;
        for i in 0..N {
            sx += s_j[i] * x[i];
        }
        let keep = active.next_if_eq(&&j).is_some()
            || !(radius * norm_j < offset_j + sx - removal_margin(w_j + sx));
        if keep { &mut *kept } else { &mut *removed }.push(j);
    }
}

/// Re-derives the geometric safety of a removal from scratch: every removed
/// row's hyperplane must lie farther from `z*(x̃)` than the ball radius, no
/// removed row may be active at `x̃`, and kept/removed must partition the rows.
/// Returns the offending row indices.
pub fn verify_removal(q: &MpQp, x: &[f64], rec: &HistoryRecord, report: &RemovalReport) -> Vec<usize> {
    let nc = q.num_constraints();
    let mut seen = vec![0u8; nc];
    let mut bad = Vec::new();
    for &j in report.kept.iter().chain(&report.removed) {
        if j >= nc {
            bad.push(j);
        } else {
            seen[j] += 1;
        }
    }
    bad.extend((0..nc).filter(|&j| seen[j] != 1));
    for &j in &report.removed {
        if j >= nc {
            continue;
        }
        let row = q.g().row(j);
        let rhs = q.w()[j] + dot(q.s().row(j), x);
        let distance = (rhs - dot(row, &rec.z_star)) / norm2(row);
        if !(distance > report.radius) || rec.active_set.contains(&j) {
            bad.push(j);
        }
    }
    bad.sort_unstable();
    bad.dedup();
    bad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Minimum spacing between stored states; 0 keeps everything.
    pub prune_radius: f64,
    /// Seed the reduced solve with the neighbor's active set.
    pub warm_start: bool,
    /// Also solve the full QP every step and record the deviation.
    pub side_by_side: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            prune_radius: 0.0,
            warm_start: true,
            side_by_side: false,
        }
    }
}

/// Full-QP solve run next to the reduced one.
#[derive(Debug, Clone, PartialEq)]
pub struct FullCheck {
    /// `‖z_reduced − z_full‖∞`
    pub z_deviation: f64,
    pub solve_time: Duration,
    pub solution: QpSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub report: RemovalReport,
    pub solution: QpSolution,
    /// The reduced solve failed and the full problem was solved instead.
    pub fallback: bool,
    pub full: Option<FullCheck>,
    /// Scaled KKT residual of the reduced solution on the kept rows.
    pub max_kkt_residual: f64,
    /// Measured-state checks violated at `x`.
    pub state_warnings: Vec<(RowTag, f64)>,
    pub stored: bool,
    pub store_time: Duration,
}

/// One constraint-adaptive control loop over a fixed mp-QP.
#[derive(Debug, Clone)]
pub struct CaMpcEngine<'a> {
    qp: &'a MpQp,
    kappa: f64,
    config: EngineConfig,
    solver: QpSolver,
    full_solver: QpSolver,
    store: HistoryStore,
    all_rows: Vec<usize>,
    prev_full_active: Vec<usize>,
}

impl<'a> CaMpcEngine<'a> {
    pub fn new(qp: &'a MpQp, kappa: f64, config: EngineConfig) -> Self {
        Self {
            qp,
            kappa,
            config,
            solver: QpSolver::default(),
            full_solver: QpSolver::default(),
            store: HistoryStore::seeded(qp, config.prune_radius),
            all_rows: (0..qp.num_constraints()).collect(),
            prev_full_active: Vec::new(),
        }
    }

    pub fn qp(&self) -> &MpQp {
        self.qp
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &HistoryStore {
        &self.store
    }

    /// Back to the single origin record.
    pub fn reset(&mut self) {
        self.store = HistoryStore::seeded(self.qp, self.config.prune_radius);
        self.prev_full_active.clear();
    }

    /// Nearest record, removal rule, and reduced solve, without touching the
    /// store. This is the online part of a step.
    pub fn solve_reduced(&mut self, x: &[f64]) -> Result<(RemovalReport, QpSolution), EngineError> {
        let t0 = Instant::now();
        let (idx, rec) = self.store.nearest(x)?;
        let t1 = Instant::now();
        let mut report = removal_set(self.qp, self.kappa, x, rec)?;
        let t2 = Instant::now();
        let warm: &[usize] = if self.config.warm_start {
            &rec.active_set
        } else {
            &[]
        };
        let sol = self.solver.solve_warm(self.qp, x, &report.kept, warm)?;
        let t3 = Instant::now();
        report.neighbor = Some(idx);
        report.timings = StepTimings {
            search: t1 - t0,
            removal: t2 - t1,
            solve: t3 - t2,
        };
        Ok((report, sol))
    }

    /// Solves the full QP, warm-started from the previous full active set
    /// when warm starts are enabled.
    pub fn solve_full(&mut self, x: &[f64]) -> Result<QpSolution, EngineError> {
        let warm: &[usize] = if self.config.warm_start {
            &self.prev_full_active
        } else {
            &[]
        };
        let sol = self.full_solver.solve_warm(self.qp, x, &self.all_rows, warm)?;
        if sol.is_optimal() {
            self.prev_full_active.clone_from(&sol.active_set);
        }
        Ok(sol)
    }

    /// Stores `(x, z*, A)` from an optimal solution. Returns whether the
    /// store accepted it.
    pub fn record(&mut self, x: &[f64], solution: &QpSolution) -> bool {
        self.store.insert(HistoryRecord::new(
            self.qp,
            x.to_vec(),
            solution.z_star.clone(),
            solution.active_set.clone(),
        ))
    }

    /// One pass of the constraint-adaptive loop at measured state `x`.
    pub fn step(&mut self, x: &[f64]) -> Result<StepOutcome, EngineError> {
        let (report, mut solution) = self.solve_reduced(x)?;
        let mut fallback = false;
        if !solution.is_optimal() {
            fallback = true;
            solution = self.solver.solve(self.qp, x, &self.all_rows)?;
            if !solution.is_optimal() {
                return Err(EngineError::SolveFailed(solution.status));
            }
        }

        let full = if self.config.side_by_side {
            let full = self.solve_full(x)?;
            let z_deviation = if full.is_optimal() {
                solution
                    .z_star
                    .iter()
                    .zip(&full.z_star)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            Some(FullCheck {
                z_deviation,
                solve_time: full.solve_time,
                solution: full,
            })
        } else {
            None
        };

        let retained: &[usize] = if fallback { &self.all_rows } else { &report.kept };
        let max_kkt_residual = kkt_residuals(self.qp, x, retained, &solution)?.max();

        let t0 = Instant::now();
        let stored = self.record(x, &solution);
        let store_time = t0.elapsed();

        Ok(StepOutcome {
            x: x.to_vec(),
            u: solution.first_input(self.qp.input_dim()).to_vec(),
            report,
            solution,
            fallback,
            full,
            max_kkt_residual,
            state_warnings: self.qp.violated_state_checks(x, STATE_CHECK_TOL),
            stored,
            store_time,
        })
    }
}

/// States, per-step outcomes, and the error that ended the run early, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    /// `states[k]` is the state at step `k`; one longer than `steps` when the
    /// run completed.
    pub states: Vec<Vec<f64>>,
    pub steps: Vec<StepOutcome>,
    pub error: Option<(usize, EngineError)>,
}

/// Runs the constraint-adaptive loop for `steps` steps from `x0`.
pub fn run_closed_loop<P>(engine: &mut CaMpcEngine<'_>, x0: &[f64], steps: usize, mut plant: P) -> TrajectoryLog
where
    P: FnMut(&[f64], &[f64]) -> Vec<f64>,
{
    let mut log = TrajectoryLog {
        states: vec![x0.to_vec()],
        steps: Vec::with_capacity(steps),
        error: None,
    };
    for k in 0..steps {
        let x = log.states[k].clone();
        match engine.step(&x) {
            Ok(out) => {
                log.states.push(plant(&x, &out.u));
                log.steps.push(out);
            }
            Err(e) => {
                log.error = Some((k, e));
                break;
            }
        }
    }
    log
}

/// Closed loop of the unreduced MPC.
#[derive(Debug, Clone, PartialEq)]
pub struct FullTrajectory {
    pub states: Vec<Vec<f64>>,
    pub solutions: Vec<QpSolution>,
    pub error: Option<(usize, EngineError)>,
}

pub fn run_full_loop<P>(q: &MpQp, x0: &[f64], steps: usize, warm_start: bool, mut plant: P) -> FullTrajectory
where
    P: FnMut(&[f64], &[f64]) -> Vec<f64>,
{
    let mut engine = CaMpcEngine::new(
        q,
        0.0,
        EngineConfig {
            warm_start,
            ..EngineConfig::default()
        },
    );
    let mut out = FullTrajectory {
        states: vec![x0.to_vec()],
        solutions: Vec::with_capacity(steps),
        error: None,
    };
    for k in 0..steps {
        let x = out.states[k].clone();
        match engine.solve_full(&x) {
            Ok(sol) if sol.is_optimal() => {
                out.states.push(plant(&x, sol.first_input(q.input_dim())));
                out.solutions.push(sol);
            }
            Ok(sol) => {
                out.error = Some((k, EngineError::SolveFailed(sol.status)));
                break;
            }
            Err(e) => {
                out.error = Some((k, e));
                break;
            }
        }
    }
    out
}

/// Side-by-side comparison of the full and constraint-adaptive loops.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub steps_requested: usize,
    pub steps_compared: usize,
    pub max_state_deviation: f64,
    pub max_input_deviation: f64,
    /// `max_k ‖z_ca(k) − z_full(k)‖∞`
    pub max_z_deviation: f64,
    /// Both loops ran to the same length.
    pub same_length: bool,
    pub fallbacks: usize,
    /// Removed rows failing the geometric re-check, summed over steps.
    pub removal_exceptions: usize,
    pub ca_error: Option<String>,
    pub full_error: Option<String>,
}

impl EquivalenceReport {
    pub fn passed(&self, state_tol: f64) -> bool {
        self.same_length
            && self.max_state_deviation <= state_tol
            && self.max_input_deviation <= state_tol
            && self.removal_exceptions == 0
    }
}

/// Runs both loops from `x0` with the same plant and compares them.
pub fn certify_equivalence<P>(
    q: &MpQp,
    kappa: f64,
    config: EngineConfig,
    x0: &[f64],
    steps: usize,
    plant: P,
) -> (EquivalenceReport, TrajectoryLog, FullTrajectory)
where
    P: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let full = run_full_loop(q, x0, steps, config.warm_start, &plant);
    let mut engine = CaMpcEngine::new(q, kappa, config);
    let ca = run_closed_loop(&mut engine, x0, steps, &plant);

    let compared = ca.steps.len().min(full.solutions.len());
    let inf_dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let mut report = EquivalenceReport {
        steps_requested: steps,
        steps_compared: compared,
        max_state_deviation: 0.0,
        max_input_deviation: 0.0,
        max_z_deviation: 0.0,
        same_length: ca.steps.len() == full.solutions.len(),
        fallbacks: ca.steps.iter().filter(|s| s.fallback).count(),
        removal_exceptions: 0,
        ca_error: ca.error.as_ref().map(|(k, e)| format!("step {k}: {e}")),
        full_error: full.error.as_ref().map(|(k, e)| format!("step {k}: {e}")),
    };
    for k in 0..=compared {
        if let (Some(a), Some(b)) = (ca.states.get(k), full.states.get(k)) {
            report.max_state_deviation = report.max_state_deviation.max(inf_dist(a, b));
        }
    }
    let m = q.input_dim();
    for k in 0..compared {
        let a = &ca.steps[k].solution.z_star;
        let b = &full.solutions[k].z_star;
        report.max_input_deviation = report.max_input_deviation.max(inf_dist(&a[..m], &b[..m]));
        report.max_z_deviation = report.max_z_deviation.max(inf_dist(a, b));
    }
    for s in &ca.steps {
        if let Some(idx) = s.report.neighbor {
            let rec = &engine.store().records()[idx];
            report.removal_exceptions += verify_removal(q, &s.x, rec, &s.report).len();
        }
    }
    (report, ca, full)
}
