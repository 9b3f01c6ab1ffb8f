//! Double-integrator benchmark: ellipsoidal state regions linearized by
//! tangent half-spaces, and a timed comparison of full and
//! constraint-adaptive MPC.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    certify_equivalence, verify_removal, CaMpcEngine, EngineConfig, EngineError,
    EquivalenceReport, TRAJECTORY_COLUMNS,
};
use crate::linalg::{cholesky, dot, DenseMatrix, LinalgError};
use crate::lipschitz::{
    kappa_max, kappa_max_scaled, row_norm_scaling, LipschitzCertificate, LipschitzError,
    ValidationConfig,
};
use crate::model::{condense, ModelError, MpQp, MpcProblem};
use crate::qp::{kkt_residuals, QpError, QpSolver};

/// Guard band for the scaled bound on the default scenario.
pub const KAPPA_HAT_GUARD: (f64, f64) = (5.0, 100.0);

/// Step from which removal and speedup are assessed.
pub const STEADY_STATE_STEP: usize = 15;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("ellipse {index}: {reason}")]
    Ellipse { index: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lipschitz(#[from] LipschitzError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(x − d)ᵀ P (x − d) ≤ 1`, approximated by `tangent_count` tangents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub tangent_count: usize,
}

impl EllipseSpec {
    pub fn new(center: Vec<f64>, shape: Vec<Vec<f64>>, tangent_count: usize) -> Self {
        Self {
            center,
            shape,
            tangent_count,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.value(x) <= 1.0
    }

    /// `(x − d)ᵀ P (x − d)`
    pub fn value(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.shape
            .iter()
            .zip(&r)
            .map(|(row, ri)| ri * dot(row, &r))
            .sum()
    }

    /// Axis-aligned bounding box `d_i ± sqrt((P⁻¹)_ii)`.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
        let p = DenseMatrix::from_rows(&self.shape)?;
        let fact = cholesky(&p)?;
        let n = self.dim();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let half = fact.solve_vec(&e)?[i].sqrt();
            lo.push(self.center[i] - half);
            hi.push(self.center[i] + half);
        }
        Ok((lo, hi))
    }
}

/// Uniform direction on the unit sphere.
fn unit_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

const DIRECTION_SEED: u64 = 0x7a6e_6e75;

/// Tangent half-spaces `aᵢᵀ x ≤ eᵢ` of an ellipse.
///
/// With `P = LLᵀ`, the boundary point for unit direction `v` is
/// `d + L⁻ᵀv` and its tangent row is `(Lv)ᵀ(x − d) ≤ 1`. In 2-D the
/// directions are `[cos θᵢ, sin θᵢ]`, `θᵢ = 2πi/T`; in 1-D the two endpoints
/// are used; above 2-D the directions are pseudo-random with a fixed seed.
pub fn linearize_ellipse(e: &EllipseSpec) -> Result<(DenseMatrix, Vec<f64>), ScenarioError> {
    let n = e.dim();
    let bad = |reason: String| ScenarioError::Ellipse { index: 0, reason };
    if n == 0 {
        return Err(bad("empty center".into()));
    }
    if e.shape.len() != n || e.shape.iter().any(|r| r.len() != n) {
        return Err(bad(format!("shape must be {n}x{n}")));
    }
    let min_count = if n == 1 { 2 } else { 3 };
    if e.tangent_count < min_count {
        return Err(bad(format!(
            "tangent_count {} below {min_count}",
            e.tangent_count
        )));
    }
    let p = DenseMatrix::from_rows(&e.shape)?;
    let l = cholesky(&p)
        .map_err(|err| bad(format!("shape matrix: {err}")))?
        .lower()
        .clone();

    let directions: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..e.tangent_count)
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / e.tangent_count as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED ^ e.tangent_count as u64);
            (0..e.tangent_count)
                .map(|_| unit_direction(&mut rng, n))
                .collect()
        }
    };
    let mut c = DenseMatrix::zeros(directions.len(), n);
    let mut rhs = Vec::with_capacity(directions.len());
    for (i, v) in directions.iter().enumerate() {
        let a = l.mul_vec(v)?;
        rhs.push(1.0 + dot(&a, &e.center));
        c.row_mut(i).copy_from_slice(&a);
    }
    Ok((c, rhs))
}

/// Boundary points matching the rows of [`linearize_ellipse`].
pub fn tangent_points(e: &EllipseSpec) -> Result<Vec<Vec<f64>>, ScenarioError> {
    let (c, _) = linearize_ellipse(e)?;
    let p = DenseMatrix::from_rows(&e.shape)?;
    let fact = cholesky(&p)?;
    // b − d = P⁻¹a with a = Lv
    (0..c.rows())
        .map(|i| {
            let off = fact.solve_vec(c.row(i))?;
            Ok(off.iter().zip(&e.center).map(|(o, d)| o + d).collect())
        })
        .collect()
}

fn default_repetitions() -> usize {
    5
}

fn default_validation_samples() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub horizon: usize,
    /// `|u_i| ≤ input_bound[i]`; empty for no input bound.
    #[serde(default)]
    pub input_bound: Vec<f64>,
    /// `|x_i| ≤ state_bound[i]` at every stage; empty for none.
    #[serde(default)]
    pub state_bound: Vec<f64>,
    #[serde(default)]
    pub stage_ellipses: Vec<EllipseSpec>,
    #[serde(default)]
    pub terminal_ellipses: Vec<EllipseSpec>,
    pub x0: Vec<f64>,
    pub steps: usize,
    #[serde(default)]
    pub prune_radius: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
}

impl ScenarioConfig {
    /// Double integrator with sample time 0.1, two stage ellipses and two
    /// terminal ellipses, 80 tangents each.
    pub fn double_integrator() -> Self {
        let d = vec![-2.15, 0.0];
        let ell = |shape: [[f64; 2]; 2]| {
            EllipseSpec::new(d.clone(), shape.iter().map(|r| r.to_vec()).collect(), 80)
        };
        let p1 = [[0.14, 0.17], [0.17, 1.7]];
        let p2 = [[0.20, 0.05], [0.05, 0.21]];
        let p3 = [[0.1, 0.07], [0.07, 0.97]];
        Self {
            a: vec![vec![1.0, 0.1], vec![0.0, 1.0]],
            b: vec![vec![0.005], vec![0.1]],
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r: vec![vec![1.0]],
            p: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            horizon: 12,
            input_bound: vec![1.0],
            state_bound: Vec::new(),
            stage_ellipses: vec![ell(p1), ell(p2)],
            terminal_ellipses: vec![ell(p1), ell(p3)],
            x0: vec![-4.1, 0.0],
            steps: 150,
            prune_radius: 0.0,
            seed: 0,
            repetitions: default_repetitions(),
            warm_start: true,
            validation_samples: default_validation_samples(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.state_dim();
        let m = self.input_dim();
        let cfg = |s: String| Err(ScenarioError::Config(s));
        if n == 0 || m == 0 {
            return cfg("a and b must be non-empty".into());
        }
        if self.x0.len() != n {
            return cfg(format!("x0 has length {}, expected {n}", self.x0.len()));
        }
        if !self.input_bound.is_empty() && self.input_bound.len() != m {
            return cfg(format!(
                "input_bound has length {}, expected {m}",
                self.input_bound.len()
            ));
        }
        if !self.state_bound.is_empty() && self.state_bound.len() != n {
            return cfg(format!(
                "state_bound has length {}, expected {n}",
                self.state_bound.len()
            ));
        }
        for (name, v) in [("input_bound", &self.input_bound), ("state_bound", &self.state_bound)] {
            if let Some(b) = v.iter().find(|b| !(**b > 0.0)) {
                return cfg(format!("{name} entries must be positive, got {b}"));
            }
        }
        if self.repetitions == 0 {
            return cfg("repetitions must be at least 1".into());
        }
        if !(self.prune_radius >= 0.0) {
            return cfg("prune_radius must be non-negative".into());
        }
        if let Some(v) = self.x0.iter().find(|v| !v.is_finite()) {
            return cfg(format!("x0 entry {v} is not finite"));
        }
        let ellipses = self.stage_ellipses.iter().chain(&self.terminal_ellipses);
        for (index, e) in ellipses.enumerate() {
            if e.dim() != n {
                return Err(ScenarioError::Ellipse {
                    index,
                    reason: format!("center has length {}, expected {n}", e.dim()),
                });
            }
            linearize_ellipse(e).map_err(|err| match err {
                ScenarioError::Ellipse { reason, .. } => ScenarioError::Ellipse { index, reason },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Intersection of the stage ellipses' bounding boxes.
    pub fn state_box(&self) -> Result<(Vec<f64>, Vec<f64>), ScenarioError> {
        let n = self.state_dim();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for (i, &b) in self.state_bound.iter().enumerate() {
            lo[i] = lo[i].max(-b);
            hi[i] = hi[i].min(b);
        }
        for e in &self.stage_ellipses {
            let (l, h) = e.bounding_box()?;
            for i in 0..n {
                lo[i] = lo[i].max(l[i]);
                hi[i] = hi[i].min(h[i]);
            }
        }
        let scale = self.x0.iter().fold(1.0_f64, |m, v| m.max(2.0 * v.abs()));
        for i in 0..n {
            if !lo[i].is_finite() {
                lo[i] = -scale;
            }
            if !hi[i].is_finite() {
                hi[i] = scale;
            }
        }
        Ok((lo, hi))
    }

    pub fn validation_config(&self) -> Result<ValidationConfig, ScenarioError> {
        let (lo, hi) = self.state_box()?;
        Ok(ValidationConfig::new(self.validation_samples, self.seed, lo, hi))
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DenseMatrix, ScenarioError> {
    DenseMatrix::from_rows(rows).map_err(|e| ScenarioError::Config(format!("{name}: {e}")))
}

fn stack(blocks: &[(DenseMatrix, Vec<f64>)], n: usize) -> (DenseMatrix, Vec<f64>) {
    let rows: usize = blocks.iter().map(|(c, _)| c.rows()).sum();
    let mut c = DenseMatrix::zeros(rows, n);
    let mut e = Vec::with_capacity(rows);
    let mut at = 0;
    for (block, rhs) in blocks {
        c.set_block(at, 0, block);
        e.extend_from_slice(rhs);
        at += block.rows();
    }
    (c, e)
}

/// A built benchmark problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub problem: MpcProblem,
    pub qp: MpQp,
    /// Bound with unit row scaling.
    pub kappa: LipschitzCertificate,
    /// Bound with `Φ = diag(1/‖G_j‖)`; drives removal.
    pub kappa_hat: LipschitzCertificate,
}

impl Scenario {
    pub fn num_constraints(&self) -> usize {
        self.qp.num_constraints()
    }

    pub fn plant(&self) -> impl Fn(&[f64], &[f64]) -> Vec<f64> + '_ {
        |x, u| self.problem.next_state(x, u)
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            prune_radius: self.config.prune_radius,
            warm_start: self.config.warm_start,
            side_by_side: false,
        }
    }
}

/// Stage rows are the input box, the state box, and the tangents of every
/// stage ellipse;
/// terminal rows are the tangents of every terminal ellipse.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    cfg.validate()?;
    let n = cfg.state_dim();
    let m = cfg.input_dim();

    let mut stage_x = Vec::new();
    for e in &cfg.stage_ellipses {
        stage_x.push(linearize_ellipse(e)?);
    }
    if !cfg.state_bound.is_empty() {
        let mut cb = DenseMatrix::zeros(2 * n, n);
        let mut eb = Vec::with_capacity(2 * n);
        for (i, &bound) in cfg.state_bound.iter().enumerate() {
            cb[(2 * i, i)] = 1.0;
            cb[(2 * i + 1, i)] = -1.0;
            eb.extend([bound, bound]);
        }
        stage_x.insert(0, (cb, eb));
    }
    let (cx, ex) = stack(&stage_x, n);
    let nu = 2 * cfg.input_bound.len();
    let mut c = DenseMatrix::zeros(nu + cx.rows(), n);
    let mut d = DenseMatrix::zeros(nu + cx.rows(), m);
    let mut e = Vec::with_capacity(nu + cx.rows());
    for (i, &bound) in cfg.input_bound.iter().enumerate() {
        d[(2 * i, i)] = 1.0;
        d[(2 * i + 1, i)] = -1.0;
        e.extend([bound, bound]);
    }
    c.set_block(nu, 0, &cx);
    e.extend(ex);

    let mut term = Vec::new();
    for el in &cfg.terminal_ellipses {
        term.push(linearize_ellipse(el)?);
    }
    let (ct, et) = stack(&term, n);

    let mut builder = MpcProblem::builder(matrix("a", &cfg.a)?, matrix("b", &cfg.b)?, cfg.horizon)
        .weights(
            matrix("q", &cfg.q)?,
            matrix("r", &cfg.r)?,
            matrix("p", &cfg.p)?,
        );
    if c.rows() > 0 {
        builder = builder.stage_constraints(c, d, e);
    }
    if ct.rows() > 0 {
        builder = builder.terminal_constraints(ct, et);
    }
    let problem = builder.build()?;
    let qp = condense(&problem)?;
    let kappa = kappa_max(&qp)?;
    let kappa_hat = kappa_max_scaled(&qp, &row_norm_scaling(&qp))?;
    Ok(Scenario {
        config: cfg.clone(),
        problem,
        qp,
        kappa,
        kappa_hat,
    })
}

/// One benchmark step; times are medians over the repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub step: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub n_kept: usize,
    pub n_removed: usize,
    pub radius: f64,
    /// Neighbor search plus removal rule.
    pub removal_time: Duration,
    pub solve_time: Duration,
    /// Search, removal, and reduced solve together.
    pub reduced_time: Duration,
    pub full_solve_time: Duration,
    pub max_kkt_residual: f64,
    /// `‖z_reduced − z_full‖∞` at this state.
    pub z_deviation: f64,
    pub fallback: bool,
    /// Removed rows failing the independent geometric re-check.
    pub removal_exceptions: usize,
}

impl BenchRow {
    pub fn removed_fraction(&self) -> f64 {
        let total = self.n_kept + self.n_removed;
        if total == 0 {
            0.0
        } else {
            self.n_removed as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSummary {
    pub n_c: usize,
    pub num_vars: usize,
    pub kappa: f64,
    pub kappa_hat: f64,
    pub kappa_hat_in_guard: bool,
    pub steps: usize,
    pub repetitions: usize,
    pub warm_start: bool,
    pub equivalence: EquivalenceReport,
    pub verdict: String,
    pub max_z_deviation: f64,
    pub removal_exceptions: usize,
    pub fallbacks: usize,
    /// Over steps from [`STEADY_STATE_STEP`] on.
    pub median_reduced_us: f64,
    pub median_full_us: f64,
    pub speedup: f64,
    pub min_removed_fraction_from_15: f64,
    pub min_removed_fraction_from_100: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub summary: BenchmarkSummary,
}

/// Equivalence tolerance on states and inputs.
pub const EQUIVALENCE_TOL: f64 = 1e-6;

fn median(mut v: Vec<Duration>) -> Duration {
    if v.is_empty() {
        return Duration::ZERO;
    }
    v.sort_unstable();
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2
    }
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

/// Runs the constraint-adaptive loop with per-step timing of the reduced and
/// full solves, then the two-loop equivalence check.
///
/// Each step times the online reduced work (search, removal, solve) and the
/// full solve `repetitions` times with identical inputs and keeps medians.
/// Both solvers use the same warm-start policy. A failure mid-run ends the
/// loop; the rows so far are kept and the error is put in the summary.
pub fn run_benchmark(sc: &Scenario) -> BenchmarkReport {
    let cfg = &sc.config;
    let q = &sc.qp;
    let m = q.input_dim();
    let reps = cfg.repetitions.max(1);
    let all_rows: Vec<usize> = (0..q.num_constraints()).collect();
    let mut engine = CaMpcEngine::new(q, sc.kappa_hat.kappa, sc.engine_config());
    let mut full_solver = QpSolver::default();
    let mut prev_full_active: Vec<usize> = Vec::new();
    let mut rows = Vec::with_capacity(cfg.steps);
    let mut error = None;
    let mut x = cfg.x0.clone();

    for k in 0..cfg.steps {
        let step = (|| -> Result<BenchRow, ScenarioError> {
            let mut removal_t = Vec::with_capacity(reps);
            let mut solve_t = Vec::with_capacity(reps);
            let mut reduced_t = Vec::with_capacity(reps);
            let mut last = None;
            for _ in 0..reps {
                let (report, sol) = engine.solve_reduced(&x)?;
                removal_t.push(report.timings.search + report.timings.removal);
                solve_t.push(report.timings.solve);
                reduced_t.push(report.timings.online());
                last = Some((report, sol));
            }
            let (report, mut sol) = last.expect("at least one repetition");

            let warm: &[usize] = if cfg.warm_start { &prev_full_active } else { &[] };
            let mut full_t = Vec::with_capacity(reps);
            let mut full = None;
            for _ in 0..reps {
                let t0 = Instant::now();
                let s = full_solver.solve_warm(q, &x, &all_rows, warm)?;
                full_t.push(t0.elapsed());
                full = Some(s);
            }
            let full = full.expect("at least one repetition");
            if !full.is_optimal() {
                return Err(EngineError::SolveFailed(full.status).into());
            }

            let fallback = !sol.is_optimal();
            if fallback {
                sol = full.clone();
            }
            let retained: &[usize] = if fallback { &all_rows } else { &report.kept };
            let kkt = kkt_residuals(q, &x, retained, &sol)?.max();
            let z_deviation = sol
                .z_star
                .iter()
                .zip(&full.z_star)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let idx = report.neighbor.expect("set by solve_reduced");
            let exceptions = verify_removal(q, &x, &engine.store().records()[idx], &report).len();

            prev_full_active.clone_from(&full.active_set);
            engine.record(&x, &sol);
            Ok(BenchRow {
                step: k,
                x: x.clone(),
                u: sol.first_input(m).to_vec(),
                n_kept: report.kept.len(),
                n_removed: report.removed.len(),
                radius: report.radius,
                removal_time: median(removal_t),
                solve_time: median(solve_t),
                reduced_time: median(reduced_t),
                full_solve_time: median(full_t),
                max_kkt_residual: kkt,
                z_deviation,
                fallback,
                removal_exceptions: exceptions,
            })
        })();
        match step {
            Ok(row) => {
                x = sc.problem.next_state(&x, &row.u);
                rows.push(row);
            }
            Err(e) => {
                error = Some(format!("step {k}: {e}"));
                break;
            }
        }
    }

    let (equivalence, _, _) = certify_equivalence(
        q,
        sc.kappa_hat.kappa,
        sc.engine_config(),
        &cfg.x0,
        cfg.steps,
        sc.plant(),
    );
    let summary = summarize(sc, &rows, equivalence, error);
    BenchmarkReport { rows, summary }
}

fn summarize(
    sc: &Scenario,
    rows: &[BenchRow],
    equivalence: EquivalenceReport,
    error: Option<String>,
) -> BenchmarkSummary {
    let steady: Vec<&BenchRow> = rows.iter().filter(|r| r.step >= STEADY_STATE_STEP).collect();
    let median_reduced_us = micros(median(steady.iter().map(|r| r.reduced_time).collect()));
    let median_full_us = micros(median(steady.iter().map(|r| r.full_solve_time).collect()));
    let min_from = |from: usize| {
        rows.iter()
            .filter(|r| r.step >= from)
            .map(BenchRow::removed_fraction)
            .reduce(f64::min)
    };
    let max_z_deviation = rows
        .iter()
        .map(|r| r.z_deviation)
        .fold(equivalence.max_z_deviation, f64::max);
    let removal_exceptions =
        rows.iter().map(|r| r.removal_exceptions).sum::<usize>() + equivalence.removal_exceptions;
    let passed = equivalence.passed(EQUIVALENCE_TOL) && error.is_none();
    BenchmarkSummary {
        n_c: sc.num_constraints(),
        num_vars: sc.qp.num_vars(),
        kappa: sc.kappa.kappa,
        kappa_hat: sc.kappa_hat.kappa,
        kappa_hat_in_guard: (KAPPA_HAT_GUARD.0..=KAPPA_HAT_GUARD.1).contains(&sc.kappa_hat.kappa),
        steps: rows.len(),
        repetitions: sc.config.repetitions.max(1),
        warm_start: sc.config.warm_start,
        verdict: if passed { "PASS" } else { "FAIL" }.to_string(),
        max_z_deviation,
        removal_exceptions,
        fallbacks: rows.iter().filter(|r| r.fallback).count(),
        median_reduced_us,
        median_full_us,
        speedup: if median_reduced_us > 0.0 {
            median_full_us / median_reduced_us
        } else {
            f64::NAN
        },
        min_removed_fraction_from_15: min_from(STEADY_STATE_STEP).unwrap_or(f64::NAN),
        min_removed_fraction_from_100: min_from(100),
        equivalence,
        error,
    }
}

/// Columns of `bench.csv` after the trajectory columns.
pub const BENCH_EXTRA_COLUMNS: [&str; 5] = [
    "removed_fraction",
    "reduced_time_us",
    "z_deviation",
    "fallback",
    "removal_exceptions",
];

pub fn write_bench_csv<W: Write>(out: W, report: &BenchmarkReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = report.rows.first().map_or(0, |r| r.x.len());
    let m = report.rows.first().map_or(0, |r| r.u.len());
    let mut header = vec![TRAJECTORY_COLUMNS[0].to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.extend(TRAJECTORY_COLUMNS[1..].iter().map(|s| s.to_string()));
    header.extend(BENCH_EXTRA_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![r.step.to_string()];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        rec.extend(r.u.iter().map(|v| v.to_string()));
        rec.push(r.n_kept.to_string());
        rec.push(r.n_removed.to_string());
        rec.push(r.radius.to_string());
        rec.push(format!("{:.3}", micros(r.removal_time)));
        rec.push(format!("{:.3}", micros(r.solve_time)));
        rec.push(format!("{:.3}", micros(r.full_solve_time)));
        rec.push(format!("{:e}", r.max_kkt_residual));
        rec.push(r.removed_fraction().to_string());
        rec.push(format!("{:.3}", micros(r.reduced_time)));
        rec.push(format!("{:e}", r.z_deviation));
        rec.push(r.fallback.to_string());
        rec.push(r.removal_exceptions.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(out: W, summary: &BenchmarkSummary) -> Result<(), serde_json::Error> {
    serde_json::to_writer_pretty(out, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_circle(count: usize) -> EllipseSpec {
        EllipseSpec::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], count)
    }

    #[test]
    fn unit_circle_four_tangents() {
        let (c, e) = linearize_ellipse(&unit_circle(4)).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (i, row) in expect.iter().enumerate() {
            assert!((c[(i, 0)] - row[0]).abs() < 1e-15);
            assert!((c[(i, 1)] - row[1]).abs() < 1e-15);
            assert!((e[i] - 1.0).abs() < 1e-15);
        }
    }

    fn sample_ellipses() -> Vec<EllipseSpec> {
        let cfg = ScenarioConfig::double_integrator();
        let mut v = cfg.stage_ellipses;
        v.extend(cfg.terminal_ellipses);
        v.push(EllipseSpec::new(
            vec![0.3, -1.0, 2.0],
            vec![
                vec![2.0, 0.3, 0.1],
                vec![0.3, 1.0, -0.2],
                vec![0.1, -0.2, 0.5],
            ],
            40,
        ));
        v.push(EllipseSpec::new(vec![0.5], vec![vec![4.0]], 3));
        v
    }

    #[test]
    fn center_strict_and_boundary_points_tight() {
        for e in sample_ellipses() {
            let (c, rhs) = linearize_ellipse(&e).unwrap();
            for i in 0..c.rows() {
                assert!(dot(c.row(i), &e.center) < rhs[i] - 0.5);
            }
            let pts = tangent_points(&e).unwrap();
            assert_eq!(pts.len(), c.rows());
            for (i, b) in pts.iter().enumerate() {
                assert!((dot(c.row(i), b) - rhs[i]).abs() < 1e-10);
                assert!((e.value(b) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interior_points_satisfy_all_tangents() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for e in sample_ellipses() {
            let (c, rhs) = linearize_ellipse(&e).unwrap();
            let l = cholesky(&DenseMatrix::from_rows(&e.shape).unwrap()).unwrap();
            let n = e.dim();
            for _ in 0..10_000 {
                // x = d + L⁻ᵀ w with ‖w‖ ≤ 1
                let dir = unit_direction(&mut rng, n);
                let r: f64 = rng.gen::<f64>().powf(1.0 / n as f64);
                let mut w: Vec<f64> = dir.iter().map(|v| v * r).collect();
                l.backward_in_place(&mut w);
                let x: Vec<f64> = w.iter().zip(&e.center).map(|(a, b)| a + b).collect();
                assert!(e.value(&x) <= 1.0 + 1e-12);
                for i in 0..c.rows() {
                    assert!(dot(c.row(i), &x) <= rhs[i] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_ellipses_rejected() {
        assert!(linearize_ellipse(&unit_circle(2)).is_err());
        let bad = EllipseSpec::new(vec![0.0, 0.0], vec![vec![0.1, 0.7], vec![0.7, 0.97]], 10);
        assert!(matches!(
            linearize_ellipse(&bad),
            Err(ScenarioError::Ellipse { .. })
        ));
    }

    #[test]
    fn literal_indefinite_terminal_shape_is_rejected() {
        let mut cfg = ScenarioConfig::double_integrator();
        cfg.terminal_ellipses[1].shape = vec![vec![0.1, 0.7], vec![0.7, 0.97]];
        match build_scenario(&cfg) {
            Err(ScenarioError::Ellipse { index, .. }) => assert_eq!(index, 3),
            other => panic!("expected ellipse error, got {other:?}"),
        }
    }

    #[test]
    fn default_scenario_dimensions() {
        let sc = build_scenario(&ScenarioConfig::double_integrator()).unwrap();
        // 2 input rows × 12 stages, 160 tangents × 11 stages, 160 terminal
        assert_eq!(sc.num_constraints(), 24 + 11 * 160 + 160);
        assert!((sc.num_constraints() as f64 - 1948.0).abs() <= 0.1 * 1948.0);
        assert_eq!(sc.qp.num_vars(), 12);
        assert_eq!(sc.qp.state_checks().len(), 160);
        assert!(sc.kappa_hat.kappa.is_finite() && sc.kappa_hat.kappa > 0.0);
    }

    #[test]
    fn minimal_polytope_builds_and_solves() {
        let mut cfg = ScenarioConfig::double_integrator();
        for e in cfg.stage_ellipses.iter_mut().chain(&mut cfg.terminal_ellipses) {
            e.tangent_count = 3;
        }
        cfg.x0 = vec![-1.0, 0.0];
        let sc = build_scenario(&cfg).unwrap();
        let sol = QpSolver::default().solve_full(&sc.qp, &cfg.x0).unwrap();
        assert!(sol.is_optimal());
    }

    #[test]
    fn shipped_config_matches_default() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/double_integrator.json");
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), ScenarioConfig::double_integrator());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ScenarioConfig::double_integrator();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn config_validation_names_problem() {
        let mut cfg = ScenarioConfig::double_integrator();
        cfg.x0 = vec![1.0];
        assert!(matches!(cfg.validate(), Err(ScenarioError::Config(s)) if s.contains("x0")));
        let mut cfg = ScenarioConfig::double_integrator();
        cfg.input_bound = vec![0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn state_box_is_intersection() {
        let cfg = ScenarioConfig::double_integrator();
        let (lo, hi) = cfg.state_box().unwrap();
        for e in &cfg.stage_ellipses {
            let (l, h) = e.bounding_box().unwrap();
            for i in 0..2 {
                assert!(lo[i] >= l[i] && hi[i] <= h[i]);
            }
        }
        assert!(lo[0] < cfg.x0[0] && cfg.x0[0] < hi[0]);
    }

    #[test]
    fn median_of_durations() {
        let ms = Duration::from_millis;
        assert_eq!(median(vec![ms(3), ms(1), ms(2)]), ms(2));
        assert_eq!(median(vec![ms(4), ms(1), ms(2), ms(3)]), Duration::from_micros(2500));
        assert_eq!(median(vec![]), Duration::ZERO);
    }
}
