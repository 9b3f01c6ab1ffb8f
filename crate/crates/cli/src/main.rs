//! `camp`: command-line front end for constraint-adaptive MPC experiments.

mod overrides;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camp_core::engine::write_trajectory_csv;
use camp_core::lipschitz::LipschitzCertificate;
use camp_core::scenario::{write_bench_csv, write_summary_json, EQUIVALENCE_TOL, KAPPA_HAT_GUARD};
use camp_core::{
    build_scenario, certify_equivalence, run_benchmark, run_closed_loop, validate_bound, CaMpcEngine, QpSolver,
    ModelError, RowTag, Scenario, ScenarioConfig, ScenarioError,
};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "camp", version, about = "Constraint-adaptive linear MPC with certified constraint removal")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON; the built-in double integrator when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Closed-loop steps (overrides `steps` in the config).
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Validation seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use this removal bound instead of the computed scaled bound.
    /// `kappa` validates it; `compare` and `bench` report whether it held.
    #[arg(long, global = true, value_name = "K")]
    kappa: Option<f64>,
    /// Config override `key=value`, dotted path into the JSON; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Build the condensed problem and write its dimensions and row provenance.
    Condense,
    /// Compute both Lipschitz bounds and validate the scaled one by sampling.
    Kappa,
    /// Run the constraint-adaptive loop and write `trajectory.csv`.
    Simulate,
    /// Run the adaptive and full loops side by side and compare trajectories.
    Compare,
    /// Time reduced against full solves; writes `bench.csv` and `summary.json`.
    Bench,
}

#[derive(Debug)]
enum Failure {
    /// Bad flags, config or override, or an unwritable output.
    Usage(String),
    Numerical(String),
    Equivalence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Equivalence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Equivalence(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(_)
            | ScenarioError::Ellipse { .. }
            | ScenarioError::Json(_)
            | ScenarioError::Model(
                ModelError::DimensionMismatch { .. }
                | ModelError::EmptyHorizon
                | ModelError::OriginNotInterior { .. }
                | ModelError::NotPositiveDefinite { .. },
            ) => Failure::Usage(format!("config: {e}")),
            ScenarioError::Io(_) | ScenarioError::Csv(_) => Failure::Usage(format!("output: {e}")),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

struct Printer {
    quiet: bool,
    verbose: bool,
}

impl Printer {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn detail(&self, line: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", line.as_ref());
        }
    }
}

fn load_config(c: &Common) -> Result<ScenarioConfig, Failure> {
    let mut doc = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            serde_json::from_str::<Value>(&text).map_err(|e| io_failure(path, e))?
        }
        None => serde_json::to_value(ScenarioConfig::double_integrator()).expect("default config serializes"),
    };
    for assignment in &c.overrides {
        overrides::apply(&mut doc, assignment).map_err(Failure::Usage)?;
        // deserialize after each override so a type error names its key
        serde_json::from_value::<ScenarioConfig>(doc.clone())
            .map_err(|e| Failure::Usage(format!("override `{assignment}`: {e}")))?;
    }
    let mut cfg: ScenarioConfig =
        serde_json::from_value(doc).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    if let Some(steps) = c.steps {
        cfg.steps = steps;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| io_failure(&path, e))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), Failure> {
    let out = create(dir, name)?;
    serde_json::to_writer_pretty(out, value).map_err(|e| io_failure(&dir.join(name), e))
}

fn condense_cmd(sc: &Scenario, dir: &Path, p: &Printer) -> Result<(), Failure> {
    let horizon = sc.config.horizon;
    let mut per_step = vec![0usize; horizon];
    let mut terminal = 0;
    for tag in sc.qp.row_tags() {
        match *tag {
            RowTag::Stage { step, .. } => per_step[step] += 1,
            RowTag::Terminal { .. } => terminal += 1,
            RowTag::Given { .. } => {}
        }
    }
    let summary = json!({
        "state_dim": sc.qp.state_dim(),
        "input_dim": sc.qp.input_dim(),
        "horizon": horizon,
        "num_vars": sc.qp.num_vars(),
        "num_constraints": sc.qp.num_constraints(),
        "stage_rows_per_step": sc.problem.stage_c().rows(),
        "terminal_rows": sc.problem.terminal_c().rows(),
        "rows_by_step": per_step,
        "terminal_rows_kept": terminal,
        "state_checks": sc.qp.state_checks().len(),
    });
    write_json(dir, "condense.json", &summary)?;
    p.say(format!(
        "n_z={} n_c={} state_checks={} horizon={horizon}",
        sc.qp.num_vars(),
        sc.qp.num_constraints(),
        sc.qp.state_checks().len()
    ));
    p.detail(format!("rows by step: {per_step:?}, terminal: {terminal}"));
    Ok(())
}

fn describe(name: &str, c: &LipschitzCertificate) -> String {
    format!(
        "{name}={:.6e}  ‖H⁻¹Fᵀ‖={:.6e} ‖H⁻¹GᵀΦ‖={:.6e} ‖Φ(S+GH⁻¹Fᵀ)‖={:.6e} min_j (ΦGH⁻¹GᵀΦ)_jj={:.6e}",
        c.kappa, c.terms.h_inv_ft, c.terms.h_inv_gt, c.terms.coupling, c.terms.min_row_gram
    )
}

fn kappa_cmd(sc: &Scenario, removal: Option<f64>, dir: &Path, p: &Printer) -> Result<(), Failure> {
    p.say(describe("kappa", &sc.kappa));
    p.say(describe("kappa_hat", &sc.kappa_hat));
    let checked = removal.unwrap_or(sc.kappa_hat.kappa);
    if removal.is_some() {
        p.say(format!("validating override kappa={checked:.6e}"));
    }
    let (lo, hi) = KAPPA_HAT_GUARD;
    p.detail(format!(
        "kappa_hat inside [{lo}, {hi}]: {}",
        (lo..=hi).contains(&sc.kappa_hat.kappa)
    ));
    let validation = if sc.config.validation_samples > 0 {
        let vcfg = sc.config.validation_config()?;
        let rep = validate_bound(&sc.qp, checked, &mut QpSolver::default(), &vcfg)
            .map_err(|e| Failure::Numerical(e.to_string()))?;
        p.say(format!(
            "validation: pairs={} retained_sets={} violations={} max_ratio={:.6e}",
            rep.pairs_checked, rep.retained_sets, rep.violations, rep.max_ratio
        ));
        Some(rep)
    } else {
        None
    };
    write_json(
        dir,
        "kappa.json",
        &json!({"kappa": sc.kappa, "kappa_hat": sc.kappa_hat, "validated_kappa": checked, "validation": validation}),
    )?;
    match validation {
        Some(rep) if rep.violations > 0 => Err(Failure::Equivalence(format!(
            "bound violated on {} of {} pairs",
            rep.violations, rep.pairs_checked
        ))),
        _ => Ok(()),
    }
}

fn simulate_cmd(sc: &Scenario, dir: &Path, p: &Printer) -> Result<(), Failure> {
    let mut engine = CaMpcEngine::new(&sc.qp, sc.kappa_hat.kappa, sc.engine_config());
    let log = run_closed_loop(&mut engine, &sc.config.x0, sc.config.steps, sc.plant());
    let path = dir.join("trajectory.csv");
    write_trajectory_csv(create(dir, "trajectory.csv")?, &log).map_err(|e| io_failure(&path, e))?;
    for st in &log.steps {
        p.detail(format!(
            "x={:?} u={:?} kept={} removed={} radius={:.3e}",
            st.x,
            st.u,
            st.report.kept.len(),
            st.report.removed.len(),
            st.report.radius
        ));
    }
    let removed: usize = log.steps.iter().map(|s| s.report.removed.len()).sum();
    let total: usize = log.steps.iter().map(|s| s.report.num_constraints).sum();
    p.say(format!(
        "steps={} removed_fraction={:.4} final_state={:?} -> {}",
        log.steps.len(),
        removed as f64 / total.max(1) as f64,
        log.states.last().expect("initial state is logged"),
        path.display()
    ));
    match log.error {
        Some((k, e)) => Err(Failure::Numerical(format!("step {k}: {e}"))),
        None => Ok(()),
    }
}

fn compare_cmd(sc: &Scenario, dir: &Path, p: &Printer) -> Result<(), Failure> {
    let (rep, _, _) = certify_equivalence(
        &sc.qp,
        sc.kappa_hat.kappa,
        sc.engine_config(),
        &sc.config.x0,
        sc.config.steps,
        sc.plant(),
    );
    write_json(dir, "compare.json", &rep)?;
    let max_dev = rep.max_state_deviation.max(rep.max_input_deviation);
    if let Some(e) = &rep.full_error {
        return Err(Failure::Numerical(format!("full MPC: {e}")));
    }
    if rep.passed(EQUIVALENCE_TOL) {
        p.say(format!("PASS max_dev={max_dev:.3e} steps={}", rep.steps_compared));
        p.detail(format!("{rep:?}"));
        Ok(())
    } else {
        let why = rep.ca_error.as_deref().unwrap_or("trajectories differ");
        println!("FAIL max_dev={max_dev:.3e} steps={} ({why})", rep.steps_compared);
        Err(Failure::Equivalence(format!("max_dev={max_dev:.3e} exceeds {EQUIVALENCE_TOL:e}")))
    }
}

fn bench_cmd(sc: &Scenario, dir: &Path, p: &Printer) -> Result<(), Failure> {
    let report = run_benchmark(sc);
    let csv_path = dir.join("bench.csv");
    write_bench_csv(create(dir, "bench.csv")?, &report).map_err(|e| io_failure(&csv_path, e))?;
    let json_path = dir.join("summary.json");
    write_summary_json(create(dir, "summary.json")?, &report.summary).map_err(|e| io_failure(&json_path, e))?;
    let s = &report.summary;
    p.say(format!(
        "{} n_c={} kappa_hat={:.4e} removed_from_15={:.3} median_reduced_us={:.1} median_full_us={:.1} speedup={:.2}",
        s.verdict,
        s.n_c,
        s.kappa_hat,
        s.min_removed_fraction_from_15,
        s.median_reduced_us,
        s.median_full_us,
        s.speedup
    ));
    if let Some(e) = &s.error {
        return Err(Failure::Numerical(e.clone()));
    }
    if s.verdict != "PASS" {
        return Err(Failure::Equivalence(format!(
            "max_z_dev={:.3e} removal_exceptions={}",
            s.max_z_deviation, s.removal_exceptions
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let p = Printer {
        quiet: cli.common.quiet,
        verbose: cli.common.verbose,
    };
    let cfg = load_config(&cli.common)?;
    let mut sc = build_scenario(&cfg)?;
    let removal = cli.common.kappa;
    if let Some(k) = removal {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Failure::Usage(format!("--kappa must be finite and non-negative, got {k}")));
        }
        if !matches!(cli.verb, Verb::Kappa) {
            p.detail(format!("removal bound overridden: {k:e}"));
            sc.kappa_hat.kappa = k;
        }
    }
    p.detail(format!(
        "n_z={} n_c={} kappa_hat={:.4e}",
        sc.qp.num_vars(),
        sc.qp.num_constraints(),
        sc.kappa_hat.kappa
    ));
    let dir = cli.common.out.as_path();
    match cli.verb {
        Verb::Condense => condense_cmd(&sc, dir, &p),
        Verb::Kappa => kappa_cmd(&sc, removal, dir, &p),
        Verb::Simulate => simulate_cmd(&sc, dir, &p),
        Verb::Compare => compare_cmd(&sc, dir, &p),
        Verb::Bench => bench_cmd(&sc, dir, &p),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
