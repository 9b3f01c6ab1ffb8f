//! Fixtures shared by the criterion benches.

use camp_core::{build_scenario, run_full_loop, HistoryRecord, QpSolver, Scenario, ScenarioConfig};

pub fn default_scenario() -> Scenario {
    build_scenario(&ScenarioConfig::double_integrator()).expect("default scenario builds")
}

/// States of the full-MPC closed loop at the given steps.
pub fn states_at(sc: &Scenario, steps: &[usize]) -> Vec<Vec<f64>> {
    let last = steps.iter().copied().max().unwrap_or(0);
    let run = run_full_loop(&sc.qp, &sc.config.x0, last + 1, true, sc.plant());
    steps.iter().map(|&k| run.states[k].clone()).collect()
}

/// History record for the full solution at `x`.
pub fn record_at(sc: &Scenario, x: &[f64]) -> HistoryRecord {
    let sol = QpSolver::default().solve_full(&sc.qp, x).expect("solve runs");
    HistoryRecord::new(&sc.qp, x.to_vec(), sol.z_star, sol.active_set)
}
