use std::io::Write;

use super::TrajectoryLog;

/// Fixed leading and trailing columns; state and input columns
/// (`x_0..`, `u_0..`) sit between `step` and `n_kept`.
pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "step",
    "n_kept",
    "n_removed",
    "radius",
    "removal_time_us",
    "solve_time_us",
    "full_solve_time_us",
    "max_kkt_residual",
];

fn micros(d: std::time::Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e6)
}

/// Writes one row per completed step. `full_solve_time_us` is empty when the
/// full problem was not solved alongside.
pub fn write_trajectory_csv<W: Write>(out: W, log: &TrajectoryLog) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = log.states.first().map_or(0, Vec::len);
    let m = log.steps.first().map_or(0, |s| s.u.len());
    let mut header = vec![TRAJECTORY_COLUMNS[0].to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.extend(TRAJECTORY_COLUMNS[1..].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (k, s) in log.steps.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(s.x.iter().map(|v| v.to_string()));
        rec.extend(s.u.iter().map(|v| v.to_string()));
        rec.push(s.report.kept.len().to_string());
        rec.push(s.report.removed.len().to_string());
        rec.push(s.report.radius.to_string());
        rec.push(micros(s.report.timings.search + s.report.timings.removal));
        rec.push(micros(s.report.timings.solve));
        rec.push(s.full.as_ref().map_or(String::new(), |f| micros(f.solve_time)));
        rec.push(format!("{:e}", s.max_kkt_residual));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
