//! Median errors across horizons under the smaller-root rate, which
//! stabilizes, and under the larger-root rate, which keeps growing.

use car2::montecarlo::{convergence_study, ExperimentConfig};
use car2::ModelParams;

fn main() -> car2::Result<()> {
    let params = ModelParams::new(3.0, -2.0, 1.0, 0.0, 0.0)?;
    let mut cfg = ExperimentConfig::new(params, vec![6.0, 8.0, 10.0], 500);
    cfg.n_steps_per_unit_time = 1000;
    let report = convergence_study(&cfg)?;
    println!("{:>5} {:>12} {:>14} {:>14}", "T", "median|err|", report.v1_expr, report.control_expr.as_deref().unwrap_or("-"));
    for row in &report.rows {
        let control = row.control_median.map_or(f64::NAN, |c| c[0]);
        println!("{:>5} {:>12.3e} {:>14.4} {:>14.2}", row.horizon, row.raw_median_abs[0], row.normalized_median[0], control);
    }
    println!("spread {:.2}, control growth {:.1}", report.spread[0], report.control_growth.map_or(f64::NAN, |g| g[0]));
    Ok(())
}
