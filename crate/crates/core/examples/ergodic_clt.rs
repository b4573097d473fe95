//! Monte Carlo check of the ergodic central limit theorem under deterministic
//! and random normalization.

use car2::montecarlo::{run_experiment, ExperimentConfig, Normalization};
use car2::ModelParams;

fn main() -> car2::Result<()> {
    let params = ModelParams::new(-3.0, -2.0, 1.0, 0.0, 0.0)?;
    for norm in [Normalization::DeterministicRate, Normalization::Nlrr] {
        let mut cfg = ExperimentConfig::new(params, vec![50.0, 200.0], 1000);
        cfg.normalization = norm;
        let report = run_experiment(&cfg)?;
        for h in &report.horizons {
            let ks = |c: &Option<car2::montecarlo::CoordSummary>| c.as_ref().and_then(|c| c.ks).unwrap_or(f64::NAN);
            println!("{norm:?} T = {:>5}: KS {:.4} / {:.4}", h.horizon, ks(&h.r1), ks(&h.r2));
        }
    }
    Ok(())
}
