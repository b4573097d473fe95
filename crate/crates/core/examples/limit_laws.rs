//! Quantiles of the first limit coordinate in every regime.

use car2::limit::{phase_at, sample_limit, LimitConfig};
use car2::montecarlo::quantile;
use car2::{ModelParams, Regime};

fn main() -> car2::Result<()> {
    println!("{:<20} {:>9} {:>9} {:>9}", "regime", "q10", "median", "q90");
    for regime in Regime::ALL {
        let (t1, t2) = regime.reference_drift();
        let params = ModelParams::new(t1, t2, 1.0, 0.0, 0.0)?;
        let roots = params.roots();
        let mut cfg = LimitConfig::new(4000, 2000, 7);
        cfg.phase = phase_at(&roots, 10.0);
        let draws = sample_limit(regime, &roots, &params, &cfg)?;
        let mut l1: Vec<f64> = draws.iter().map(|d| d.l1).collect();
        l1.sort_by(f64::total_cmp);
        let q = |p| quantile(&l1, p);
        println!("{:<20} {:>9.3} {:>9.3} {:>9.3}", regime.name(), q(0.1), q(0.5), q(0.9));
    }
    Ok(())
}
