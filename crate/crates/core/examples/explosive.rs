//! Two distinct positive roots: the normalized error has a Cauchy-type
//! limit and the two coordinates are tied together through the larger root.

use car2::montecarlo::{quantile, run_experiment, ExperimentConfig};
use car2::ModelParams;

fn main() -> car2::Result<()> {
    let (p, q) = (2.0, 0.5);
    let params = ModelParams::new(p + q, -p * q, 1.0, 0.0, 0.0)?;
    let mut cfg = ExperimentConfig::new(params, vec![12.0], 1000);
    cfg.n_steps_per_unit_time = 1000;
    let report = run_experiment(&cfg)?;
    let h = &report.horizons[0];
    let mut sim = h.coordinate(0);
    sim.sort_by(f64::total_cmp);
    let mut refr = h.reference.clone().expect("limit sampler")[0].clone();
    refr.sort_by(f64::total_cmp);
    for level in [0.1, 0.25, 0.5, 0.75, 0.9] {
        println!("q{:<4} simulated {:+8.3}  limit {:+8.3}", level, quantile(&sim, level), quantile(&refr, level));
    }
    let ratio: Vec<f64> = h.residuals().map(|(_, r)| r[1] / r[0]).collect();
    let mut ratio = ratio;
    ratio.sort_by(f64::total_cmp);
    println!("median r2 / r1 = {:.4} (larger root {p})", quantile(&ratio, 0.5));
    Ok(())
}
