//! Explosive oscillation: the estimation error after the random matrix
//! normalization is Gaussian with a covariance that depends on the phase.

use car2::limit::phase_at;
use car2::montecarlo::{matrix_limit_cov, run_experiment, ExperimentConfig, Normalization};
use car2::ModelParams;

fn main() -> car2::Result<()> {
    let (lambda, nu) = (0.5, std::f64::consts::PI);
    let params = ModelParams::new(2.0 * lambda, -(lambda * lambda + nu * nu), 1.0, 0.0, 0.0)?;
    let horizon = 16.6;
    let roots = params.roots();
    let cov = matrix_limit_cov(&roots, 1.0, phase_at(&roots, horizon));
    println!("limit covariance: [[{:.4}, {:.4}], [{:.4}, {:.4}]]", cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);

    let mut cfg = ExperimentConfig::new(params, vec![horizon], 500);
    cfg.n_steps_per_unit_time = 1000;
    cfg.normalization = Normalization::MatrixAT;
    let report = run_experiment(&cfg)?;
    let h = &report.horizons[0];
    let z: Vec<[f64; 2]> = h.residuals().map(|(_, r)| r).collect();
    let n = z.len() as f64;
    let c = |i: usize, j: usize| z.iter().map(|r| r[i] * r[j]).sum::<f64>() / n;
    println!("sample second moments: [[{:.4}, {:.4}], [{:.4}, {:.4}]]", c(0, 0), c(0, 1), c(1, 0), c(1, 1));
    let ks = |s: &Option<car2::montecarlo::CoordSummary>| s.as_ref().and_then(|s| s.ks).unwrap_or(f64::NAN);
    println!("KS {:.4} / {:.4}", ks(&h.r1), ks(&h.r2));
    Ok(())
}
