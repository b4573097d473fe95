//! Drift and noise estimates from one ergodic path, with the likelihood ratio
//! at the truth and at the estimate.

use car2::estimate::{estimate_sigma, log_likelihood_ratio, mle, SufficientStats};
use car2::simulate::{simulate, SimConfig};
use car2::ModelParams;
use nalgebra::Vector2;

fn main() -> car2::Result<()> {
    let params = ModelParams::new(-3.0, -2.0, 1.0, 0.0, 0.0)?;
    let path = simulate(&params, &SimConfig::new(200.0, 20_000).with_seed(1, 0))?;
    let stats = SufficientStats::from_path(&path)?;
    let est = mle(&stats)?;
    println!("theta1_hat = {:+.4}  (true -3)", est.theta1_hat);
    println!("theta2_hat = {:+.4}  (true -2)", est.theta2_hat);
    println!("sigma_hat  = {:.4}", estimate_sigma(&path)?);
    println!("D / (SXX SVV) = {:.3}", est.cond_flag);

    let truth = Vector2::new(-2.0, -3.0);
    let at_mle = Vector2::new(est.theta2_hat, est.theta1_hat);
    println!("log LR, estimate vs truth: {:.4}", log_likelihood_ratio(&stats, truth, at_mle)?);
    Ok(())
}
