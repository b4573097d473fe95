//! Simulates an oscillating path with the exact scheme, writes it as CSV and
//! compares the endpoint spread with the closed-form covariance.

use car2::io::{path_csv, write_atomic};
use car2::simulate::{simulate, state_moments, SimConfig};
use car2::ModelParams;

fn main() -> car2::Result<()> {
    let params = ModelParams::new(-0.4, -4.0, 0.5, 1.0, 0.0)?;
    let path = simulate(&params, &SimConfig::new(10.0, 1000).with_seed(42, 0))?;
    let out = std::env::temp_dir().join("car2_example_path.csv");
    write_atomic(&out, &path_csv(&path)?)?;
    println!("{} ({} rows)", out.display(), path.x.len());

    let n = 20_000;
    let (mut sx, mut sxx) = (0.0, 0.0);
    for rep in 0..n {
        let p = simulate(&params, &SimConfig::new(10.0, 100).with_seed(7, rep))?;
        let x = p.x[100];
        sx += x;
        sxx += x * x;
    }
    let mean = sx / n as f64;
    let var = sxx / n as f64 - mean * mean;
    let (m, c) = state_moments(&params, 10.0)?;
    println!("X(10): mean {mean:.4} (exact {:.4}), variance {var:.4} (exact {:.4})", m[0], c[(0, 0)]);
    Ok(())
}
