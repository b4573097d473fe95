//! Characteristic roots, regime and deterministic rates for one drift per regime.

use car2::regime::regime_info;
use car2::Regime;

fn main() -> car2::Result<()> {
    println!("{:<20} {:>6} {:>6}  {:<34} {:<16} {:<14}", "regime", "theta1", "theta2", "roots", "rate theta1", "rate theta2");
    for regime in Regime::ALL {
        let (t1, t2) = regime.reference_drift();
        let info = regime_info(t1, t2)?;
        let roots = format!("({:.3}{:+.3}i, {:.3}{:+.3}i)", info.p[0], info.p[1], info.q[0], info.q[1]);
        println!("{:<20} {t1:>6} {t2:>6}  {roots:<34} {:<16} {:<14}", info.regime.name(), info.v1_expr, info.v2_expr);
    }
    Ok(())
}
