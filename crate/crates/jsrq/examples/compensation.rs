//! Equilibrium distribution as a sum of product forms.

use jsrq::compensation::{self, CompensationConfig};
use jsrq::measures::moments_from_transformed;
use jsrq::model::balance_residuals;
use jsrq::ModelParams;

fn main() -> jsrq::Result<()> {
    let p = ModelParams::from_rho(0.7, 0.3)?;
    let sol = compensation::solve(&p, &CompensationConfig::default())?;
    println!(
        "T = {}, inner box {}, series order {}, last change {:.1e}",
        sol.truncation,
        sol.inner,
        sol.series.order(),
        sol.last_change
    );
    for (i, r) in sol.series.root_pairs().iter().take(6).enumerate() {
        println!("  pair {i}: gamma {:.6e}  delta {:.6e}", r.gamma, r.delta);
    }
    println!("pi(0,0) = {:.10}", sol.grid.get(0, 0));
    println!("pi(5,2) = {:.6e}", sol.grid.get(5, 2));
    let m = moments_from_transformed(&sol.grid, &p)?;
    println!("E[Q1+Q2] = {:.8}  E[S] = {:.8}  R = {:.8}", m.mean_total, m.sojourn, m.correlation()?);
    println!("max balance residual {:.1e}", balance_residuals(&sol.grid, &p)?.max());
    Ok(())
}
