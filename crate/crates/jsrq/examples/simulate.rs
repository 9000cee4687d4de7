//! Monte Carlo check against the exact mean.

use jsrq::measures::moments_from_transformed;
use jsrq::simulator::{self, SimConfig};
use jsrq::{oracle, ModelParams};

fn main() -> jsrq::Result<()> {
    let p = ModelParams::new(0.3, 0.5)?;
    let r = simulator::simulate(&p, &SimConfig::default())?;
    let exact = moments_from_transformed(&oracle::solve(&p, 1e-12)?, &p)?.mean_total;
    println!(
        "E[Q1+Q2] = {:.5} +- {:.5} over {} replications (exact {exact:.5})",
        r.mean_total.mean, r.mean_total.half_width, r.replications
    );
    if let Some(c) = r.correlation {
        println!("R = {:.4} +- {:.4}", c.mean, c.half_width);
    }
    let b = simulator::estimate_stability_boundary(0.5, &Default::default())?;
    println!("empirical stability boundary at a=0.5: lambda ~ {b:.4} (theory 0.5)");
    Ok(())
}
