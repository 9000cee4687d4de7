//! Tail ratios of the distribution approach rho^2.

use jsrq::compensation::{self, CompensationConfig};
use jsrq::measures::decay_diagnostics;
use jsrq::ModelParams;

fn main() -> jsrq::Result<()> {
    let p = ModelParams::from_rho(0.4, 0.5)?;
    let config = CompensationConfig {
        min_truncation: 40,
        ..Default::default()
    };
    let sol = compensation::solve(&p, &config)?;
    let d = decay_diagnostics(&sol.grid, &p)?;
    println!("target rho^2 = {:.6}, read at k = {}", d.target, d.edge);
    for l in 0..=3 {
        let r = &d.fixed_l[l].1;
        println!("l={l}: k=0 {:.6}  k=5 {:.6}  edge {:.6}", r[0], r[5], d.fixed_l_at_edge(l));
    }
    println!("min marginal: edge {:.6}", d.marginal_at_edge());
    Ok(())
}
