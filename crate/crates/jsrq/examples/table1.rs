//! Sojourn time and queue correlation at a = 1/2 by both series methods.

use jsrq::compensation::{self, CompensationConfig};
use jsrq::measures::moments_from_transformed;
use jsrq::psa::{self, PsaConfig};
use jsrq::{Error, ModelParams};

fn main() -> jsrq::Result<()> {
    println!("{:>5} {:>10} {:>8} {:>12} {:>8}", "rho", "E[S] ca", "R ca", "E[S] psa", "R psa");
    for rho in [0.1, 0.4, 0.7, 0.9, 0.95] {
        let p = ModelParams::from_rho(rho, 0.5)?;
        let ca = compensation::solve(&p, &CompensationConfig::default())?;
        let m = moments_from_transformed(&ca.grid, &p)?;
        let (es, r) = match psa::solve(&p, &PsaConfig::default()) {
            Ok(s) => {
                let q = moments_from_transformed(&s.grid, &p)?;
                (format!("{:.3}", q.sojourn), format!("{:.3}", q.correlation()?))
            }
            Err(Error::Diverged { .. }) => ("diverged".into(), "-".into()),
            Err(e) => return Err(e),
        };
        println!("{rho:>5} {:>10.3} {:>8.3} {es:>12} {r:>8}", m.sojourn, m.correlation()?);
    }
    Ok(())
}
