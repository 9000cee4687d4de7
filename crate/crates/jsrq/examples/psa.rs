//! Power-series solution at a = 1/2, including where it breaks down.

use jsrq::measures::moments_from_transformed;
use jsrq::psa::{self, PsaConfig};
use jsrq::{Error, ModelParams};

fn main() -> jsrq::Result<()> {
    for rho in [0.1, 0.4, 0.7, 0.9] {
        let p = ModelParams::from_rho(rho, 0.5)?;
        match psa::solve(&p, &PsaConfig::default()) {
            Ok(s) => {
                let m = moments_from_transformed(&s.grid, &p)?;
                println!(
                    "rho={rho}: N={} T={} change {:.1e}{}  E[S]={:.6} R={:.6}",
                    s.order,
                    s.truncation,
                    s.last_change,
                    if s.precision_limited { " (round-off floor)" } else { "" },
                    m.sojourn,
                    m.correlation()?
                );
            }
            Err(Error::Diverged { iterations, last_change, .. }) => {
                println!("rho={rho}: diverged at N={iterations}, change {last_change:.1e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
