//! Stability verdicts and the stable range of the transmission probability.

use jsrq::measures::stability_interval;
use jsrq::model::{is_stable, load};
use jsrq::ModelParams;

fn main() -> jsrq::Result<()> {
    for (lambda, a) in [(0.3, 0.5), (0.5, 0.5), (0.3, 0.15), (0.1, 0.9)] {
        let p = ModelParams::new(lambda, a)?;
        let s = is_stable(&p);
        println!(
            "lambda={lambda} a={a}: load {:.4}, margin {:+.4}, {}",
            load(&p),
            s.margin,
            if s.stable { "stable" } else { "unstable" }
        );
    }
    let (lo, hi) = stability_interval(0.3)?;
    println!("lambda=0.3 is stable for a in ({lo:.6}, {hi:.6})");
    Ok(())
}
