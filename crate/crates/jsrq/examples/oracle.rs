//! Brute-force reference: truncated chain solved by GTH reduction.

use jsrq::oracle::{self, Variant};
use jsrq::ModelParams;

fn main() -> jsrq::Result<()> {
    let p = ModelParams::new(0.3, 0.5)?;
    let t = oracle::choose_truncation(&p, 1e-12)?;
    let tr = oracle::stationary(&oracle::build(&p, t, Variant::Transformed)?)?;
    let orig = oracle::stationary(&oracle::build(&p, t, Variant::Original)?)?;
    println!("T = {t}");
    println!("pi(0,0) transformed {:.12}  original {:.12}", tr.get(0, 0), orig.get(0, 0));
    // Both chains describe the same process.
    println!("max gap after mapping {:.1e}", tr.max_abs_diff(&orig.to_transformed()));
    Ok(())
}
