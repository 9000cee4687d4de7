//! Two relays with routing against one relay, at lambda = 0.3.

use jsrq::measures::single_server_comparison;

fn main() -> jsrq::Result<()> {
    let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let cmp = single_server_comparison(0.3, &grid)?;
    println!("two relays stable for a in ({:.4}, {:.4})", cmp.interval.0, cmp.interval.1);
    println!("{:>5} {:>12} {:>12}", "a", "single", "two relays");
    let show = |v: Option<f64>| v.map_or("unstable".to_string(), |x| format!("{x:.6}"));
    for r in &cmp.rows {
        println!("{:>5.2} {:>12} {:>12}", r.a, show(r.single_mean), show(r.jsrq_mean));
    }
    Ok(())
}
