//! Descriptive statistics of a simulated panel across products.
//!
//! `cargo run --example stats -- [epsilon]`

use demand_bench::harness::descriptive_stats;
use demand_bench::market::{simulate_panel, MarketConfig};

fn main() -> demand_bench::Result<()> {
    let epsilon = std::env::args()
        .nth(1)
        .map_or(0.1, |s| s.parse().expect("epsilon"));
    let (_, panel) = simulate_panel(&MarketConfig {
        epsilon,
        ..MarketConfig::default()
    })?;
    println!("variable      mean      std       p10       p90");
    for s in descriptive_stats(&panel)? {
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.variable, s.mean, s.std, s.p10, s.p90
        );
    }
    Ok(())
}
