//! Builds the feature table for a simulated market and reports how many
//! values each numeric column is missing.
//!
//! `cargo run --example featurize -- [seed]`

use demand_bench::features::{build_feature_table, FeatureConfig};
use demand_bench::market::{simulate_panel, MarketConfig};

fn main() -> demand_bench::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(0, |s| s.parse().expect("seed"));
    let (catalog, panel) = simulate_panel(&MarketConfig {
        seed,
        ..MarketConfig::default()
    })?;
    let table = build_feature_table(
        &panel,
        None,
        Some(&catalog.observed()),
        &FeatureConfig::default(),
    )?;
    println!(
        "{} rows, {} numeric columns",
        table.rows.len(),
        table.numeric_names.len()
    );
    for (k, name) in table.numeric_names.iter().enumerate() {
        let absent = table.rows.iter().filter(|r| r.numeric[k].is_none()).count();
        println!("{name:<32} absent {absent}");
    }
    Ok(())
}
