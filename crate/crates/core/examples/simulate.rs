//! Simulates a desk-scale market and prints daily totals and the true
//! elasticity of each product at its mean price.
//!
//! `cargo run --example simulate -- [epsilon] [seed]`

use demand_bench::market::{simulate_panel, true_point_elasticity, MarketConfig};

fn main() -> demand_bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let epsilon = args.next().map_or(Ok(0.1), |s| s.parse()).expect("epsilon");
    let seed = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");
    let cfg = MarketConfig {
        epsilon,
        seed,
        ..MarketConfig::default()
    };
    let (catalog, panel) = simulate_panel(&cfg)?;
    println!(
        "{} products x {} days, {} consumers per day, {} rows",
        cfg.n_products,
        cfg.n_days,
        cfg.n_consumers,
        panel.len()
    );

    let mean_prices = panel.mean_prices();
    let prices: Vec<f64> = mean_prices.values().copied().collect();
    let truth = true_point_elasticity(&catalog, &prices)?;
    println!("product  mean price  elasticity");
    for ((id, p), e) in mean_prices.iter().zip(&truth) {
        println!("{id:>7}  {p:>10.3}  {e:>10.3}");
    }
    Ok(())
}
