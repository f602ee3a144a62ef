//! Per-product log-log regressions with cross-price controls on a simulated
//! market, against the true elasticities.
//!
//! `cargo run --example fit_ols -- [epsilon] [seed]`

use demand_bench::econometric::{estimate_all, product_distances, DEFAULT_DEGREE, DEFAULT_RANK};
use demand_bench::market::{simulate_panel, true_point_elasticity, MarketConfig};

fn main() -> demand_bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let epsilon = args.next().map_or(Ok(0.1), |s| s.parse()).expect("epsilon");
    let seed = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");
    let (catalog, panel) = simulate_panel(&MarketConfig {
        epsilon,
        seed,
        ..MarketConfig::default()
    })?;
    let (_, distances) = product_distances(&catalog.observed().features, None, DEFAULT_RANK)?;
    let prices: Vec<f64> = panel.mean_prices().into_values().collect();
    let truth = true_point_elasticity(&catalog, &prices)?;

    println!("product  true      beta_hat  se      r2_price");
    for (j, (product, est)) in estimate_all(&panel, &distances, DEFAULT_DEGREE)?
        .iter()
        .enumerate()
    {
        match est {
            Ok(e) => println!(
                "{product:>7}  {:>8.3}  {:>8.3}  {:>6.3}  {:>8.3}",
                truth[j], e.beta_hat, e.std_error, e.lemma.r_squared_price
            ),
            Err(err) => println!("{product:>7}  {:>8.3}  skipped: {err}", truth[j]),
        }
    }
    Ok(())
}
