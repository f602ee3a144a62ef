//! Trains the structural network on a simulated desk-scale market and
//! compares per-product elasticities with the ground truth.
//!
//! `cargo run --release --example fit_structural -- [epsilon] [seed]`

use demand_bench::features::{build_feature_table, FeatureConfig};
use demand_bench::market::{simulate_panel, true_point_elasticity, MarketConfig};
use demand_bench::ml::{train, TrainConfig};

fn main() -> demand_bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let epsilon = args.next().map_or(Ok(0.1), |s| s.parse()).expect("epsilon");
    let seed = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");

    let market = MarketConfig {
        epsilon,
        seed,
        ..MarketConfig::default()
    };
    let (catalog, panel) = simulate_panel(&market)?;
    let table = build_feature_table(
        &panel,
        None,
        Some(&catalog.observed()),
        &FeatureConfig::default(),
    )?;

    let started = std::time::Instant::now();
    let model = train(
        &panel,
        &table,
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
    )?;
    println!("trained in {:.1}s", started.elapsed().as_secs_f64());
    for e in &model.history.epochs {
        println!(
            "epoch {}  train {:.5}  val {:.5}",
            e.epoch,
            e.train_loss,
            e.val_loss.unwrap_or(f64::NAN)
        );
    }

    let mean_prices: Vec<f64> = panel.mean_prices().into_values().collect();
    let truth = true_point_elasticity(&catalog, &mean_prices)?;
    let estimates = model.product_elasticities(&table)?;
    let mut se = 0.0;
    println!("product  true      estimate");
    for (j, (product, est)) in estimates.iter().enumerate() {
        println!("{product:>7}  {:>8.3}  {est:>8.3}", truth[j]);
        se += (est - truth[j]).powi(2);
    }
    println!("MSE {:.4}", se / truth.len() as f64);
    Ok(())
}
