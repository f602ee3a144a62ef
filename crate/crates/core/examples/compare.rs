//! Runs the elasticity comparison over the default epsilon grid and seeds,
//! printing per-epsilon MSE and sign shares.
//!
//! `cargo run --release --example compare -- [n_seeds]`

use demand_bench::harness::{run_comparison, ExperimentSpec, Method};

fn main() -> demand_bench::Result<()> {
    let n_seeds: u64 = std::env::args()
        .nth(1)
        .map_or(5, |s| s.parse().expect("n_seeds"));
    let spec = ExperimentSpec {
        seeds: (0..n_seeds).collect(),
        ..ExperimentSpec::default()
    };
    let started = std::time::Instant::now();
    let report = run_comparison(&spec)?;
    println!(
        "{} cells in {:.1}s",
        spec.epsilons.len() * spec.seeds.len(),
        started.elapsed().as_secs_f64()
    );
    println!("epsilon  method  median-seed MSE  pooled MSE  negative share");
    for &eps in &spec.epsilons {
        for method in Method::ALL {
            if let Some(s) = report.summary(eps, method) {
                println!(
                    "{eps:<8} {:<7} {:>15.4} {:>11.4} {:>15.3}",
                    method.name(),
                    s.median_seed_mse,
                    s.mse,
                    s.negative_share
                );
            }
        }
    }
    if !report.failures.is_empty() {
        println!("{} failures recorded", report.failures.len());
    }
    Ok(())
}
