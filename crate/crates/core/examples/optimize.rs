//! Solves a three-product pricing problem under an overall margin target and
//! checks it against an exhaustive grid.
//!
//! `cargo run --release --example optimize -- [margin_target]`

use demand_bench::ml::DemandTheta;
use demand_bench::optimizer::{
    grid_oracle, optimize, PricingProblem, ProductTerms, DEFAULT_STARTS,
};

fn main() -> demand_bench::Result<()> {
    let target = std::env::args()
        .nth(1)
        .map_or(0.65, |s| s.parse().expect("margin_target"));
    let terms = [(20.0, -2.0, 2.0), (15.0, -1.0, 4.0), (30.0, -3.5, 1.5)];
    let problem = PricingProblem {
        products: terms
            .iter()
            .enumerate()
            .map(|(i, &(alpha, beta, cost))| ProductTerms {
                product_id: i as u32,
                theta: DemandTheta { alpha, beta },
                cost,
                margin_lb: 0.1,
                margin_ub: 0.8,
            })
            .collect(),
        margin_target: Some(target),
        price_cap: None,
    };
    let s = optimize(&problem, DEFAULT_STARTS, 0)?;
    println!("prices {:.4?}", s.prices);
    println!(
        "revenue {:.4}  overall margin {:.4}",
        s.revenue,
        s.overall_margin.unwrap_or(f64::NAN)
    );
    let grid = grid_oracle(&problem, 200)?;
    println!("grid revenue {:.4} at {:.4?}", grid.revenue, grid.prices);
    Ok(())
}
