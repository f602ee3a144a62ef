use std::io::{Read, Write};

use serde::Deserialize;

use super::{PricingProblem, PricingSolution, ProductTerms};
use crate::error::{Error, Result};
use crate::ml::DemandTheta;

#[derive(Deserialize)]
struct ProblemRecord {
    product_id: u32,
    alpha: f64,
    beta: f64,
    cost: f64,
    margin_lb: f64,
    margin_ub: f64,
}

/// Reads `product_id,alpha,beta,cost,margin_lb,margin_ub`.
pub fn read_problem_csv<R: Read>(
    input: R,
    margin_target: Option<f64>,
    price_cap: Option<f64>,
) -> Result<PricingProblem> {
    let mut reader = csv::Reader::from_reader(input);
    let mut products = Vec::new();
    for (i, record) in reader.deserialize::<ProblemRecord>().enumerate() {
        let r = record.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        products.push(ProductTerms {
            product_id: r.product_id,
            theta: DemandTheta {
                alpha: r.alpha,
                beta: r.beta,
            },
            cost: r.cost,
            margin_lb: r.margin_lb,
            margin_ub: r.margin_ub,
        });
    }
    let problem = PricingProblem {
        products,
        margin_target,
        price_cap,
    };
    problem.validate()?;
    Ok(problem)
}

/// `product_id,price,demand,revenue,margin`, one row per product.
pub fn write_solution_csv<W: Write>(
    problem: &PricingProblem,
    solution: &PricingSolution,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["product_id", "price", "demand", "revenue", "margin"])?;
    for ((t, &p), m) in problem
        .products
        .iter()
        .zip(&solution.prices)
        .zip(&solution.product_margins)
    {
        let d = t.theta.demand(p).max(0.0);
        w.write_record([
            t.product_id.to_string(),
            p.to_string(),
            d.to_string(),
            (p * d).to_string(),
            m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_problem_and_rejects_bad_bounds() {
        let text = "product_id,alpha,beta,cost,margin_lb,margin_ub\n3,10,-1,2,0.1,0.8\n";
        let p = read_problem_csv(text.as_bytes(), Some(0.3), None).unwrap();
        assert_eq!(p.products[0].product_id, 3);
        assert_eq!(p.products[0].theta.beta, -1.0);
        let bad = "product_id,alpha,beta,cost,margin_lb,margin_ub\n3,10,-1,2,0.9,0.8\n";
        assert!(matches!(
            read_problem_csv(bad.as_bytes(), None, None),
            Err(Error::InvalidConfig(_))
        ));
        let short = "product_id,alpha,beta,cost,margin_lb,margin_ub\n3,10,-1\n";
        assert!(matches!(
            read_problem_csv(short.as_bytes(), None, None),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
