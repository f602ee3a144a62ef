use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::SalesPanel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub variable: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub p10: f64,
    pub p90: f64,
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = mean(values);
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean shifted by the first value, exact for constant input.
fn mean(values: &[f64]) -> f64 {
    let shift = values[0];
    shift + values.iter().map(|v| v - shift).sum::<f64>() / values.len() as f64
}

fn summarize(variable: &str, mut values: Vec<f64>) -> StatRow {
    let mean = mean(&values);
    let std = sample_std(&values);
    values.sort_by(f64::total_cmp);
    StatRow {
        variable: variable.to_string(),
        mean,
        std,
        p10: percentile(&values, 0.1),
        p90: percentile(&values, 0.9),
    }
}

/// Summaries across products of each product's mean log price, price
/// coefficient of variation and mean `ln(1 + sales)`.
pub fn descriptive_stats(panel: &SalesPanel) -> Result<Vec<StatRow>> {
    if panel.is_empty() {
        return Err(Error::EmptyInput("panel"));
    }
    let mut log_price = Vec::new();
    let mut cv = Vec::new();
    let mut log_sales = Vec::new();
    for rows in panel.by_product().values() {
        let prices: Vec<f64> = rows.iter().map(|r| r.price).collect();
        log_price.push(mean(&prices.iter().map(|p| p.ln()).collect::<Vec<_>>()));
        cv.push(sample_std(&prices) / mean(&prices));
        log_sales.push(mean(
            &rows.iter().map(|r| r.sales.ln_1p()).collect::<Vec<_>>(),
        ));
    }
    Ok(vec![
        summarize("log_price", log_price),
        summarize("price_cv", cv),
        summarize("log_sales", log_sales),
    ])
}

/// `variable,mean,std,p10,p90`
pub fn write_stats_csv<W: Write>(stats: &[StatRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variable", "mean", "std", "p10", "p90"])?;
    for s in stats {
        w.write_record([
            s.variable.clone(),
            s.mean.to_string(),
            s.std.to_string(),
            s.p10.to_string(),
            s.p90.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
