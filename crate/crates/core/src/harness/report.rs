use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CellOutcome, Method};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub epsilon: f64,
    pub seed: u64,
    pub method: Method,
    pub product_id: u32,
    /// `None` when the estimator failed for this product.
    pub estimate: Option<f64>,
    pub truth: f64,
    pub sq_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub epsilon: f64,
    pub seed: u64,
    pub method: Option<Method>,
    pub product_id: Option<u32>,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub epsilon: f64,
    pub method: Method,
    /// Products with an estimate, pooled over seeds.
    pub n: usize,
    /// Mean squared error pooled over seeds and products.
    pub mse: f64,
    /// Median over seeds of the per-seed MSE.
    pub median_seed_mse: f64,
    pub negative_share: f64,
}

/// Histogram masses over bin edges shared by every method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub edges: Vec<f64>,
    pub masses: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<MethodSummary>,
    /// One histogram per epsilon.
    pub densities: Vec<(f64, Density)>,
    pub failures: Vec<CellFailure>,
}

/// Share of strictly negative values; 0 for an empty slice.
pub fn sign_share(estimates: &[f64]) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    estimates.iter().filter(|e| **e < 0.0).count() as f64 / estimates.len() as f64
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Equal-width histogram on edges spanning every method's estimates. A
/// single distinct value gets one unit-width bin.
pub fn density_export(estimates: &[(String, Vec<f64>)], bins: usize) -> Density {
    let all = estimates.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi, bins) = if !lo.is_finite() {
        (0.0, 1.0, 1)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5, 1)
    } else {
        (lo, hi, bins.max(1))
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + width * k as f64).collect();
    edges.push(hi);
    let masses = estimates
        .iter()
        .map(|(name, values)| {
            let mut counts = vec![0usize; bins];
            for &v in values {
                let k = (((v - lo) / width).floor() as usize).min(bins - 1);
                counts[k] += 1;
            }
            let total = values.len().max(1) as f64;
            (
                name.clone(),
                counts.into_iter().map(|c| c as f64 / total).collect(),
            )
        })
        .collect();
    Density { edges, masses }
}

impl ComparisonReport {
    /// Aggregates cells in the order given.
    pub fn from_cells(cells: Vec<CellOutcome>, density_bins: usize) -> Self {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for cell in cells {
            rows.extend(cell.rows);
            failures.extend(cell.failures);
        }
        let (summaries, densities) = aggregate(&rows, density_bins);
        Self {
            rows,
            summaries,
            densities,
            failures,
        }
    }

    pub fn summary(&self, epsilon: f64, method: Method) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.epsilon == epsilon && s.method == method)
    }

    /// `epsilon,seed,method,product_id,estimate,truth,sq_err`
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epsilon",
            "seed",
            "method",
            "product_id",
            "estimate",
            "truth",
            "sq_err",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.epsilon.to_string(),
                r.seed.to_string(),
                r.method.name().to_string(),
                r.product_id.to_string(),
                opt(r.estimate),
                r.truth.to_string(),
                opt(r.sq_err),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `epsilon,method,n,mse,median_seed_mse,negative_share`
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epsilon",
            "method",
            "n",
            "mse",
            "median_seed_mse",
            "negative_share",
        ])?;
        for s in &self.summaries {
            w.write_record([
                s.epsilon.to_string(),
                s.method.name().to_string(),
                s.n.to_string(),
                s.mse.to_string(),
                s.median_seed_mse.to_string(),
                s.negative_share.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `epsilon,method,bin,lower,upper,mass`
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "method", "bin", "lower", "upper", "mass"])?;
        for (epsilon, d) in &self.densities {
            for (method, masses) in &d.masses {
                for (k, m) in masses.iter().enumerate() {
                    w.write_record([
                        epsilon.to_string(),
                        method.clone(),
                        k.to_string(),
                        d.edges[k].to_string(),
                        d.edges[k + 1].to_string(),
                        m.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `epsilon,seed,method,product_id,kind,message`
    pub fn write_failures_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "seed", "method", "product_id", "kind", "message"])?;
        for f in &self.failures {
            w.write_record([
                f.epsilon.to_string(),
                f.seed.to_string(),
                f.method.map(Method::name).unwrap_or_default().to_string(),
                f.product_id.map(|p| p.to_string()).unwrap_or_default(),
                f.kind.clone(),
                f.message.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Epsilon values in first-seen order.
fn epsilons(rows: &[ReportRow]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for r in rows {
        if !out.contains(&r.epsilon) {
            out.push(r.epsilon);
        }
    }
    out
}

fn aggregate(rows: &[ReportRow], bins: usize) -> (Vec<MethodSummary>, Vec<(f64, Density)>) {
    let mut summaries = Vec::new();
    let mut densities = Vec::new();
    for epsilon in epsilons(rows) {
        let mut per_method = Vec::new();
        for method in Method::ALL {
            let cell: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.epsilon == epsilon && r.method == method && r.estimate.is_some())
                .collect();
            if cell.is_empty() {
                continue;
            }
            let estimates: Vec<f64> = cell.iter().filter_map(|r| r.estimate).collect();
            let sq: Vec<f64> = cell.iter().filter_map(|r| r.sq_err).collect();
            let mut by_seed: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
            for r in &cell {
                let e = by_seed.entry(r.seed).or_default();
                e.0 += r.sq_err.unwrap_or(0.0);
                e.1 += 1;
            }
            let mut seed_mse: Vec<f64> = by_seed.values().map(|(s, n)| s / *n as f64).collect();
            summaries.push(MethodSummary {
                epsilon,
                method,
                n: cell.len(),
                mse: sq.iter().sum::<f64>() / sq.len() as f64,
                median_seed_mse: median(&mut seed_mse),
                negative_share: sign_share(&estimates),
            });
            per_method.push((method.name().to_string(), estimates));
        }
        if !per_method.is_empty() {
            densities.push((epsilon, density_export(&per_method, bins)));
        }
    }
    (summaries, densities)
}
