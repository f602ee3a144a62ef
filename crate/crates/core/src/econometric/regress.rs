use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::ols::{lemma_variance, ols_fit, LemmaVariance, OlsFit};
use crate::error::{Error, Result};
use crate::market::SalesPanel;

/// Column of `ln p` in every design.
pub const PRICE_COLUMN: usize = 1;

/// Regression inputs for one product.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDesign {
    pub product_id: u32,
    pub days: Vec<u32>,
    /// `[1, ln p_jt, z_0, ..., z_degree]`.
    pub x: DMatrix<f64>,
    /// `ln q`, or `ln(q + 1)` when the product has zero-sale days.
    pub y: DVector<f64>,
    pub log1p_response: bool,
}

/// Cross-price regressors `z_k(j, t) = sum_{i != j} d_ji^k p_it`, one design
/// per product in ascending product id. `distances` is indexed in that order.
pub fn build_regressors(
    panel: &SalesPanel,
    distances: &DMatrix<f64>,
    degree: usize,
) -> Result<Vec<Result<ProductDesign>>> {
    let products = panel.product_ids();
    let n = products.len();
    if distances.shape() != (n, n) {
        return Err(Error::dims("distance matrix rows", n, distances.nrows()));
    }
    let index: BTreeMap<u32, usize> = products.iter().enumerate().map(|(i, p)| (*p, i)).collect();

    // day -> price of every product
    let mut prices: BTreeMap<u32, Vec<Option<f64>>> = BTreeMap::new();
    for r in &panel.rows {
        prices.entry(r.day).or_insert_with(|| vec![None; n])[index[&r.product_id]] = Some(r.price);
    }
    let mut day_prices: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (day, row) in prices {
        let full: Option<Vec<f64>> = row.into_iter().collect();
        let full = full.ok_or_else(|| {
            Error::UnbalancedPanel(format!("day {day} lacks a price for some product"))
        })?;
        day_prices.insert(day, full);
    }

    let by_product = panel.by_product();
    Ok(products
        .iter()
        .enumerate()
        .map(|(j, product)| {
            let rows = &by_product[product];
            if rows.iter().all(|r| r.sales == 0.0) {
                return Err(Error::DegenerateVariance(format!(
                    "product {product} never sells"
                )));
            }
            let log1p = rows.iter().any(|r| r.sales == 0.0);
            let cols = degree + 3;
            let mut x = DMatrix::zeros(rows.len(), cols);
            for (t, r) in rows.iter().enumerate() {
                let p = &day_prices[&r.day];
                x[(t, 0)] = 1.0;
                x[(t, PRICE_COLUMN)] = r.price.ln();
                for k in 0..=degree {
                    x[(t, 2 + k)] = (0..n)
                        .filter(|&i| i != j)
                        .map(|i| distances[(j, i)].powi(k as i32) * p[i])
                        .sum();
                }
            }
            let y = DVector::from_iterator(
                rows.len(),
                rows.iter().map(|r| {
                    if log1p {
                        (r.sales + 1.0).ln()
                    } else {
                        r.sales.ln()
                    }
                }),
            );
            Ok(ProductDesign {
                product_id: *product,
                days: rows.iter().map(|r| r.day).collect(),
                x,
                y,
                log1p_response: log1p,
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductEstimate {
    pub product_id: u32,
    /// Log-log price coefficient, directly an elasticity.
    pub beta_hat: f64,
    pub std_error: f64,
    pub lemma: LemmaVariance,
    pub fit: OlsFit,
    pub log1p_response: bool,
}

impl ProductEstimate {
    pub fn n_obs(&self) -> usize {
        self.fit.n_obs
    }
}

/// Per-product log-log regressions. Failures are returned per product.
pub fn estimate_all(
    panel: &SalesPanel,
    distances: &DMatrix<f64>,
    degree: usize,
) -> Result<Vec<(u32, Result<ProductEstimate>)>> {
    let designs = build_regressors(panel, distances, degree)?;
    let products = panel.product_ids();
    Ok(designs
        .into_par_iter()
        .zip(products)
        .map(|(design, product)| (product, design.and_then(|d| estimate_one(&d))))
        .collect())
}

fn estimate_one(d: &ProductDesign) -> Result<ProductEstimate> {
    if d.x.nrows() < d.x.ncols() + 1 {
        return Err(Error::dims("days of data", d.x.ncols() + 1, d.x.nrows()));
    }
    let price = d.x.column(PRICE_COLUMN);
    if price.iter().all(|v| *v == price[0]) {
        return Err(Error::DegenerateVariance(format!(
            "product {} has a constant price",
            d.product_id
        )));
    }
    let fit = ols_fit(&d.x, &d.y)?;
    let lemma = lemma_variance(&d.x, &d.y, PRICE_COLUMN)?;
    Ok(ProductEstimate {
        product_id: d.product_id,
        beta_hat: fit.coefficients[PRICE_COLUMN],
        std_error: fit.std_error(PRICE_COLUMN),
        lemma,
        fit,
        log1p_response: d.log1p_response,
    })
}

/// `product_id,beta_hat,se,r2_price,var_lemma,n_obs`; failed products keep
/// their id with empty value fields.
pub fn write_estimates_csv<W: Write>(
    estimates: &[(u32, Result<ProductEstimate>)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "product_id",
        "beta_hat",
        "se",
        "r2_price",
        "var_lemma",
        "n_obs",
    ])?;
    for (product, est) in estimates {
        let fields = match est {
            Ok(e) => [
                product.to_string(),
                e.beta_hat.to_string(),
                e.std_error.to_string(),
                e.lemma.r_squared_price.to_string(),
                e.lemma.var_beta.to_string(),
                e.n_obs().to_string(),
            ],
            Err(_) => [
                product.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::PanelRow;

    fn panel(prices: &[[f64; 3]], sales: f64) -> SalesPanel {
        let mut rows = Vec::new();
        for (day, ps) in prices.iter().enumerate() {
            for (j, &p) in ps.iter().enumerate() {
                rows.push(PanelRow {
                    product_id: j as u32,
                    day: day as u32,
                    price: p,
                    sales: sales + j as f64,
                    availability: 1.0,
                    competitor_price: None,
                });
            }
        }
        SalesPanel::new(rows).unwrap()
    }

    #[test]
    fn hand_cross_price_terms() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        let p = panel(&[[5.0, 1.0, 1.0]], 3.0);
        let designs = build_regressors(&p, &d, 1).unwrap();
        let x = &designs[0].as_ref().unwrap().x;
        assert_eq!(x.ncols(), 4);
        assert_eq!(x[(0, 2)], 2.0);
        assert_eq!(x[(0, 3)], 3.0);
        assert_eq!(x[(0, 1)], 5f64.ln());

        let designs = build_regressors(&p, &d, 0).unwrap();
        let x1 = &designs[1].as_ref().unwrap().x;
        assert_eq!(x1.ncols(), 3);
        assert_eq!(x1[(0, 2)], 6.0);
    }

    #[test]
    fn zero_sales_use_log1p_and_all_zero_fails() {
        let mut p = panel(&[[1.0, 1.0, 1.0], [1.1, 1.0, 0.9]], 0.0);
        p.rows[4].sales = 0.0;
        let d = DMatrix::from_element(3, 3, 1.0);
        let designs = build_regressors(&p, &d, 1).unwrap();
        assert!(designs[0].is_err());
        let second = designs[1].as_ref().unwrap();
        assert!(second.log1p_response);
        assert_eq!(second.y[0], 2f64.ln());
        assert_eq!(second.y[1], 0.0);
        let third = designs[2].as_ref().unwrap();
        assert!(!third.log1p_response);
    }

    #[test]
    fn unbalanced_panel_is_rejected() {
        let mut p = panel(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]], 2.0);
        p.rows.remove(4);
        let d = DMatrix::zeros(3, 3);
        assert!(matches!(
            build_regressors(&p, &d, 1),
            Err(Error::UnbalancedPanel(_))
        ));
    }

    #[test]
    fn constant_price_product_is_skipped() {
        let days: Vec<[f64; 3]> = (0..30)
            .map(|t| {
                [
                    2.0,
                    1.0 + 0.01 * (t % 5) as f64,
                    1.0 + 0.02 * (t % 3) as f64,
                ]
            })
            .collect();
        let mut p = panel(&days, 5.0);
        for (i, r) in p.rows.iter_mut().enumerate() {
            r.sales += (i % 7) as f64;
        }
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        // degree 0: with a constant rival price, higher powers are collinear
        let est = estimate_all(&p, &d, 0).unwrap();
        assert!(matches!(est[0].1, Err(Error::DegenerateVariance(_))));
        assert!(est[1].1.is_ok());
        let mut buf = Vec::new();
        write_estimates_csv(&est, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("0,,"));
    }
}
