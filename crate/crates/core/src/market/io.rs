//! CSV persistence for panels and catalogs.
//!
//! Panel header: `product_id,day,price,sales,availability,competitor_price`
//! (empty competitor field = absent). Catalog header:
//! `product_id,beta_true,f0..f{K-1}`. The truth sidecar
//! `feature,delta,significant` stays out of estimator inputs.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{ObservedCatalog, PanelRow, ProductCatalog, SalesPanel};
use crate::error::{Error, Result};

pub const PANEL_HEADER: [&str; 6] = [
    "product_id",
    "day",
    "price",
    "sales",
    "availability",
    "competitor_price",
];

pub fn write_panel_csv<W: Write>(panel: &SalesPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PANEL_HEADER)?;
    for r in &panel.rows {
        w.write_record([
            r.product_id.to_string(),
            r.day.to_string(),
            r.price.to_string(),
            r.sales.to_string(),
            r.availability.to_string(),
            r.competitor_price
                .map(|c| c.to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(input: R) -> Result<SalesPanel> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != PANEL_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("panel header must be `{}`", PANEL_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column {}", PANEL_HEADER[k]),
            })
        };
        let num = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {} `{raw}`", PANEL_HEADER[k]),
            })
        };
        let int = |k: usize| -> Result<u32> {
            let raw = field(k)?;
            raw.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {} `{raw}`", PANEL_HEADER[k]),
            })
        };
        let competitor = field(5)?.trim();
        rows.push(PanelRow {
            product_id: int(0)?,
            day: int(1)?,
            price: num(2)?,
            sales: num(3)?,
            availability: num(4)?,
            competitor_price: if competitor.is_empty() {
                None
            } else {
                Some(num(5)?)
            },
        });
    }
    SalesPanel::new(rows)
}

pub fn write_catalog_csv<W: Write>(catalog: &ProductCatalog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = catalog.n_features();
    let mut header = vec!["product_id".to_string(), "beta_true".to_string()];
    header.extend((0..k).map(|f| format!("f{f}")));
    w.write_record(&header)?;
    for j in 0..catalog.n_products() {
        let mut rec = vec![j.to_string(), catalog.beta()[j].to_string()];
        rec.extend(catalog.features_of(j).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a catalog CSV into the estimator view plus the `beta_true` column.
pub fn read_catalog_csv<R: Read>(input: R) -> Result<(ObservedCatalog, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("product_id") || header.get(1) != Some("beta_true") {
        return Err(Error::Parse {
            line: 1,
            message: "catalog header must start with `product_id,beta_true`".into(),
        });
    }
    let k = header.len() - 2;
    let mut ids = Vec::new();
    let mut betas = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != k + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", k + 2, rec.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number `{s}`"),
            })
        };
        ids.push(rec[0].trim().parse::<u32>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid product_id `{}`", &rec[0]),
        })?);
        betas.push(parse(&rec[1])?);
        for f in 0..k {
            values.push(parse(&rec[f + 2])?);
        }
    }
    let features = DMatrix::from_row_slice(ids.len(), k, &values);
    Ok((
        ObservedCatalog {
            product_ids: ids,
            features,
        },
        betas,
    ))
}

pub fn write_truth_csv<W: Write>(catalog: &ProductCatalog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "delta", "significant"])?;
    for (f, d) in catalog.delta().iter().enumerate() {
        w.write_record([
            format!("f{f}"),
            d.to_string(),
            (f < catalog.n_significant()).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
