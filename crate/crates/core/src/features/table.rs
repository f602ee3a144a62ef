use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    calendar_features, competitor_aggregate, encode_tree, price_resolution, window_aggregate,
    TreeVocab, Weekday, WindowSpec, WindowStats, RESERVED_ID, TREE_DEPTH,
};
use crate::error::{Error, Result};
use crate::market::{ObservedCatalog, PanelRow, SalesPanel};

/// Hierarchy path per product id, root first.
pub type Hierarchy = BTreeMap<u32, Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Trailing window length in days.
    pub window: u32,
    pub ewma_lambda: f64,
    /// Price mode buckets; `None` uses the panel's smallest price increment.
    pub price_resolution: Option<f64>,
    pub calendar_origin: Weekday,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window: 28,
            ewma_lambda: 0.9,
            price_resolution: None,
            calendar_origin: Weekday::Monday,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub product_id: u32,
    pub day: u32,
    /// Same-day price and sales: the structural model's `P` and `q`, never inputs.
    pub price: f64,
    pub sales: f64,
    pub item_id: u32,
    pub category_id: u32,
    pub tree_ids: [u32; TREE_DEPTH],
    /// Values for [`FeatureTable::numeric_names`]; `None` marks an absent value.
    pub numeric: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub numeric_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

const KEY_COLUMNS: [&str; 10] = [
    "product_id",
    "day",
    "price",
    "sales",
    "item_id",
    "category_id",
    "tree_1",
    "tree_2",
    "tree_3",
    "tree_4",
];

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks that rows pair one-to-one, in order, with the panel's rows.
    pub fn check_aligned(&self, panel: &SalesPanel) -> Result<()> {
        if self.rows.len() != panel.rows.len() {
            return Err(Error::dims(
                "feature rows",
                panel.rows.len(),
                self.rows.len(),
            ));
        }
        for (i, (f, p)) in self.rows.iter().zip(&panel.rows).enumerate() {
            if f.product_id != p.product_id || f.day != p.day {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!(
                        "feature row ({}, {}) does not match panel row ({}, {})",
                        f.product_id, f.day, p.product_id, p.day
                    ),
                });
            }
        }
        Ok(())
    }

    /// Numeric values column by column.
    pub fn numeric_columns(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.numeric_names.len())
            .map(|c| self.rows.iter().map(|r| r.numeric[c]).collect())
            .collect()
    }

    /// Categorical fields in network order: item, category, tree levels.
    pub fn categorical_columns(&self) -> Vec<Vec<u32>> {
        let mut out = vec![
            self.rows.iter().map(|r| r.item_id).collect(),
            self.rows.iter().map(|r| r.category_id).collect(),
        ];
        for l in 0..TREE_DEPTH {
            out.push(self.rows.iter().map(|r| r.tree_ids[l]).collect());
        }
        out
    }
}

fn window_names(prefix: &str) -> impl Iterator<Item = String> + '_ {
    WindowStats::NAMES
        .iter()
        .map(move |s| format!("{prefix}_{s}"))
}

fn push_window(out: &mut Vec<Option<f64>>, stats: Option<WindowStats>) {
    match stats {
        Some(s) => out.extend(s.values()),
        None => out.extend([None; 6]),
    }
}

/// Builds one feature row per panel row, in panel order.
///
/// Item ids are assigned 1.. in ascending product id (0 is reserved for
/// unknown items). Without a hierarchy the category and tree ids stay at the
/// reserved value. Static item characteristics, when given, are appended as
/// numeric columns `f0..`.
pub fn build_feature_table(
    panel: &SalesPanel,
    hierarchy: Option<&Hierarchy>,
    item_features: Option<&ObservedCatalog>,
    config: &FeatureConfig,
) -> Result<FeatureTable> {
    if panel.is_empty() {
        return Err(Error::EmptyInput("panel"));
    }
    if config.window == 0 {
        return Err(Error::InvalidConfig(
            "window must be at least one day".into(),
        ));
    }
    let price_spec = WindowSpec {
        ewma_lambda: config.ewma_lambda,
        resolution: config.price_resolution.or_else(|| price_resolution(panel)),
    };
    let sales_spec = WindowSpec {
        ewma_lambda: config.ewma_lambda,
        resolution: None,
    };

    let products = panel.product_ids();
    let item_ids: BTreeMap<u32, u32> = products
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, i as u32 + 1))
        .collect();

    let mut tree_vocab = TreeVocab::new();
    let mut leaf_vocab: BTreeMap<String, u32> = BTreeMap::new();
    let mut tree_ids: BTreeMap<u32, ([u32; TREE_DEPTH], u32)> = BTreeMap::new();
    if let Some(h) = hierarchy {
        for p in &products {
            let path = h.get(p).ok_or_else(|| {
                Error::InvalidConfig(format!("product {p} has no hierarchy path"))
            })?;
            let ids = encode_tree(path, &mut tree_vocab)?;
            let leaf = path
                .last()
                .expect("encode_tree rejects empty paths")
                .clone();
            let next = leaf_vocab.len() as u32 + 1;
            let cat = *leaf_vocab.entry(leaf).or_insert(next);
            tree_ids.insert(*p, (ids, cat));
        }
    }

    let statics: BTreeMap<u32, Vec<f64>> = match item_features {
        Some(c) => c
            .product_ids
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, c.features.row(i).iter().copied().collect()))
            .collect(),
        None => BTreeMap::new(),
    };
    let n_static = item_features.map_or(0, |c| c.features.ncols());
    if item_features.is_some() {
        if let Some(p) = products.iter().find(|p| !statics.contains_key(p)) {
            return Err(Error::InvalidConfig(format!(
                "product {p} missing from catalog"
            )));
        }
    }

    let mut numeric_names: Vec<String> =
        window_names("price").chain(window_names("sales")).collect();
    numeric_names.extend(
        [
            "availability_mean",
            "competitor_price",
            "day_of_week",
            "week",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    numeric_names.extend((0..n_static).map(|k| format!("f{k}")));

    let mut by_key: BTreeMap<(u32, u32), FeatureRow> = BTreeMap::new();
    for (product, rows) in panel.by_product() {
        let debut = rows[0].day;
        let mut start = 0;
        for (i, row) in rows.iter().enumerate() {
            let lo = row.day.saturating_sub(config.window);
            while rows[start].day < lo {
                start += 1;
            }
            let window: &[&PanelRow] = if row.day - debut >= config.window {
                &rows[start..i]
            } else {
                &[]
            };
            let prices: Vec<f64> = window.iter().map(|r| r.price).collect();
            let sales: Vec<f64> = window.iter().map(|r| r.sales).collect();

            let mut numeric = Vec::with_capacity(numeric_names.len());
            push_window(&mut numeric, window_aggregate(&prices, &price_spec));
            push_window(&mut numeric, window_aggregate(&sales, &sales_spec));
            numeric.push(
                (!window.is_empty()).then(|| {
                    window.iter().map(|r| r.availability).sum::<f64>() / window.len() as f64
                }),
            );
            let competitor: Vec<Option<f64>> = window.iter().map(|r| r.competitor_price).collect();
            numeric.push(competitor_aggregate(&[competitor]));
            let (dow, week) = calendar_features(row.day, config.calendar_origin);
            numeric.push(Some(dow as f64));
            numeric.push(Some(week as f64));
            if let Some(v) = statics.get(&product) {
                numeric.extend(v.iter().copied().map(Some));
            }

            let (tree, category) = tree_ids
                .get(&product)
                .copied()
                .unwrap_or(([RESERVED_ID; TREE_DEPTH], RESERVED_ID));
            by_key.insert(
                (row.day, product),
                FeatureRow {
                    product_id: product,
                    day: row.day,
                    price: row.price,
                    sales: row.sales,
                    item_id: item_ids[&product],
                    category_id: category,
                    tree_ids: tree,
                    numeric,
                },
            );
        }
    }
    let rows = panel
        .rows
        .iter()
        .map(|r| {
            by_key
                .remove(&(r.day, r.product_id))
                .expect("every panel row produced a feature row")
        })
        .collect();
    Ok(FeatureTable {
        numeric_names,
        rows,
    })
}

/// Writes the table with the key columns first, then numeric columns in
/// [`FeatureTable::numeric_names`] order. Absent values are empty fields.
pub fn write_feature_csv<W: Write>(table: &FeatureTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = KEY_COLUMNS
        .iter()
        .copied()
        .chain(table.numeric_names.iter().map(String::as_str))
        .collect();
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            r.product_id.to_string(),
            r.day.to_string(),
            r.price.to_string(),
            r.sales.to_string(),
            r.item_id.to_string(),
            r.category_id.to_string(),
        ];
        rec.extend(r.tree_ids.iter().map(|t| t.to_string()));
        rec.extend(
            r.numeric
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < KEY_COLUMNS.len()
        || header
            .iter()
            .take(KEY_COLUMNS.len())
            .ne(KEY_COLUMNS.iter().copied())
    {
        return Err(Error::Parse {
            line: 1,
            message: format!("feature header must start with {}", KEY_COLUMNS.join(",")),
        });
    }
    let numeric_names: Vec<String> = header
        .iter()
        .skip(KEY_COLUMNS.len())
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let parse = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("column {}: {e}", header.get(k).unwrap_or("?")),
            })
        };
        let parse_id = |k: usize| -> Result<u32> {
            field(k).parse::<u32>().map_err(|e| Error::Parse {
                line,
                message: format!("column {}: {e}", header.get(k).unwrap_or("?")),
            })
        };
        let mut tree_ids = [0; TREE_DEPTH];
        for (l, t) in tree_ids.iter_mut().enumerate() {
            *t = parse_id(6 + l)?;
        }
        let numeric = (KEY_COLUMNS.len()..header.len())
            .map(|k| {
                if field(k).is_empty() {
                    Ok(None)
                } else {
                    parse(k).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            product_id: parse_id(0)?,
            day: parse_id(1)?,
            price: parse(2)?,
            sales: parse(3)?,
            item_id: parse_id(4)?,
            category_id: parse_id(5)?,
            tree_ids,
            numeric,
        });
    }
    Ok(FeatureTable {
        numeric_names,
        rows,
    })
}
