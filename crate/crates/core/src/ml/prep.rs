use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{point_elasticity, DemandTheta};
use crate::error::{Error, Result};
use crate::features::{normalize_log, FeatureTable, NormStats};
use crate::nn::Inputs;

/// Units in which the structural head is fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSpace {
    /// Standardized `ln(q + 1)` against standardized `ln p`; beta is a
    /// scaled log-log elasticity.
    LogLog,
    /// Standardized `q` against standardized `p`; theta maps back to raw units.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Everything needed to turn feature rows into network inputs exactly as
/// during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub target_space: TargetSpace,
    /// Indices into [`FeatureTable::categorical_columns`] fed to the network.
    pub fields: Vec<usize>,
    pub vocabs: Vec<usize>,
    pub numeric_names: Vec<String>,
    pub numeric: NormStats,
    /// Numeric columns that get a 0/1 presence column appended.
    pub indicators: Vec<usize>,
    pub price: Standardizer,
    pub quantity: Standardizer,
}

impl Preprocessing {
    /// Fits scaling on `rows` of `table`. Vocabulary sizes cover every id in the table.
    pub fn fit(table: &FeatureTable, rows: &[usize], target_space: TargetSpace) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("training rows"));
        }
        check_finite(table)?;
        let categorical = table.categorical_columns();
        // the item field always participates; the others only when populated
        let fields: Vec<usize> = (0..categorical.len())
            .filter(|&f| f == 0 || rows.iter().any(|&i| categorical[f][i] != 0))
            .collect();
        let vocabs = fields
            .iter()
            .map(|&f| categorical[f].iter().copied().max().unwrap_or(0) as usize + 1)
            .collect();

        let columns = table.numeric_columns();
        let train_cols: Vec<Vec<Option<f64>>> = columns
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        let (_, numeric) = normalize_log(&train_cols);
        let indicators = train_cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(Option::is_none))
            .map(|(k, _)| k)
            .collect();

        let (px, qy): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .map(|&i| {
                let r = &table.rows[i];
                (r.price, r.sales)
            })
            .unzip();
        let (price, quantity) = match target_space {
            TargetSpace::LogLog => (
                Standardizer::fit(px.iter().map(|p| p.ln())),
                Standardizer::fit(qy.iter().map(|q| (q + 1.0).ln())),
            ),
            TargetSpace::Linear => (
                Standardizer::fit(px.into_iter()),
                Standardizer::fit(qy.into_iter()),
            ),
        };
        Ok(Self {
            target_space,
            fields,
            vocabs,
            numeric_names: table.numeric_names.clone(),
            numeric,
            indicators,
            price,
            quantity,
        })
    }

    pub fn n_numeric(&self) -> usize {
        self.numeric_names.len() + self.indicators.len()
    }

    /// Network inputs for `rows`. Unknown ids map to 0; absent numeric values
    /// are imputed with the column mean (0 after scaling).
    pub fn inputs(&self, table: &FeatureTable, rows: &[usize]) -> Result<Inputs> {
        if table.numeric_names != self.numeric_names {
            return Err(Error::InvalidConfig(
                "feature columns differ from the training schema".into(),
            ));
        }
        check_finite(table)?;
        let categorical_all = table.categorical_columns();
        let categorical = self
            .fields
            .iter()
            .zip(&self.vocabs)
            .map(|(&f, &vocab)| {
                rows.iter()
                    .map(|&i| {
                        let id = categorical_all[f][i] as usize;
                        if id < vocab {
                            id
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        let n_cols = self.numeric_names.len();
        let mut numeric = DMatrix::zeros(rows.len(), self.n_numeric());
        for (r, &i) in rows.iter().enumerate() {
            let values = &table.rows[i].numeric;
            for (c, scaling) in self.numeric.columns.iter().enumerate() {
                if let Some(z) = values[c].and_then(|x| scaling.apply(x)) {
                    numeric[(r, c)] = z;
                }
            }
            for (k, &c) in self.indicators.iter().enumerate() {
                numeric[(r, n_cols + k)] = if values[c].is_some() { 1.0 } else { 0.0 };
            }
        }
        Ok(Inputs {
            categorical,
            numeric,
        })
    }

    pub fn model_price(&self, price: f64) -> f64 {
        match self.target_space {
            TargetSpace::LogLog => self.price.apply(price.ln()),
            TargetSpace::Linear => self.price.apply(price),
        }
    }

    pub fn model_quantity(&self, quantity: f64) -> f64 {
        match self.target_space {
            TargetSpace::LogLog => self.quantity.apply((quantity + 1.0).ln()),
            TargetSpace::Linear => self.quantity.apply(quantity),
        }
    }

    /// Raw-unit demand parameters; only defined for [`TargetSpace::Linear`].
    pub fn raw_theta(&self, theta: DemandTheta) -> Result<DemandTheta> {
        match self.target_space {
            TargetSpace::Linear => {
                let beta = self.quantity.std * theta.beta / self.price.std;
                let alpha =
                    self.quantity.mean + self.quantity.std * theta.alpha - beta * self.price.mean;
                Ok(DemandTheta { alpha, beta })
            }
            TargetSpace::LogLog => Err(Error::InvalidConfig(
                "log-log models have no raw linear demand parameters".into(),
            )),
        }
    }

    /// Own-price elasticity implied by a model-space theta at `price`.
    pub fn elasticity(&self, theta: DemandTheta, price: f64) -> Result<f64> {
        match self.target_space {
            TargetSpace::LogLog => Ok(theta.beta * self.quantity.std / self.price.std),
            TargetSpace::Linear => point_elasticity(self.raw_theta(theta)?, price),
        }
    }
}

fn check_finite(table: &FeatureTable) -> Result<()> {
    for (i, r) in table.rows.iter().enumerate() {
        if !(r.price.is_finite() && r.price > 0.0) {
            return Err(Error::NonFinite {
                what: "price".into(),
                row: i,
            });
        }
        if !(r.sales.is_finite() && r.sales >= 0.0) {
            return Err(Error::NonFinite {
                what: "sales".into(),
                row: i,
            });
        }
        if let Some(c) = r
            .numeric
            .iter()
            .position(|v| v.is_some_and(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite {
                what: table.numeric_names[c].clone(),
                row: i,
            });
        }
    }
    Ok(())
}
