//! Comparison experiments: simulate, featurize, fit both estimators and score
//! them against the simulator's true elasticities.

mod manifest;
mod report;
mod stats;

pub use manifest::{config_hash, sha256_hex, RunManifest, MANIFEST_SCHEMA};
pub use report::{
    density_export, sign_share, CellFailure, ComparisonReport, Density, MethodSummary, ReportRow,
};
pub use stats::{descriptive_stats, write_stats_csv, StatRow};

use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::econometric::{estimate_all, product_distances, DEFAULT_DEGREE, DEFAULT_RANK};
use crate::error::{Error, Result};
use crate::features::{build_feature_table, FeatureConfig};
use crate::market::{
    simulate_panel, true_point_elasticity, MarketConfig, ProductCatalog, SalesPanel,
};
use crate::ml::{train, TargetSpace, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Ml,
    Ols,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Ml, Method::Ols];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::Ols => "ols",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsConfig {
    /// Highest distance power in the cross-price terms.
    pub degree: usize,
    /// Latent dimensions of the product space.
    pub rank: usize,
}

impl Default for OlsConfig {
    fn default() -> Self {
        Self {
            degree: DEFAULT_DEGREE,
            rank: DEFAULT_RANK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Template; `epsilon` and `seed` are replaced per cell.
    pub market: MarketConfig,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub ols: OlsConfig,
    pub density_bins: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            epsilons: vec![0.01, 0.025, 0.1],
            seeds: (0..5).collect(),
            market: MarketConfig::default(),
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
            ols: OlsConfig::default(),
            density_bins: 40,
        }
    }
}

fn parse_target_space(raw: &str) -> Result<TargetSpace> {
    match raw {
        "loglog" | "log-log" => Ok(TargetSpace::LogLog),
        "linear" => Ok(TargetSpace::Linear),
        other => Err(Error::InvalidConfig(format!(
            "unknown target space `{other}` (expected loglog or linear)"
        ))),
    }
}

/// Training settings under the `train.` prefix.
pub fn train_config_from(kv: &KeyValues) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (key, line) in kv.keys() {
        let Some(name) = key.strip_prefix("train.") else {
            continue;
        };
        match name {
            "batch_size" => cfg.batch_size = kv.parse(key)?,
            "epochs" => cfg.epochs = kv.parse(key)?,
            "base_lr" => cfg.base_lr = kv.parse(key)?,
            "lr_decay" => cfg.lr_decay = kv.parse(key)?,
            "validation_fraction" => cfg.validation_fraction = kv.parse(key)?,
            "unknown_fraction" => cfg.unknown_fraction = kv.parse(key)?,
            "dropout" => cfg.arch.dropout = kv.parse(key)?,
            "embedding_dim" => cfg.arch.embedding_dim = kv.parse(key)?,
            "seed" => cfg.seed = kv.parse(key)?,
            "target_space" => {
                cfg.target_space = parse_target_space(kv.get(key).unwrap_or_default())?
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown training key `train.{other}`"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Feature settings under the `features.` prefix.
pub fn feature_config_from(kv: &KeyValues) -> Result<FeatureConfig> {
    let mut cfg = FeatureConfig::default();
    for (key, line) in kv.keys() {
        let Some(name) = key.strip_prefix("features.") else {
            continue;
        };
        match name {
            "window" => cfg.window = kv.parse(key)?,
            "ewma_lambda" => cfg.ewma_lambda = kv.parse(key)?,
            "price_resolution" => cfg.price_resolution = Some(kv.parse(key)?),
            "calendar_origin" => cfg.calendar_origin = kv.parse(key)?,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown feature key `features.{other}`"),
                })
            }
        }
    }
    if cfg.window == 0 || !(0.0..1.0).contains(&cfg.ewma_lambda) {
        return Err(Error::InvalidConfig(
            "features.window must be positive and features.ewma_lambda in [0, 1)".into(),
        ));
    }
    Ok(cfg)
}

/// Regression settings under the `ols.` prefix.
pub fn ols_config_from(kv: &KeyValues) -> Result<OlsConfig> {
    let mut cfg = OlsConfig::default();
    for (key, line) in kv.keys() {
        let Some(name) = key.strip_prefix("ols.") else {
            continue;
        };
        match name {
            "degree" => cfg.degree = kv.parse(key)?,
            "rank" => cfg.rank = kv.parse(key)?,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown regression key `ols.{other}`"),
                })
            }
        }
    }
    if cfg.rank == 0 {
        return Err(Error::InvalidConfig("ols.rank must be positive".into()));
    }
    Ok(cfg)
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "an experiment needs at least one epsilon and one seed".into(),
            ));
        }
        if self.density_bins == 0 {
            return Err(Error::InvalidConfig("density_bins must be positive".into()));
        }
        for &epsilon in &self.epsilons {
            MarketConfig {
                epsilon,
                ..self.market.clone()
            }
            .validate()?;
        }
        self.train.validate()
    }

    /// Market keys at top level plus `experiment.`, `train.`, `features.`
    /// and `ols.` sections.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut spec = Self {
            market: MarketConfig::from_key_values(kv)?,
            train: train_config_from(kv)?,
            features: feature_config_from(kv)?,
            ols: ols_config_from(kv)?,
            ..Self::default()
        };
        for (key, line) in kv.keys() {
            let Some(name) = key.strip_prefix("experiment.") else {
                continue;
            };
            match name {
                "epsilons" => spec.epsilons = kv.parse_list(key)?.unwrap_or_default(),
                "seeds" => spec.seeds = kv.parse_list(key)?.unwrap_or_default(),
                "replications" => spec.seeds = (0..kv.parse::<u64>(key)?).collect(),
                "density_bins" => spec.density_bins = kv.parse(key)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown experiment key `experiment.{other}`"),
                    })
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical text of every setting, used for the manifest hash.
    pub fn canonical(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Everything one (epsilon, seed) cell produces.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub epsilon: f64,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<CellFailure>,
}

/// True elasticities at each product's mean observed price.
pub fn truth_at_mean_prices(catalog: &ProductCatalog, panel: &SalesPanel) -> Result<Vec<f64>> {
    let prices: Vec<f64> = panel.mean_prices().into_values().collect();
    true_point_elasticity(catalog, &prices)
}

fn failure(epsilon: f64, seed: u64, method: Option<Method>, err: &Error) -> CellFailure {
    CellFailure {
        epsilon,
        seed,
        method,
        product_id: None,
        kind: err.kind().to_string(),
        message: err.to_string(),
    }
}

/// Simulates one panel and scores both estimators on it.
pub fn run_cell(spec: &ExperimentSpec, epsilon: f64, seed: u64) -> CellOutcome {
    let mut out = CellOutcome {
        epsilon,
        seed,
        rows: Vec::new(),
        failures: Vec::new(),
    };
    let market = MarketConfig {
        epsilon,
        seed,
        ..spec.market.clone()
    };
    let (catalog, panel) = match simulate_panel(&market) {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(failure(epsilon, seed, None, &e));
            return out;
        }
    };
    let truth = match truth_at_mean_prices(&catalog, &panel) {
        Ok(t) => t,
        Err(e) => {
            out.failures.push(failure(epsilon, seed, None, &e));
            return out;
        }
    };
    let row = |method, product: u32, estimate: Option<f64>| {
        let truth = truth[product as usize];
        ReportRow {
            epsilon,
            seed,
            method,
            product_id: product,
            estimate,
            truth,
            sq_err: estimate.map(|e| (e - truth).powi(2)),
        }
    };

    let ml = build_feature_table(&panel, None, Some(&catalog.observed()), &spec.features).and_then(
        |table| {
            let cfg = TrainConfig {
                seed,
                ..spec.train.clone()
            };
            train(&panel, &table, &cfg)?.product_elasticities(&table)
        },
    );
    match ml {
        Ok(est) => out
            .rows
            .extend(est.into_iter().map(|(p, e)| row(Method::Ml, p, Some(e)))),
        Err(e) => out
            .failures
            .push(failure(epsilon, seed, Some(Method::Ml), &e)),
    }

    let ols = product_distances(&catalog.observed().features, None, spec.ols.rank)
        .and_then(|(_, d)| estimate_all(&panel, &d, spec.ols.degree));
    match ols {
        Ok(est) => {
            for (product, result) in est {
                match result {
                    Ok(e) => out.rows.push(row(Method::Ols, product, Some(e.beta_hat))),
                    Err(err) => {
                        out.rows.push(row(Method::Ols, product, None));
                        out.failures.push(CellFailure {
                            product_id: Some(product),
                            ..failure(epsilon, seed, Some(Method::Ols), &err)
                        });
                    }
                }
            }
        }
        Err(e) => out
            .failures
            .push(failure(epsilon, seed, Some(Method::Ols), &e)),
    }
    out
}

/// Runs every (epsilon, seed) cell in parallel and aggregates in grid order.
pub fn run_comparison(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    use rayon::prelude::*;
    spec.validate()?;
    let cells: Vec<(f64, u64)> = spec
        .epsilons
        .iter()
        .flat_map(|&e| spec.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(epsilon, seed)| run_cell(spec, epsilon, seed))
        .collect();
    Ok(ComparisonReport::from_cells(outcomes, spec.density_bins))
}
