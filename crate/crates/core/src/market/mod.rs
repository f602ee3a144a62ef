//! Synthetic logit market: product catalog, daily multinomial choices and a
//! Bernoulli price walk, with known ground-truth price coefficients.
//!
//! Utility of product `j` is `beta_j * p_j + delta . c_j`, where only the
//! significant characteristics carry a non-zero `delta`. Consumers choose one
//! product per day according to the softmax of the utilities (no outside
//! option).

mod io;

pub use io::{
    read_catalog_csv, read_panel_csv, write_catalog_csv, write_panel_csv, write_truth_csv,
};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Deterministic generator used for every simulation stream.
pub type SimRng = ChaCha8Rng;

/// Lower bound on the multiplicative price shock `1 + z`.
const MIN_PRICE_FACTOR: f64 = 1e-3;
/// Absolute price floor of the walk.
const MIN_PRICE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub n_products: usize,
    pub n_sig_features: usize,
    pub n_ima_features: usize,
    pub n_consumers: u64,
    pub n_days: usize,
    /// Daily probability that a product changes its price.
    pub epsilon: f64,
    /// Standard deviation of the relative price shock.
    pub price_shock_sd: f64,
    pub seed: u64,
    pub beta_range: (f64, f64),
    pub delta_range: (f64, f64),
    pub initial_price_range: (f64, f64),
    /// Log-scale noise of the simulated competitor price; `None` leaves the
    /// competitor column empty.
    pub competitor_noise_sd: Option<f64>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            n_products: 25,
            n_sig_features: 6,
            n_ima_features: 4,
            n_consumers: 10_000,
            n_days: 500,
            epsilon: 0.01,
            price_shock_sd: 0.05,
            seed: 0,
            beta_range: (-4.5, -1.0),
            delta_range: (-1.0, 1.0),
            initial_price_range: (0.5, 1.5),
            competitor_noise_sd: Some(0.05),
        }
    }
}

impl MarketConfig {
    /// 25 products, 10 characteristics (6 significant), 100,000 consumers, 1,000 days.
    pub fn full_scale() -> Self {
        Self {
            n_consumers: 100_000,
            n_days: 1_000,
            ..Self::default()
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_sig_features + self.n_ima_features
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_products == 0 {
            return bad("n_products must be at least 1");
        }
        if self.n_sig_features == 0 {
            return bad("n_sig_features must be at least 1");
        }
        if self.n_days == 0 {
            return bad("n_days must be at least 1");
        }
        if self.n_consumers == 0 {
            return bad("n_consumers must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.price_shock_sd >= 0.0 && self.price_shock_sd.is_finite()) {
            return bad("price_shock_sd must be finite and non-negative");
        }
        let (blo, bhi) = self.beta_range;
        if !(blo <= bhi && bhi < 0.0 && blo.is_finite()) {
            return bad("beta_range must be a finite interval strictly below zero");
        }
        let (dlo, dhi) = self.delta_range;
        if !(dlo <= dhi && dlo.is_finite() && dhi.is_finite()) {
            return bad("delta_range must be a finite interval");
        }
        let (plo, phi) = self.initial_price_range;
        if !(plo > 0.0 && plo <= phi && phi.is_finite()) {
            return bad("initial_price_range must be a positive finite interval");
        }
        if let Some(sd) = self.competitor_noise_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                return bad("competitor_noise_sd must be finite and non-negative");
            }
        }
        Ok(())
    }

    /// Reads the flat `key = value` config format; unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, line) in kv.keys() {
            match key.as_str() {
                "n_products" => cfg.n_products = kv.parse(key)?,
                "n_sig_features" => cfg.n_sig_features = kv.parse(key)?,
                "n_ima_features" => cfg.n_ima_features = kv.parse(key)?,
                "n_consumers" => cfg.n_consumers = kv.parse(key)?,
                "n_days" => cfg.n_days = kv.parse(key)?,
                "epsilon" => cfg.epsilon = kv.parse(key)?,
                "price_shock_sd" => cfg.price_shock_sd = kv.parse(key)?,
                "seed" => cfg.seed = kv.parse(key)?,
                "beta_min" => cfg.beta_range.0 = kv.parse(key)?,
                "beta_max" => cfg.beta_range.1 = kv.parse(key)?,
                "delta_min" => cfg.delta_range.0 = kv.parse(key)?,
                "delta_max" => cfg.delta_range.1 = kv.parse(key)?,
                "initial_price_min" => cfg.initial_price_range.0 = kv.parse(key)?,
                "initial_price_max" => cfg.initial_price_range.1 = kv.parse(key)?,
                "competitor_noise_sd" => {
                    let raw = kv.get(key).unwrap_or_default();
                    cfg.competitor_noise_sd = if raw == "none" || raw == "off" {
                        None
                    } else {
                        Some(kv.parse(key)?)
                    };
                }
                // keys owned by the experiment layer
                k if k.starts_with("experiment.") || k.starts_with("train.") => {}
                k if k.starts_with("ols.")
                    || k.starts_with("features.")
                    || k.starts_with("optimizer.") => {}
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown market key `{other}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        let comp = match self.competitor_noise_sd {
            Some(sd) => sd.to_string(),
            None => "none".to_string(),
        };
        format!(
            "n_products = {}\nn_sig_features = {}\nn_ima_features = {}\nn_consumers = {}\n\
             n_days = {}\nepsilon = {}\nprice_shock_sd = {}\nseed = {}\nbeta_min = {}\n\
             beta_max = {}\ndelta_min = {}\ndelta_max = {}\ninitial_price_min = {}\n\
             initial_price_max = {}\ncompetitor_noise_sd = {}\n",
            self.n_products,
            self.n_sig_features,
            self.n_ima_features,
            self.n_consumers,
            self.n_days,
            self.epsilon,
            self.price_shock_sd,
            self.seed,
            self.beta_range.0,
            self.beta_range.1,
            self.delta_range.0,
            self.delta_range.1,
            self.initial_price_range.0,
            self.initial_price_range.1,
            comp,
        )
    }
}

/// Ground truth and observed characteristics of every simulated product.
///
/// Significant features occupy the first `n_significant` columns of
/// `features`. Estimators should only ever see [`ProductCatalog::observed`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProductCatalog {
    features: DMatrix<f64>,
    beta: Vec<f64>,
    delta: Vec<f64>,
    n_significant: usize,
    initial_prices: Vec<f64>,
}

/// Estimator-facing view of a catalog: characteristics only.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedCatalog {
    pub product_ids: Vec<u32>,
    pub features: DMatrix<f64>,
}

impl ProductCatalog {
    pub fn new(
        features: DMatrix<f64>,
        beta: Vec<f64>,
        delta: Vec<f64>,
        n_significant: usize,
        initial_prices: Vec<f64>,
    ) -> Result<Self> {
        let n = features.nrows();
        if beta.len() != n {
            return Err(Error::dims("beta", n, beta.len()));
        }
        if initial_prices.len() != n {
            return Err(Error::dims("initial prices", n, initial_prices.len()));
        }
        if delta.len() != features.ncols() {
            return Err(Error::dims("delta", features.ncols(), delta.len()));
        }
        if n_significant > features.ncols() {
            return Err(Error::InvalidConfig(
                "more significant features than columns".into(),
            ));
        }
        if beta.iter().any(|b| !(*b < 0.0)) {
            return Err(Error::InvalidConfig(
                "true price coefficients must be negative".into(),
            ));
        }
        if delta[n_significant..].iter().any(|d| *d != 0.0) {
            return Err(Error::InvalidConfig(
                "imaginary features must have zero coefficient".into(),
            ));
        }
        Ok(Self {
            features,
            beta,
            delta,
            n_significant,
            initial_prices,
        })
    }

    pub fn n_products(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Feature coefficients, zero for imaginary features.
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn n_significant(&self) -> usize {
        self.n_significant
    }

    pub fn initial_prices(&self) -> &[f64] {
        &self.initial_prices
    }

    /// Row `j` of the characteristic matrix.
    pub fn features_of(&self, j: usize) -> Vec<f64> {
        self.features.row(j).iter().copied().collect()
    }

    pub fn observed(&self) -> ObservedCatalog {
        ObservedCatalog {
            product_ids: (0..self.n_products() as u32).collect(),
            features: self.features.clone(),
        }
    }

    /// `delta . c_j` over the significant block.
    fn feature_utility(&self, j: usize) -> f64 {
        (0..self.n_significant)
            .map(|k| self.delta[k] * self.features[(j, k)])
            .sum()
    }

    pub fn utilities(&self, prices: &[f64]) -> Result<Vec<f64>> {
        if prices.len() != self.n_products() {
            return Err(Error::dims("prices", self.n_products(), prices.len()));
        }
        Ok((0..self.n_products())
            .map(|j| self.beta[j] * prices[j] + self.feature_utility(j))
            .collect())
    }
}

pub fn generate_catalog(config: &MarketConfig) -> Result<ProductCatalog> {
    config.validate()?;
    let mut rng = SimRng::seed_from_u64(config.seed);
    let n = config.n_products;
    let k = config.n_features();

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = DMatrix::zeros(n, k);
    for j in 0..n {
        for f in 0..k {
            features[(j, f)] = normal.sample(&mut rng);
        }
    }
    let beta = (0..n)
        .map(|_| uniform(&mut rng, config.beta_range))
        .collect();
    let delta = (0..k)
        .map(|f| {
            if f < config.n_sig_features {
                uniform(&mut rng, config.delta_range)
            } else {
                0.0
            }
        })
        .collect();
    let initial_prices = (0..n)
        .map(|_| uniform(&mut rng, config.initial_price_range))
        .collect();
    ProductCatalog::new(features, beta, delta, config.n_sig_features, initial_prices)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// `beta_j * p_j + delta . c_sig_j`.
pub fn utility(beta_j: f64, price_j: f64, delta: &[f64], c_sig_j: &[f64]) -> Result<f64> {
    if delta.len() != c_sig_j.len() {
        return Err(Error::dims(
            "feature coefficients",
            delta.len(),
            c_sig_j.len(),
        ));
    }
    let dot: f64 = delta.iter().zip(c_sig_j).map(|(d, c)| d * c).sum();
    Ok(beta_j * price_j + dot)
}

/// Softmax over the utilities, shifted by the maximum so large inputs cannot overflow.
pub fn choice_probabilities(utilities: &[f64]) -> Result<Vec<f64>> {
    if utilities.is_empty() {
        return Err(Error::EmptyInput("utilities"));
    }
    if let Some(row) = utilities.iter().position(|u| !u.is_finite()) {
        return Err(Error::NonFinite {
            what: "utilities".into(),
            row,
        });
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Multinomial draw of `n_consumers` choices, as a chain of conditional binomials.
pub fn simulate_day<R: Rng + ?Sized>(
    probabilities: &[f64],
    n_consumers: u64,
    rng: &mut R,
) -> Vec<u64> {
    let mut sales = vec![0u64; probabilities.len()];
    let mut remaining = n_consumers;
    let mut mass_left = 1.0;
    for (j, &p) in probabilities.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probabilities.len() {
            sales[j] = remaining;
            break;
        }
        let cond = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, cond)
            .expect("conditional probability clamped to [0, 1]")
            .sample(rng);
        sales[j] = draw;
        remaining -= draw;
        mass_left -= p;
    }
    sales
}

/// One day of the Bernoulli price walk: with probability `epsilon` a price is
/// multiplied by `1 + z`, `z ~ N(0, shock_sd^2)`.
pub fn step_prices<R: Rng + ?Sized>(
    prices: &[f64],
    epsilon: f64,
    shock_sd: f64,
    rng: &mut R,
) -> Vec<f64> {
    let shock = (shock_sd > 0.0).then(|| Normal::new(0.0, shock_sd).expect("finite shock sd"));
    prices
        .iter()
        .map(|&p| {
            let changes = rng.random::<f64>() < epsilon;
            match (&shock, changes) {
                (Some(dist), true) => {
                    let z: f64 = dist.sample(rng);
                    (p * (1.0 + z).max(MIN_PRICE_FACTOR)).max(MIN_PRICE)
                }
                _ => p,
            }
        })
        .collect()
}

/// One observation of the daily sales panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub product_id: u32,
    pub day: u32,
    pub price: f64,
    pub sales: f64,
    pub availability: f64,
    pub competitor_price: Option<f64>,
}

/// Daily (product, day) panel shared by the simulator, the feature pipeline
/// and both estimators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SalesPanel {
    pub rows: Vec<PanelRow>,
}

impl SalesPanel {
    pub fn new(rows: Vec<PanelRow>) -> Result<Self> {
        let panel = Self { rows };
        panel.validate()?;
        Ok(panel)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !seen.insert((r.product_id, r.day)) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate row for product {} day {}", r.product_id, r.day),
                });
            }
            if !(r.price.is_finite() && r.price > 0.0) {
                return Err(Error::NonFinite {
                    what: "price (must be positive)".into(),
                    row: i,
                });
            }
            if !(r.sales.is_finite() && r.sales >= 0.0) {
                return Err(Error::NonFinite {
                    what: "sales (must be non-negative)".into(),
                    row: i,
                });
            }
            if !(0.0..=1.0).contains(&r.availability) {
                return Err(Error::NonFinite {
                    what: "availability (must lie in [0, 1])".into(),
                    row: i,
                });
            }
        }
        Ok(())
    }

    pub fn product_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.rows.iter().map(|r| r.product_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn days(&self) -> Vec<u32> {
        let mut days: Vec<u32> = self.rows.iter().map(|r| r.day).collect();
        days.sort_unstable();
        days.dedup();
        days
    }

    /// Rows grouped by product, each group sorted by day.
    pub fn by_product(&self) -> BTreeMap<u32, Vec<&PanelRow>> {
        let mut groups: BTreeMap<u32, Vec<&PanelRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry(r.product_id).or_default().push(r);
        }
        for rows in groups.values_mut() {
            rows.sort_by_key(|r| r.day);
        }
        groups
    }

    pub fn mean_prices(&self) -> BTreeMap<u32, f64> {
        self.by_product()
            .into_iter()
            .map(|(id, rows)| {
                let mean = rows.iter().map(|r| r.price).sum::<f64>() / rows.len() as f64;
                (id, mean)
            })
            .collect()
    }

    pub fn total_sales(&self) -> f64 {
        self.rows.iter().map(|r| r.sales).sum()
    }
}

/// Runs the day loop: utilities at current prices, choice probabilities,
/// multinomial sales, then one step of the price walk.
pub fn simulate_panel(config: &MarketConfig) -> Result<(ProductCatalog, SalesPanel)> {
    let catalog = generate_catalog(config)?;
    // separate stream from the catalog draws
    let mut rng = SimRng::seed_from_u64(config.seed ^ 0x5EED_0F_DA75);
    let competitor = config
        .competitor_noise_sd
        .map(|sd| Normal::new(0.0, sd).expect("finite competitor sd"));

    let n = catalog.n_products();
    let mut prices = catalog.initial_prices().to_vec();
    let mut rows = Vec::with_capacity(n * config.n_days);
    for day in 0..config.n_days {
        let utilities = catalog.utilities(&prices)?;
        let probs = choice_probabilities(&utilities)?;
        let sales = simulate_day(&probs, config.n_consumers, &mut rng);
        for j in 0..n {
            let competitor_price = competitor
                .as_ref()
                .map(|dist| prices[j] * dist.sample(&mut rng).exp());
            rows.push(PanelRow {
                product_id: j as u32,
                day: day as u32,
                price: prices[j],
                sales: sales[j] as f64,
                availability: 1.0,
                competitor_price,
            });
        }
        prices = step_prices(&prices, config.epsilon, config.price_shock_sd, &mut rng);
    }
    Ok((catalog, SalesPanel { rows }))
}

/// Own-price elasticity of the logit choice probability, `beta_j p_j (1 - pi_j)`.
pub fn true_point_elasticity(catalog: &ProductCatalog, prices: &[f64]) -> Result<Vec<f64>> {
    let probs = choice_probabilities(&catalog.utilities(prices)?)?;
    Ok(catalog
        .beta()
        .iter()
        .zip(prices)
        .zip(&probs)
        .map(|((b, p), pi)| b * p * (1.0 - pi))
        .collect())
}
