//! Trailing-window feature engineering over a [`SalesPanel`].
//!
//! Every aggregate for day `t` is computed from days strictly before `t`.

mod normalize;
mod table;

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::SalesPanel;

pub use normalize::{normalize_log, ColumnScaling, NormStats};
pub use table::{
    build_feature_table, read_feature_csv, write_feature_csv, FeatureConfig, FeatureRow,
    FeatureTable, Hierarchy,
};

/// Number of hierarchy levels kept by [`encode_tree`].
pub const TREE_DEPTH: usize = 4;
/// Id used for padding and unseen hierarchy values.
pub const RESERVED_ID: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// EWMA decay; the running mean is `lambda * prev + (1 - lambda) * x`.
    pub ewma_lambda: f64,
    /// Mode buckets; `None` compares values exactly.
    pub resolution: Option<f64>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            ewma_lambda: 0.9,
            resolution: None,
        }
    }
}

/// The six window statistics. `std` (sample, n - 1) needs two values;
/// `cv` additionally needs a positive mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mode: f64,
    pub median: f64,
    pub weighted_mean: f64,
    pub std: Option<f64>,
    pub cv: Option<f64>,
    pub ewma: f64,
}

impl WindowStats {
    pub const NAMES: [&'static str; 6] = ["mode", "median", "wmean", "std", "cv", "ewma"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [
            Some(self.mode),
            Some(self.median),
            Some(self.weighted_mean),
            self.std,
            self.cv,
            Some(self.ewma),
        ]
    }
}

/// Statistics of a window given oldest first. Returns `None` for an empty window.
pub fn window_aggregate(series: &[f64], spec: &WindowSpec) -> Option<WindowStats> {
    let n = series.len();
    if n == 0 {
        return None;
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    let weight_total = (n * (n + 1) / 2) as f64;
    let weighted_mean = series
        .iter()
        .enumerate()
        .map(|(i, x)| (i + 1) as f64 * x)
        .sum::<f64>()
        / weight_total;

    let mean = series.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| {
        let ss: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let cv = std.filter(|_| mean > 0.0).map(|s| s / mean);

    let mut ewma = series[0];
    for x in &series[1..] {
        ewma = spec.ewma_lambda * ewma + (1.0 - spec.ewma_lambda) * x;
    }

    Some(WindowStats {
        mode: window_mode(series, spec.resolution),
        median,
        weighted_mean,
        std,
        cv,
        ewma,
    })
}

/// Most frequent bucket; ties go to the bucket seen most recently.
fn window_mode(series: &[f64], resolution: Option<f64>) -> f64 {
    let key = |x: f64| match resolution {
        Some(r) if r > 0.0 => (x / r).round() * r,
        _ => x,
    };
    // bucket -> (count, last index)
    let mut counts: HashMap<u64, (usize, usize)> = HashMap::new();
    for (i, &x) in series.iter().enumerate() {
        let e = counts.entry(key(x).to_bits()).or_insert((0, 0));
        e.0 += 1;
        e.1 = i;
    }
    let (bits, _) = counts
        .into_iter()
        .max_by_key(|(_, (count, last))| (*count, *last))
        .expect("non-empty window");
    f64::from_bits(bits)
}

/// Mean over competitors of each competitor's in-window mean. Competitors
/// with no observation in the window are left out; `None` if nobody is left.
pub fn competitor_aggregate(competitor_prices: &[Vec<Option<f64>>]) -> Option<f64> {
    let means: Vec<f64> = competitor_prices
        .iter()
        .filter_map(|series| {
            let seen: Vec<f64> = series.iter().flatten().copied().collect();
            (!seen.is_empty()).then(|| seen.iter().sum::<f64>() / seen.len() as f64)
        })
        .collect();
    (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weekday {
    #[default]
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub fn index(self) -> u32 {
        self as u32
    }
}

impl FromStr for Weekday {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Weekday::Monday,
            Weekday::Tuesday,
            Weekday::Wednesday,
            Weekday::Thursday,
            Weekday::Friday,
            Weekday::Saturday,
            Weekday::Sunday,
        ];
        let lower = s.trim().to_ascii_lowercase();
        all.into_iter()
            .find(|d| {
                let name = format!("{d:?}").to_ascii_lowercase();
                name == lower || name[..3] == lower
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown weekday `{s}`")))
    }
}

/// `(day_of_week, week_number)` with day 0 falling on `origin`; weeks start on Monday.
pub fn calendar_features(day: u32, origin: Weekday) -> (u32, u32) {
    let shifted = day + origin.index();
    (shifted % 7, shifted / 7)
}

/// Per-level vocabularies for hierarchy paths. Ids start at 1 in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeVocab {
    levels: Vec<BTreeMap<String, u32>>,
}

impl TreeVocab {
    pub fn new() -> Self {
        Self {
            levels: vec![BTreeMap::new(); TREE_DEPTH],
        }
    }

    /// Vocabulary size of each level including the reserved id.
    pub fn sizes(&self) -> [usize; TREE_DEPTH] {
        let mut out = [1; TREE_DEPTH];
        for (o, level) in out.iter_mut().zip(&self.levels) {
            *o += level.len();
        }
        out
    }

    /// Ids for an already-registered path; unseen values map to [`RESERVED_ID`].
    pub fn lookup(&self, path: &[String]) -> [u32; TREE_DEPTH] {
        let mut ids = [RESERVED_ID; TREE_DEPTH];
        for (l, value) in path.iter().take(TREE_DEPTH).enumerate() {
            ids[l] = self
                .levels
                .get(l)
                .and_then(|level| level.get(value))
                .copied()
                .unwrap_or(RESERVED_ID);
        }
        ids
    }
}

/// Truncates `path` to four levels, registering new values, and pads short
/// paths with [`RESERVED_ID`].
pub fn encode_tree(path: &[String], vocab: &mut TreeVocab) -> Result<[u32; TREE_DEPTH]> {
    if path.is_empty() {
        return Err(Error::EmptyInput("hierarchy path"));
    }
    if vocab.levels.len() != TREE_DEPTH {
        *vocab = TreeVocab::new();
    }
    let mut ids = [RESERVED_ID; TREE_DEPTH];
    for (l, value) in path.iter().take(TREE_DEPTH).enumerate() {
        let level = &mut vocab.levels[l];
        let next = level.len() as u32 + 1;
        ids[l] = *level.entry(value.clone()).or_insert(next);
    }
    Ok(ids)
}

/// Reference price for the deviation filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeviationReference {
    /// Mean over all of the product's rows.
    PanelMean,
    /// Mean over the preceding `n` days; rows without history are dropped.
    Trailing(u32),
}

/// Keeps rows whose price differs from the reference by more than `threshold`
/// (relative).
pub fn filter_price_deviation(
    panel: &SalesPanel,
    threshold: f64,
    reference: DeviationReference,
) -> Result<SalesPanel> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidConfig(
            "threshold must be non-negative".into(),
        ));
    }
    let mut keep = Vec::new();
    for rows in panel.by_product().values() {
        match reference {
            DeviationReference::PanelMean => {
                let mean = rows.iter().map(|r| r.price).sum::<f64>() / rows.len() as f64;
                keep.extend(
                    rows.iter()
                        .filter(|r| ((r.price - mean) / mean).abs() > threshold)
                        .map(|r| (*r).clone()),
                );
            }
            DeviationReference::Trailing(window) => {
                for (i, r) in rows.iter().enumerate() {
                    let prior: Vec<f64> = rows[..i]
                        .iter()
                        .filter(|h| h.day + window >= r.day)
                        .map(|h| h.price)
                        .collect();
                    if prior.is_empty() {
                        continue;
                    }
                    let mean = prior.iter().sum::<f64>() / prior.len() as f64;
                    if ((r.price - mean) / mean).abs() > threshold {
                        keep.push((*r).clone());
                    }
                }
            }
        }
    }
    keep.sort_by_key(|r| (r.day, r.product_id));
    SalesPanel::new(keep)
}

/// Smallest positive gap between distinct prices in the panel.
pub fn price_resolution(panel: &SalesPanel) -> Option<f64> {
    let mut prices: Vec<f64> = panel.rows.iter().map(|r| r.price).collect();
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    prices
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .min_by(f64::total_cmp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::PanelRow;

    #[test]
    fn constant_series() {
        let s = window_aggregate(&[2.0, 2.0, 2.0], &WindowSpec::default()).unwrap();
        assert_eq!(s.mode, 2.0);
        assert_eq!(s.median, 2.0);
        assert_eq!(s.weighted_mean, 2.0);
        assert_eq!(s.std, Some(0.0));
        assert_eq!(s.cv, Some(0.0));
        assert_eq!(s.ewma, 2.0);
    }

    #[test]
    fn small_series_by_hand() {
        let s = window_aggregate(&[1.0, 2.0, 2.0, 3.0], &WindowSpec::default()).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mode, 2.0);
        assert!((s.std.unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // weights 1..4
        assert!((s.weighted_mean - 23.0 / 10.0).abs() < 1e-15);
        let e = 0.9 * (0.9 * (0.9 * 1.0 + 0.1 * 2.0) + 0.1 * 2.0) + 0.1 * 3.0;
        assert!((s.ewma - e).abs() < 1e-15);
    }

    #[test]
    fn empty_and_single_windows() {
        assert!(window_aggregate(&[], &WindowSpec::default()).is_none());
        let s = window_aggregate(&[4.0], &WindowSpec::default()).unwrap();
        assert_eq!(s.std, None);
        assert_eq!(s.cv, None);
        assert_eq!(s.mode, 4.0);
    }

    #[test]
    fn mode_ties_prefer_recent_and_respect_resolution() {
        let spec = WindowSpec::default();
        assert_eq!(
            window_aggregate(&[1.0, 2.0, 1.0, 2.0], &spec).unwrap().mode,
            2.0
        );
        assert_eq!(window_aggregate(&[5.0, 1.0, 3.0], &spec).unwrap().mode, 3.0);
        let coarse = WindowSpec {
            resolution: Some(0.5),
            ..spec
        };
        let m = window_aggregate(&[1.01, 0.99, 2.0], &coarse).unwrap().mode;
        assert_eq!(m, 1.0);
    }

    #[test]
    fn cv_needs_positive_mean() {
        let s = window_aggregate(&[-1.0, -3.0], &WindowSpec::default()).unwrap();
        assert!(s.std.is_some());
        assert_eq!(s.cv, None);
    }

    #[test]
    fn competitors() {
        assert_eq!(competitor_aggregate(&[vec![Some(10.0); 3]]), Some(10.0));
        assert_eq!(
            competitor_aggregate(&[vec![Some(10.0); 3], vec![Some(20.0); 3]]),
            Some(15.0)
        );
        let half = vec![None, None, Some(20.0), Some(22.0)];
        assert_eq!(
            competitor_aggregate(&[vec![Some(10.0); 4], half]),
            Some((10.0 + 21.0) / 2.0)
        );
        assert_eq!(competitor_aggregate(&[vec![None, None]]), None);
        assert_eq!(competitor_aggregate(&[]), None);
    }

    #[test]
    fn calendar() {
        assert_eq!(calendar_features(0, Weekday::Monday), (0, 0));
        assert_eq!(calendar_features(7, Weekday::Monday), (0, 1));
        assert_eq!(calendar_features(13, Weekday::Monday), (6, 1));
        assert_eq!(calendar_features(0, Weekday::Sunday), (6, 0));
        assert_eq!(calendar_features(1, Weekday::Sunday), (0, 1));
        assert_eq!("wed".parse::<Weekday>().unwrap(), Weekday::Wednesday);
        assert!("someday".parse::<Weekday>().is_err());
    }

    fn path(levels: &[&str]) -> Vec<String> {
        levels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tree_encoding() {
        let mut vocab = TreeVocab::new();
        let deep = path(&["a", "b", "c", "d", "e", "f", "g", "h"]);
        let ids = encode_tree(&deep, &mut vocab).unwrap();
        assert_eq!(ids, [1, 1, 1, 1]);
        let short = encode_tree(&path(&["a", "x"]), &mut vocab).unwrap();
        assert_eq!(short, [1, 2, RESERVED_ID, RESERVED_ID]);
        assert_eq!(encode_tree(&deep, &mut vocab).unwrap(), ids);
        assert_eq!(vocab.sizes(), [2, 3, 2, 2]);
        assert_eq!(vocab.lookup(&path(&["zz", "x"])), [0, 2, 0, 0]);
        assert!(encode_tree(&[], &mut vocab).is_err());
    }

    fn series_panel(prices: &[f64]) -> SalesPanel {
        let rows = prices
            .iter()
            .enumerate()
            .map(|(d, &p)| PanelRow {
                product_id: 0,
                day: d as u32,
                price: p,
                sales: 1.0,
                availability: 1.0,
                competitor_price: None,
            })
            .collect();
        SalesPanel::new(rows).unwrap()
    }

    #[test]
    fn deviation_filter() {
        let flat = series_panel(&[1.0; 10]);
        let kept = filter_price_deviation(&flat, 0.05, DeviationReference::PanelMean).unwrap();
        assert!(kept.is_empty());

        let mut prices = [1.0; 10];
        prices[6] = 1.1;
        let spiky = series_panel(&prices);
        let kept = filter_price_deviation(&spiky, 0.05, DeviationReference::PanelMean).unwrap();
        assert_eq!(kept.rows.iter().map(|r| r.day).collect::<Vec<_>>(), vec![6]);

        let all = filter_price_deviation(&spiky, 0.0, DeviationReference::PanelMean).unwrap();
        assert_eq!(all.len(), 10);

        let trailing =
            filter_price_deviation(&spiky, 0.05, DeviationReference::Trailing(3)).unwrap();
        assert_eq!(
            trailing.rows.iter().map(|r| r.day).collect::<Vec<_>>(),
            vec![6]
        );
        assert!(filter_price_deviation(&spiky, -1.0, DeviationReference::PanelMean).is_err());
    }

    #[test]
    fn resolution_of_panel() {
        assert_eq!(
            price_resolution(&series_panel(&[1.0, 1.5, 1.25, 1.5])),
            Some(0.25)
        );
        assert_eq!(price_resolution(&series_panel(&[2.0, 2.0])), None);
    }
}
