use serde::{Deserialize, Serialize};

/// `z = (ln(x + offset) - mean) / std`. Columns whose minimum is not positive
/// get `offset = 1 - min`, so the smallest value maps to `ln 1 = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub offset: f64,
    pub mean: f64,
    pub std: f64,
    /// Zero variance after the log: values are only centered.
    pub degenerate: bool,
}

impl ColumnScaling {
    fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                offset: 0.0,
                mean: 0.0,
                std: 1.0,
                degenerate: true,
            };
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let offset = if min <= 0.0 { 1.0 - min } else { 0.0 };
        let logs: Vec<f64> = values.iter().map(|x| (x + offset).ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let degenerate = !(std > 1e-12 * mean.abs().max(1.0));
        Self {
            offset,
            mean,
            std: if degenerate { 1.0 } else { std },
            degenerate,
        }
    }

    /// `None` when `x + offset` is not positive (outside the fitted domain).
    pub fn apply(&self, x: f64) -> Option<f64> {
        let shifted = x + self.offset;
        (shifted > 0.0).then(|| (shifted.ln() - self.mean) / self.std)
    }

    pub fn invert(&self, z: f64) -> f64 {
        (z * self.std + self.mean).exp() - self.offset
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: Vec<ColumnScaling>,
}

impl NormStats {
    /// Applies the stored scaling column by column; absent values stay absent.
    pub fn apply(&self, columns: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
        columns
            .iter()
            .zip(&self.columns)
            .map(|(col, s)| col.iter().map(|v| v.and_then(|x| s.apply(x))).collect())
            .collect()
    }

    pub fn invert(&self, columns: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
        columns
            .iter()
            .zip(&self.columns)
            .map(|(col, s)| col.iter().map(|v| v.map(|z| s.invert(z))).collect())
            .collect()
    }
}

/// Log transform and z-score each column (population standard deviation),
/// ignoring absent entries when fitting.
pub fn normalize_log(columns: &[Vec<Option<f64>>]) -> (Vec<Vec<Option<f64>>>, NormStats) {
    let stats = NormStats {
        columns: columns
            .iter()
            .map(|col| ColumnScaling::fit(&col.iter().flatten().copied().collect::<Vec<_>>()))
            .collect(),
    };
    (stats.apply(columns), stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Vec<Option<f64>> {
        values.iter().copied().map(Some).collect()
    }

    #[test]
    fn constant_exponential_column_is_zero() {
        let e2 = 2f64.exp();
        let (out, stats) = normalize_log(&[col(&[e2, e2, e2])]);
        assert!(stats.columns[0].degenerate);
        assert!(out[0].iter().all(|v| v.unwrap().abs() < 1e-15));
    }

    #[test]
    fn round_trip_and_moments() {
        let raw = vec![
            col(&[0.5, 3.0, 12.0, 7.5, 1.0]),
            col(&[-2.0, 0.0, 4.0, 1.0, 9.0]),
            vec![Some(1.0), None, Some(4.0), Some(2.0), None],
        ];
        let (out, stats) = normalize_log(&raw);
        assert_eq!(stats.columns[1].offset, 3.0);
        let back = stats.invert(&out);
        for (a, b) in raw.iter().flatten().zip(back.iter().flatten()) {
            match (a, b) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("presence changed"),
            }
        }
        for c in &out {
            let v: Vec<f64> = c.iter().flatten().copied().collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-10);
            assert!((sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_domain_is_absent() {
        let (_, stats) = normalize_log(&[col(&[1.0, 2.0])]);
        assert_eq!(stats.columns[0].apply(-1.0), None);
    }
}
