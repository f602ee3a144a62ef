use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value threshold of the rank check.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    /// `RSS / (n - p)`.
    pub sigma2: f64,
    /// `sigma2 * (X'X)^-1`.
    pub covariance: DMatrix<f64>,
    pub rss: f64,
    pub n_obs: usize,
}

impl OlsFit {
    pub fn std_error(&self, column: usize) -> f64 {
        self.covariance[(column, column)].max(0.0).sqrt()
    }
}

/// Price-coefficient variance written the Frisch-Waugh-Lovell way.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaVariance {
    /// `sigma2 / sum(p_res^2)`.
    pub var_beta: f64,
    /// R^2 of the price column regressed on the other columns.
    pub r_squared_price: f64,
}

/// Columns involved in a near-dependency, or `None` if `x` has full column rank.
fn dependent_columns(x: &DMatrix<f64>) -> Option<Vec<usize>> {
    let p = x.ncols();
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let svd = scaled.svd(false, true);
    let s = &svd.singular_values;
    let max = s.max();
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut involved = vec![false; p];
    let mut deficient = false;
    for (k, &sk) in s.iter().enumerate() {
        if max == 0.0 || sk <= RANK_TOLERANCE * max {
            deficient = true;
            for (c, flag) in involved.iter_mut().enumerate() {
                if v_t[(k, c)].abs() > 1e-6 {
                    *flag = true;
                }
            }
        }
    }
    deficient.then(|| (0..p).filter(|&c| involved[c]).collect())
}

/// Least-squares coefficients through a QR factorization, plus `R^-1`.
fn qr_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient {
            columns: (0..p).collect(),
        })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient {
            columns: (0..p).collect(),
        })?;
    Ok((coef, r_inv))
}

fn check_shapes(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dims("response rows", x.nrows(), y.len()));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::dims(
            "observations beyond regressors",
            x.ncols() + 1,
            x.nrows(),
        ));
    }
    if let Some(row) = x.row_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite {
            what: "design matrix".into(),
            row,
        });
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "response".into(),
            row,
        });
    }
    Ok(())
}

/// Ordinary least squares with a rank check on unit-norm columns.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    check_shapes(x, y)?;
    if let Some(columns) = dependent_columns(x) {
        return Err(Error::RankDeficient { columns });
    }
    let (coefficients, r_inv) = qr_solve(x, y)?;
    let resid = y - x * &coefficients;
    let rss = resid.norm_squared();
    let n = x.nrows();
    let sigma2 = rss / (n - x.ncols()) as f64;
    let mut covariance = &r_inv * r_inv.transpose() * sigma2;
    // exact symmetry
    for i in 0..covariance.nrows() {
        for j in 0..i {
            let v = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = v;
            covariance[(j, i)] = v;
        }
    }
    Ok(OlsFit {
        coefficients,
        sigma2,
        covariance,
        rss,
        n_obs: n,
    })
}

fn without_column(x: &DMatrix<f64>, column: usize) -> DMatrix<f64> {
    x.clone().remove_column(column)
}

/// Residual of `v` after projecting on the columns of `others`.
fn residualize(others: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if others.ncols() == 0 {
        return Ok(v.clone());
    }
    if let Some(columns) = dependent_columns(others) {
        return Err(Error::RankDeficient { columns });
    }
    let (coef, _) = qr_solve(others, v)?;
    Ok(v - others * coef)
}

fn price_residual(x: &DMatrix<f64>, price_column: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if price_column >= x.ncols() {
        return Err(Error::dims("price column", x.ncols(), price_column));
    }
    let p: DVector<f64> = x.column(price_column).into_owned();
    let (lo, hi) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if lo == hi {
        return Err(Error::DegenerateVariance("price column is constant".into()));
    }
    let others = without_column(x, price_column);
    let p_res = residualize(&others, &p)?;
    let scale = p.norm_squared();
    if p_res.norm_squared() <= 1e-24 * scale {
        return Err(Error::PerfectCollinearity);
    }
    Ok((p_res, others))
}

/// Price-coefficient variance from the residualized price column, with the
/// price column's R^2 on the remaining covariates.
pub fn lemma_variance(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    price_column: usize,
) -> Result<LemmaVariance> {
    let fit = ols_fit(x, y)?;
    let (p_res, _) = price_residual(x, price_column)?;
    let p = x.column(price_column);
    let mean = p.mean();
    let tss: f64 = p.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res = p_res.norm_squared();
    let r_squared_price = 1.0 - ss_res / tss;
    Ok(LemmaVariance {
        var_beta: fit.sigma2 / ss_res,
        r_squared_price,
    })
}

/// Price coefficient from regressing the residualized response on the
/// residualized price column.
pub fn fwl_fit(x: &DMatrix<f64>, y: &DVector<f64>, price_column: usize) -> Result<f64> {
    check_shapes(x, y)?;
    let (p_res, others) = price_residual(x, price_column)?;
    let y_res = residualize(&others, y)?;
    Ok(p_res.dot(&y_res) / p_res.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(6, |i, _| 2.0 * i as f64);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!(fit.sigma2 < 1e-24);
    }

    #[test]
    fn orthonormal_design_has_scalar_covariance() {
        // columns of a 4x4 Hadamard matrix scaled to unit norm
        let h = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 4.0]);
        let fit = ols_fit(&h, &y).unwrap();
        let expected = DMatrix::identity(2, 2) * fit.sigma2;
        assert!((fit.covariance - expected).amax() < 1e-14);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let x = DMatrix::from_fn(8, 4, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            2 => (i * i) as f64,
            _ => 3.0 * i as f64 + 2.0,
        });
        let y = DVector::from_fn(8, |i, _| i as f64);
        match ols_fit(&x, &y) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![0, 1, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let y = DVector::from_element(2, 1.0);
        assert!(matches!(
            ols_fit(&x, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn orthogonal_centered_price() {
        // price is centered and orthogonal to the intercept and to z
        let p = [-1.0, 1.0, -1.0, 1.0, -2.0, 2.0];
        let z = [1.0, 1.0, -1.0, -1.0, 0.0, 0.0];
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => p[i],
            _ => z[i],
        });
        let y = DVector::from_vec(vec![0.3, 1.1, -0.4, 2.0, 0.7, -1.2]);
        let lemma = lemma_variance(&x, &y, 1).unwrap();
        let fit = ols_fit(&x, &y).unwrap();
        let ss: f64 = p.iter().map(|v| v * v).sum();
        assert!(lemma.r_squared_price.abs() < 1e-14);
        assert!((lemma.var_beta - fit.sigma2 / ss).abs() < 1e-14);
    }

    #[test]
    fn single_covariate_slope() {
        let p = DVector::from_vec(vec![1.0, 2.0, 4.0, 7.0]);
        let y_raw = DVector::from_vec(vec![2.0, 1.0, 3.0, 8.0]);
        let y = y_raw.add_scalar(-y_raw.mean());
        let x = DMatrix::from_column_slice(4, 1, p.as_slice());
        let pm = p.mean();
        let slope = p
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - pm) * b)
            .sum::<f64>()
            / p.iter().map(|a| (a - pm) * (a - pm)).sum::<f64>();
        // without an intercept the FWL slope is the uncentered ratio
        let uncentered = p.dot(&y) / p.norm_squared();
        let b = fwl_fit(&x, &y, 0).unwrap();
        assert!((b - uncentered).abs() < 1e-14);
        let with_intercept = DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { p[i] });
        assert!((fwl_fit(&with_intercept, &y, 1).unwrap() - slope).abs() < 1e-14);
    }

    #[test]
    fn degenerate_price() {
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { i as f64 } else { 3.0 });
        let y = DVector::from_fn(5, |i, _| i as f64 * 0.5);
        assert!(matches!(
            fwl_fit(&x, &y, 1),
            Err(Error::DegenerateVariance(_))
        ));
        let collinear = DMatrix::from_fn(5, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64 + 1.0,
        });
        assert!(matches!(
            fwl_fit(&collinear, &y, 2),
            Err(Error::PerfectCollinearity)
        ));
    }
}
