use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Encoded product characteristics and their rank-k factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductSpace {
    pub encoded: DMatrix<f64>,
    /// `products x k`: left singular vectors scaled by singular values.
    pub coordinates: DMatrix<f64>,
    /// `features x k`: right singular vectors.
    pub components: DMatrix<f64>,
    /// Retained singular values, descending.
    pub singular_values: DVector<f64>,
    /// Sum of squared discarded singular values.
    pub discarded_energy: f64,
}

impl ProductSpace {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.coordinates * self.components.transpose()
    }
}

/// One-hot columns for every hierarchy level (values sorted within a level),
/// followed by z-scored numeric columns. Constant numeric columns become zeros.
pub fn encode_product_space(
    numeric: &DMatrix<f64>,
    hierarchy: Option<&[Vec<String>]>,
) -> Result<DMatrix<f64>> {
    let n = numeric.nrows();
    let mut blocks: Vec<DVector<f64>> = Vec::new();
    if let Some(paths) = hierarchy {
        if paths.len() != n {
            return Err(Error::dims("hierarchy paths", n, paths.len()));
        }
        let depth = paths.iter().map(Vec::len).max().unwrap_or(0);
        for level in 0..depth {
            let values: BTreeSet<&str> = paths
                .iter()
                .filter_map(|p| p.get(level).map(String::as_str))
                .collect();
            for v in values {
                blocks.push(DVector::from_fn(n, |i, _| {
                    f64::from(paths[i].get(level).map(String::as_str) == Some(v))
                }));
            }
        }
    }
    for col in numeric.column_iter() {
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        blocks.push(DVector::from_fn(n, |i, _| {
            if sd > 0.0 {
                (col[i] - mean) / sd
            } else {
                0.0
            }
        }));
    }
    if blocks.is_empty() {
        return Err(Error::EmptyInput("product characteristics"));
    }
    Ok(DMatrix::from_columns(&blocks))
}

/// Rank-k truncated SVD from the eigen-decomposition of the smaller Gram matrix.
pub fn factorize(matrix: &DMatrix<f64>, k: usize) -> Result<ProductSpace> {
    let (rows, cols) = matrix.shape();
    let max_k = rows.min(cols);
    if k == 0 || k > max_k {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must lie in 1..={max_k} for a {rows}x{cols} matrix"
        )));
    }
    let by_rows = rows <= cols;
    let gram = if by_rows {
        matrix * matrix.transpose()
    } else {
        matrix.transpose() * matrix
    };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();

    let mut coordinates = DMatrix::zeros(rows, k);
    let mut components = DMatrix::zeros(cols, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let vec = eig.eigenvectors.column(i);
        let s = sigma[c];
        if by_rows {
            // vec is a left singular vector u; v = X'u / s
            coordinates.set_column(c, &(vec * s));
            if s > 0.0 {
                components.set_column(c, &(matrix.transpose() * vec / s));
            }
        } else {
            components.set_column(c, &vec);
            coordinates.set_column(c, &(matrix * vec));
        }
    }
    let discarded_energy = sigma[k..].iter().map(|s| s * s).sum();
    Ok(ProductSpace {
        encoded: matrix.clone(),
        coordinates,
        components,
        singular_values: DVector::from_iterator(k, sigma.into_iter().take(k)),
        discarded_energy,
    })
}

/// Euclidean distance between every pair of rows.
pub fn pairwise_distances(coordinates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = coordinates.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (coordinates.row(i) - coordinates.row(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Encodes, factorizes to `min(k, rows, cols)` dimensions and returns the
/// space with its distance matrix.
pub fn product_distances(
    numeric: &DMatrix<f64>,
    hierarchy: Option<&[Vec<String>]>,
    k: usize,
) -> Result<(ProductSpace, DMatrix<f64>)> {
    let encoded = encode_product_space(numeric, hierarchy)?;
    let k = k.min(encoded.nrows()).min(encoded.ncols());
    let space = factorize(&encoded, k)?;
    let d = pairwise_distances(&space.coordinates);
    Ok((space, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_products_encode_identically() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let paths = vec![vec!["a".to_string()], vec!["a".to_string()]];
        let e = encode_product_space(&x, Some(&paths)).unwrap();
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn one_hot_width() {
        let x = DMatrix::zeros(4, 0);
        let paths: Vec<Vec<String>> = ["b", "a", "c", "a"]
            .iter()
            .map(|s| vec![s.to_string()])
            .collect();
        let e = encode_product_space(&x, Some(&paths)).unwrap();
        assert_eq!(e.ncols(), 3);
        // sorted: a, b, c
        assert_eq!(
            e.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0]
        );
        assert!(e.row_iter().all(|r| r.sum() == 1.0));
    }

    #[test]
    fn rank_two_reconstructs_exactly() {
        let a = DMatrix::from_fn(6, 2, |i, j| (i + 2 * j) as f64 - 2.5);
        let b = DMatrix::from_fn(2, 5, |i, j| ((i * 3 + j) % 4) as f64 + 0.5);
        let m = &a * &b;
        for k in [2, 5] {
            let s = factorize(&m, k).unwrap();
            assert!((s.reconstruct() - &m).norm() < 1e-10, "k {k}");
        }
        let tall = m.transpose();
        let s = factorize(&tall, 2).unwrap();
        assert!((s.reconstruct() - &tall).norm() < 1e-10);
        assert!(factorize(&m, 6).is_err());
        assert!(factorize(&m, 0).is_err());
    }

    #[test]
    fn three_four_five() {
        let c = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
        let d = pairwise_distances(&c);
        assert_eq!(d[(0, 1)], 5.0);
        assert_eq!(d[(1, 0)], 5.0);
        assert_eq!(d[(0, 2)], 0.0);
    }
}
