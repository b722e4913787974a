use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal subspace retaining a target fraction of the training variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained components, one orthonormal row of length `m` each.
    pub components: Vec<Vec<f64>>,
    /// All eigenvalues of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Keeps the smallest number of leading components whose cumulative
    /// explained variance reaches `variance_fraction` (at least one).
    pub fn fit(x: ArrayView2<'_, f64>, variance_fraction: f64) -> Result<Self> {
        let (n, m) = x.dim();
        if n == 0 || m == 0 {
            return Err(Error::InsufficientData {
                what: "rows for PCA",
                need: 1,
                have: n,
            });
        }
        if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "variance fraction must lie in (0, 1], got {variance_fraction}"
            )));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n.saturating_sub(1).max(1)) as f64;

        let eig = SymmetricEigen::new(DMatrix::from_fn(m, m, |i, j| cov[[i, j]]));
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

        let q = retained_count(&eigenvalues, variance_fraction);
        let components = order[..q]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            components,
            eigenvalues,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Fraction of total variance carried by the retained components.
    pub fn explained_fraction(&self) -> f64 {
        explained(&self.eigenvalues, self.n_components())
    }

    fn component_matrix(&self) -> Array2<f64> {
        let m = self.mean.len();
        Array2::from_shape_fn((self.n_components(), m), |(k, j)| self.components[k][j])
    }

    /// Projection of each row onto the principal subspace, mapped back.
    pub fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        let u = self.component_matrix();
        let centered = &x - &mean;
        centered.dot(&u.t()).dot(&u) + &mean
    }

    pub fn reconstruct_row(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.reconstruct(v.insert_axis(Axis(0))).row(0).to_owned()
    }
}

fn explained(eigenvalues: &[f64], q: usize) -> f64 {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 1.0;
    }
    eigenvalues[..q].iter().sum::<f64>() / total
}

fn retained_count(eigenvalues: &[f64], fraction: f64) -> usize {
    (1..=eigenvalues.len())
        .find(|&q| explained(eigenvalues, q) >= fraction)
        .unwrap_or(eigenvalues.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rank_one(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 2), |(t, c)| {
            let base = (t as f64 * 0.37).sin() + 0.1 * t as f64;
            if c == 0 {
                base
            } else {
                2.0 * base
            }
        })
    }

    #[test]
    fn rank_one_single_component_exact() {
        let x = rank_one(50);
        let pca = PcaModel::fit(x.view(), 0.9).unwrap();
        assert_eq!(pca.n_components(), 1);
        let r = pca.reconstruct(x.view());
        let max_err = (&x - &r).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_err <= 1e-10, "{max_err}");
    }

    #[test]
    fn components_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((200, 6), |(_, c)| rng.random_range(-1.0..1.0) * (c + 1) as f64);
        let pca = PcaModel::fit(x.view(), 0.99).unwrap();
        let u = pca.component_matrix();
        let gram = u.dot(&u.t());
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - target).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn retained_count_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((300, 5), |(_, c)| rng.random_range(-1.0..1.0) * (5 - c) as f64);
        let pca = PcaModel::fit(x.view(), 0.9).unwrap();
        let q = pca.n_components();
        assert!(pca.explained_fraction() >= 0.9);
        assert!(q == 1 || explained(&pca.eigenvalues, q - 1) < 0.9);
    }

    #[test]
    fn constant_data_reconstructs_mean() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let pca = PcaModel::fit(x.view(), 0.9).unwrap();
        assert_eq!(pca.n_components(), 1);
        let r = pca.reconstruct_row(array![1.0, 2.0].view());
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }
}
