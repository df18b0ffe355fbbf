use nalgebra::{DMatrix, SymmetricEigen};

use super::EmbeddingError;

/// Principal-component basis fitted to a data matrix (rows are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `p × d`; column `k` is the unit loading vector of component `k`.
    pub components: DMatrix<f64>,
    /// Sample variance along each component, nonincreasing.
    pub explained_variance: Vec<f64>,
    pub rank: usize,
}

impl PcaBasis {
    pub fn fit(data: &DMatrix<f64>, d: usize) -> Result<Self, EmbeddingError> {
        let (n, p) = data.shape();
        if d == 0 || d > p {
            return Err(EmbeddingError::Precondition(format!(
                "dimension {d} must be between 1 and the feature count {p}"
            )));
        }
        if n < 2 {
            return Err(EmbeddingError::Precondition(format!("need at least 2 rows, got {n}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite("input matrix".into()));
        }
        let mean: Vec<f64> = (0..p).map(|c| data.column(c).iter().sum::<f64>() / n as f64).collect();
        let mut centered = data.clone();
        for c in 0..p {
            for r in 0..n {
                centered[(r, c)] -= mean[c];
            }
        }
        let cov = (centered.transpose() * &centered) / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let tol = 1e-10 * top.max(f64::MIN_POSITIVE);
        let rank = order.iter().filter(|&&k| eig.eigenvalues[k] > tol).count();
        if d > rank {
            return Err(EmbeddingError::Rank { requested: d, achievable: rank });
        }

        let mut components = DMatrix::zeros(p, d);
        let mut explained_variance = Vec::with_capacity(d);
        for (k, &src) in order.iter().take(d).enumerate() {
            let mut v: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
            // sign convention: the largest-magnitude loading is positive
            let mut lead = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[lead].abs() {
                    lead = i;
                }
            }
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            for (i, x) in v.into_iter().enumerate() {
                components[(i, k)] = x;
            }
            explained_variance.push(eig.eigenvalues[src].max(0.0));
        }
        Ok(Self { mean, components, explained_variance, rank })
    }

    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for c in 0..centered.ncols() {
            for r in 0..centered.nrows() {
                centered[(r, c)] -= self.mean[c];
            }
        }
        centered * &self.components
    }

    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = scores * self.components.transpose();
        for c in 0..out.ncols() {
            for r in 0..out.nrows() {
                out[(r, c)] += self.mean[c];
            }
        }
        out
    }
}

/// Projects a standardized visit matrix onto its top `d` principal components.
pub fn baseline_embed(matrix: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>, EmbeddingError> {
    let basis = PcaBasis::fit(matrix, d)?;
    Ok(basis.transform(matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // correlated columns so the spectrum is not flat
        let base = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let mix = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.3 / (1 + i + j) as f64 });
        base * mix
    }

    #[test]
    fn single_axis_data_aligns_first_component() {
        let data = DMatrix::from_fn(20, 3, |r, c| if c == 1 { r as f64 * 0.7 - 3.0 } else { 0.0 });
        let basis = PcaBasis::fit(&data, 1).unwrap();
        assert!((basis.components[(1, 0)] - 1.0).abs() < 1e-12);
        assert!(basis.components[(0, 0)].abs() < 1e-12);
        assert!(matches!(PcaBasis::fit(&data, 2), Err(EmbeddingError::Rank { requested: 2, achievable: 1 })));
    }

    #[test]
    fn full_basis_reconstructs() {
        let data = random(50, 6, 3);
        let basis = PcaBasis::fit(&data, 6).unwrap();
        let back = basis.inverse_transform(&basis.transform(&data));
        let err = (back - &data).abs().max();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn variances_nonincreasing_and_scores_uncorrelated() {
        let data = random(200, 8, 4);
        let basis = PcaBasis::fit(&data, 5).unwrap();
        assert!(basis.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let scores = basis.transform(&data);
        let n = scores.nrows() as f64;
        let cov = scores.transpose() * &scores / (n - 1.0);
        for i in 0..5 {
            assert!((cov[(i, i)] - basis.explained_variance[i]).abs() < 1e-8);
            for j in 0..5 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn sign_convention_makes_largest_loading_positive() {
        let data = random(60, 5, 9);
        let negated = -&data;
        let a = PcaBasis::fit(&data, 3).unwrap();
        let b = PcaBasis::fit(&negated, 3).unwrap();
        for k in 0..3 {
            let col = a.components.column(k);
            let lead = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(lead > 0.0);
            assert!((a.components.column(k) - b.components.column(k)).abs().max() < 1e-9);
        }
    }

    #[test]
    fn dimension_bounds() {
        let data = random(10, 3, 1);
        assert!(PcaBasis::fit(&data, 0).is_err());
        assert!(PcaBasis::fit(&data, 4).is_err());
    }
}
