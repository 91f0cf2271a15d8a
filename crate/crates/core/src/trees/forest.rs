use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{check_xy, fit_weighted, TreeParams};
use super::grow::{SortedColumns, Tree};
use crate::rng::derive_seed;
use crate::{Error, Matrix, Result};

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: f64,
    /// Draw an n-sized resample with replacement for each tree. Turning this
    /// off trains every tree on the full sample.
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

fn yes() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: 1.0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidHyperparam("n_trees must be >= 1".into()));
        }
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return Err(Error::InvalidHyperparam(format!(
                "max_features must be in (0, 1], got {}",
                self.max_features
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidHyperparam("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub params: ForestParams,
    /// Seed of each tree's resample and feature draws.
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<Tree>,
}

/// Bagged multi-output regression forest.
pub fn rf_fit(x: &Matrix, y: &Matrix, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    check_xy(x, y)?;
    let n = x.rows();
    let cols = SortedColumns::new(x);
    let tree_params = params.tree_params();
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|i| derive_seed(seed, &[i])).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            fit_weighted(&cols, y, &weights, &tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        version: SNAPSHOT_VERSION,
        params: *params,
        tree_seeds,
        trees,
    })
}

pub fn rf_predict(model: &ForestModel, x: &[f64]) -> Vec<f64> {
    model.predict(x)
}

impl ForestModel {
    /// Mean of the tree outputs. Each output's tree values are summed in
    /// sorted order, so the result does not depend on tree order.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let leaves: Vec<&[f64]> = self.trees.iter().map(|t| t.predict(x)).collect();
        let k = leaves.first().map_or(0, |l| l.len());
        let mut buf = Vec::with_capacity(leaves.len());
        (0..k)
            .map(|j| {
                buf.clear();
                buf.extend(leaves.iter().map(|l| l[j]));
                buf.sort_by(f64::total_cmp);
                let (lo, hi) = (buf[0], buf[buf.len() - 1]);
                if lo == hi {
                    return lo;
                }
                (buf.iter().sum::<f64>() / buf.len() as f64).clamp(lo, hi)
            })
            .collect()
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.predict(r)).collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, 0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidParam(format!("unsupported forest snapshot version {}", m.version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::trees::fit_tree;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(n: usize, d: usize, k: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = stream(seed, &[]);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let rows: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|r| {
                (0..k)
                    .map(|h| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        r[h % d] * 3.0 + (r[0] > 0.0) as u8 as f64 * 5.0 + z
                    })
                    .collect()
            })
            .collect();
        (x, Matrix::from_rows(&rows).unwrap())
    }

    #[test]
    fn single_unbagged_tree_matches_cart() {
        let (x, y) = problem(60, 4, 3, 1);
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(5),
            bootstrap: false,
            ..Default::default()
        };
        let f = rf_fit(&x, &y, &params, 9).unwrap();
        let t = fit_tree(&x, &y, &params.tree_params(), &mut stream(123, &[])).unwrap();
        for r in x.iter_rows() {
            assert_eq!(f.predict(r), t.predict(r));
        }
    }

    #[test]
    fn constant_targets_stay_constant() {
        let (x, _) = problem(40, 3, 2, 2);
        let y = Matrix::from_rows(&vec![vec![0.1, 7.3]; 40]).unwrap();
        for seed in 0..5 {
            let params = ForestParams {
                n_trees: 7,
                max_features: 0.5,
                ..Default::default()
            };
            let f = rf_fit(&x, &y, &params, seed).unwrap();
            assert_eq!(f.predict(&[3.0, -1.0, 0.0]), vec![0.1, 7.3]);
        }
    }

    #[test]
    fn same_seed_same_snapshot() {
        let (x, y) = problem(80, 5, 2, 3);
        let params = ForestParams {
            n_trees: 10,
            max_features: 0.6,
            max_depth: Some(6),
            ..Default::default()
        };
        let a = rf_fit(&x, &y, &params, 42).unwrap().to_json().unwrap();
        let b = rf_fit(&x, &y, &params, 42).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = rf_fit(&x, &y, &params, 43).unwrap().to_json().unwrap();
        assert_ne!(a, c);
        let back = ForestModel::from_json(&a).unwrap();
        assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let (x, y) = problem(10, 2, 1, 4);
        for mf in [0.0, 1.5, -0.2, f64::NAN] {
            let p = ForestParams {
                max_features: mf,
                ..Default::default()
            };
            assert!(matches!(rf_fit(&x, &y, &p, 0), Err(Error::InvalidHyperparam(_))));
        }
        let p = ForestParams {
            n_trees: 0,
            ..Default::default()
        };
        assert!(matches!(rf_fit(&x, &y, &p, 0), Err(Error::InvalidHyperparam(_))));
    }
}
