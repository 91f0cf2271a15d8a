use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::check_xy;
use super::grow::{grow, sample_mask, Criterion, SortedColumns, Tree};
use crate::rng::stream;
use crate::{Error, Matrix, Result};

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda_reg: f64,
    pub gamma: f64,
    /// Fraction of rows drawn without replacement for each round.
    pub subsample: f64,
    /// Fraction of features available to each round's tree.
    pub colsample: f64,
    /// Smallest hessian sum (row count) allowed in a child.
    #[serde(default = "one")]
    pub min_child_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 6,
            lambda_reg: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparam(m));
        if self.n_rounds == 0 {
            return bad("n_rounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if !(self.lambda_reg >= 0.0) {
            return bad(format!("lambda_reg must be >= 0, got {}", self.lambda_reg));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must be in (0, 1], got {}", self.subsample));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad(format!("colsample must be in (0, 1], got {}", self.colsample));
        }
        if !(self.min_child_weight >= 0.0) {
            return bad(format!("min_child_weight must be >= 0, got {}", self.min_child_weight));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub version: u32,
    pub params: GbtParams,
    pub seed: u64,
    /// Training mean of each horizon.
    pub base_score: Vec<f64>,
    /// Boosted trees of each horizon, in round order.
    pub trees: Vec<Vec<Tree>>,
}

/// Second-order gain for squared loss, where every hessian is 1.
struct Newton<'a> {
    grad: &'a [f64],
    lambda: f64,
    gamma: f64,
    min_child_weight: f64,
}

#[derive(Clone)]
struct GradSums {
    g: f64,
    h: f64,
}

impl Criterion for Newton<'_> {
    type Stats = GradSums;

    fn zero(&self) -> GradSums {
        GradSums { g: 0.0, h: 0.0 }
    }

    fn add(&self, s: &mut GradSums, row: usize, weight: f64) {
        s.g += weight * self.grad[row];
        s.h += weight;
    }

    fn minus(&self, a: &GradSums, b: &GradSums) -> GradSums {
        GradSums {
            g: a.g - b.g,
            h: a.h - b.h,
        }
    }

    fn can_split(&self, s: &GradSums, rows: &[u32]) -> bool {
        rows.len() >= 2 && s.h >= 2.0 * self.min_child_weight
    }

    fn gain(&self, parent: &GradSums, left: &GradSums) -> Option<f64> {
        let right = self.minus(parent, left);
        if left.h < self.min_child_weight || right.h < self.min_child_weight {
            return None;
        }
        let score = |s: &GradSums| s.g * s.g / (s.h + self.lambda);
        Some(0.5 * (score(left) + score(&right) - score(parent)) - self.gamma)
    }

    fn accept(&self, gain: f64) -> bool {
        gain > 0.0
    }

    fn leaf_value(&self, s: &GradSums, _rows: &[u32]) -> Vec<f64> {
        vec![-s.g / (s.h + self.lambda)]
    }
}

/// Gradient-boosted trees, one independent scalar booster per column of `y`.
pub fn gbt_fit(x: &Matrix, y: &Matrix, params: &GbtParams, seed: u64) -> Result<GbtModel> {
    params.validate()?;
    check_xy(x, y)?;
    let cols = SortedColumns::new(x);
    let per_horizon: Vec<(f64, Vec<Tree>)> = (0..y.cols())
        .into_par_iter()
        .map(|h| boost(&cols, x, &y.column(h), params, seed, h))
        .collect();
    let (base_score, trees) = per_horizon.into_iter().unzip();
    Ok(GbtModel {
        version: SNAPSHOT_VERSION,
        params: *params,
        seed,
        base_score,
        trees,
    })
}

fn boost(cols: &SortedColumns, x: &Matrix, y: &[f64], p: &GbtParams, seed: u64, h: usize) -> (f64, Vec<Tree>) {
    let n = y.len();
    let d = cols.d();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![base; n];
    let mut grad = vec![0.0; n];
    let n_rows = ((p.subsample * n as f64).round() as usize).clamp(1, n);
    let n_feats = ((p.colsample * d as f64).ceil() as usize).clamp(1, d.max(1));
    let mut trees = Vec::with_capacity(p.n_rounds);
    for round in 0..p.n_rounds {
        let mut rng = stream(seed, &[h as u64, round as u64]);
        let weights: Vec<f64> = sample_mask(n, n_rows, &mut rng)
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect();
        let mask = sample_mask(d, n_feats, &mut rng);
        for i in 0..n {
            grad[i] = f[i] - y[i];
        }
        let criterion = Newton {
            grad: &grad,
            lambda: p.lambda_reg,
            gamma: p.gamma,
            min_child_weight: p.min_child_weight,
        };
        let tree = grow(cols, &weights, &criterion, p.max_depth, || mask.clone());
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += p.learning_rate * tree.predict(x.row(i))[0];
        }
        trees.push(tree);
    }
    (base, trees)
}

pub fn gbt_predict(model: &GbtModel, x: &[f64]) -> Vec<f64> {
    model.predict(x)
}

impl GbtModel {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.predict_rounds(x, usize::MAX)
    }

    /// Prediction using only the first `rounds` trees of each horizon.
    pub fn predict_rounds(&self, x: &[f64], rounds: usize) -> Vec<f64> {
        let eta = self.params.learning_rate;
        self.base_score
            .iter()
            .zip(&self.trees)
            .map(|(&base, trees)| {
                let mut f = base;
                for t in trees.iter().take(rounds) {
                    f += eta * t.predict(x)[0];
                }
                f
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidParam(format!("unsupported GBT snapshot version {}", m.version)));
        }
        Ok(m)
    }
}
