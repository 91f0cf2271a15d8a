use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grow::{grow, sample_mask, Criterion, SortedColumns, Tree};
use crate::{Error, Matrix, Result};

/// Depth used when no limit is requested.
pub const UNLIMITED_DEPTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each node.
    pub max_features: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: 1.0,
        }
    }
}

impl TreeParams {
    pub(crate) fn depth(&self) -> usize {
        self.max_depth.unwrap_or(UNLIMITED_DEPTH)
    }

    pub(crate) fn features_per_node(&self, d: usize) -> usize {
        ((self.max_features * d as f64).ceil() as usize).clamp(1, d.max(1))
    }
}

/// Multi-output squared-error criterion: gain is the drop in the summed
/// within-node variance across all outputs.
pub(crate) struct Variance<'a> {
    pub y: &'a Matrix,
    pub weights: &'a [f64],
    pub min_samples_leaf: f64,
}

#[derive(Clone)]
pub(crate) struct Moments {
    w: f64,
    sums: Vec<f64>,
}

impl Criterion for Variance<'_> {
    type Stats = Moments;

    fn zero(&self) -> Moments {
        Moments {
            w: 0.0,
            sums: vec![0.0; self.y.cols()],
        }
    }

    fn add(&self, s: &mut Moments, row: usize, weight: f64) {
        s.w += weight;
        for (acc, v) in s.sums.iter_mut().zip(self.y.row(row)) {
            *acc += weight * v;
        }
    }

    fn minus(&self, a: &Moments, b: &Moments) -> Moments {
        Moments {
            w: a.w - b.w,
            sums: a.sums.iter().zip(&b.sums).map(|(x, y)| x - y).collect(),
        }
    }

    fn can_split(&self, s: &Moments, rows: &[u32]) -> bool {
        s.w >= 2.0 * self.min_samples_leaf && !is_pure(self.y, rows)
    }

    fn gain(&self, parent: &Moments, left: &Moments) -> Option<f64> {
        let right_w = parent.w - left.w;
        if left.w < self.min_samples_leaf || right_w < self.min_samples_leaf {
            return None;
        }
        let mut g = 0.0;
        for (&p, &l) in parent.sums.iter().zip(&left.sums) {
            let r = p - l;
            g += l * l / left.w + r * r / right_w - p * p / parent.w;
        }
        Some(g)
    }

    fn accept(&self, gain: f64) -> bool {
        gain > 0.0
    }

    fn leaf_value(&self, s: &Moments, rows: &[u32]) -> Vec<f64> {
        if rows.is_empty() {
            return vec![0.0; self.y.cols()];
        }
        if is_pure(self.y, rows) {
            return self.y.row(rows[0] as usize).to_vec();
        }
        // rounding can push a mean a hair outside its data; keep it inside
        (0..self.y.cols())
            .map(|k| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = self.y.get(r as usize, k);
                    (lo.min(v), hi.max(v))
                });
                (s.sums[k] / s.w).clamp(lo, hi)
            })
            .collect()
    }
}

fn is_pure(y: &Matrix, rows: &[u32]) -> bool {
    match rows.first() {
        None => true,
        Some(&first) => {
            let head = y.row(first as usize);
            rows[1..].iter().all(|&r| y.row(r as usize) == head)
        }
    }
}

pub(crate) fn check_xy(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows, {} target rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if !x.all_finite() || !y.all_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

pub(crate) fn fit_weighted(
    cols: &SortedColumns,
    y: &Matrix,
    weights: &[f64],
    params: &TreeParams,
    rng: &mut impl Rng,
) -> Tree {
    let criterion = Variance {
        y,
        weights,
        min_samples_leaf: params.min_samples_leaf.max(1) as f64,
    };
    let d = cols.d();
    let k = params.features_per_node(d);
    grow(cols, criterion.weights, &criterion, params.depth(), || sample_mask(d, k, rng))
}

/// Fit one regression tree on all rows.
///
/// Splits maximize the summed variance reduction over the columns of `y`;
/// with fewer than `2·min_samples_leaf` rows the tree is a single leaf.
pub fn fit_tree(x: &Matrix, y: &Matrix, params: &TreeParams, rng: &mut impl Rng) -> Result<Tree> {
    check_xy(x, y)?;
    let cols = SortedColumns::new(x);
    let weights = vec![1.0; x.rows()];
    Ok(fit_weighted(&cols, y, &weights, params, rng))
}
