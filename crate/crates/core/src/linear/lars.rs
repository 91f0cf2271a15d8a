use serde::{Deserialize, Serialize};

use super::cov::CovSystem;
use crate::{Error, Matrix, Result};

/// Relative pivot below which a new active column is treated as collinear.
const RANK_TOL: f64 = 1e-10;
const EPS_DEN: f64 = 1e-12;
const REENTRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsKnot {
    pub lambda: f64,
    /// Active set after the event at this knot, ascending.
    pub active: Vec<usize>,
    pub beta: Vec<f64>,
    /// Residual sum of squares `‖yc − Xc β‖²`.
    pub rss: f64,
}

impl LarsKnot {
    pub fn df(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsPath {
    /// Knots in strictly decreasing `λ`.
    pub knots: Vec<LarsKnot>,
    /// AIC of each knot.
    pub aic: Vec<f64>,
    /// Set when an entering column was collinear with the active set and the
    /// path was cut short there.
    pub truncated: bool,
}

/// `n ln(RSS/n) + 2 df`.
pub fn aic(rss: f64, n: usize, df: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).max(f64::MIN_POSITIVE).ln() + 2.0 * df as f64
}

/// Index of the knot with the lowest AIC; ties go to the larger `λ`.
pub fn select_knot_aic(path: &LarsPath, n: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, k) in path.knots.iter().enumerate() {
        let a = aic(k.rss, n, k.df());
        if best.is_none_or(|(_, b)| a < b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

pub fn select_lambda_aic(path: &LarsPath, n: usize) -> Result<f64> {
    select_knot_aic(path, n)
        .map(|i| path.knots[i].lambda)
        .ok_or(Error::EmptyInput)
}

pub fn lars_path(x: &Matrix, y: &[f64], max_knots: usize) -> Result<LarsPath> {
    if y.len() != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    let sys = CovSystem::single(x, y)?;
    lars_path_cov(&sys, 0, max_knots)
}

enum Event {
    Enter(usize, f64),
    Drop(usize),
    End,
}

/// LASSO-modified least-angle regression on precomputed moments.
///
/// Penalties are in the `(1/n)` scaling used by the coordinate-descent
/// solver, so the first knot sits at `max_j |x_jᵀy|/n` and every knot's
/// coefficients solve the LASSO at that knot's `λ`.
pub fn lars_path_cov(sys: &CovSystem, target: usize, max_knots: usize) -> Result<LarsPath> {
    let d = sys.d;
    if d == 0 {
        return Err(Error::InvalidParam("LARS needs at least one feature".into()));
    }
    if max_knots == 0 {
        return Err(Error::InvalidParam("max_knots must be at least 1".into()));
    }
    let n = sys.n;
    let mut beta = vec![0.0; d];
    let mut c = sys.xty[target].clone();
    let (first, lambda0) = c
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let rss0 = n as f64 * sys.yty[target];

    let gmax = (0..d).map(|j| sys.g(j, j)).fold(0.0, f64::max);
    let mut knots = Vec::new();
    if lambda0 <= 1e-13 * (sys.yty[target] * gmax).sqrt() || sys.g(first, first) <= 0.0 {
        knots.push(LarsKnot {
            lambda: lambda0,
            active: Vec::new(),
            beta,
            rss: rss0,
        });
        return Ok(finish(knots, n, false));
    }

    let mut chol = ActiveCholesky::default();
    chol.push(&[], sys.g(first, first));
    let mut active = vec![first];
    let mut signs = vec![c[first].signum()];
    let mut in_active = vec![false; d];
    in_active[first] = true;
    let mut lambda = lambda0;
    let mut truncated = false;
    let mut just_dropped: Option<usize> = None;
    knots.push(LarsKnot {
        lambda,
        active: vec![first],
        beta: beta.clone(),
        rss: rss0,
    });

    while knots.len() < max_knots {
        let w = chol.solve(&signs);
        let mut a = vec![0.0; d];
        for (k, &j) in active.iter().enumerate() {
            for (ai, g) in a.iter_mut().zip(sys.gram_row(j)) {
                *ai += g * w[k];
            }
        }

        let mut gamma = lambda;
        let mut event = Event::End;
        for j in 0..d {
            if in_active[j] {
                continue;
            }
            // a variable dropped at the last knot sits exactly at |c_j| = λ;
            // only a genuine later crossing may bring it back
            let floor = if Some(j) == just_dropped { REENTRY_TOL * lambda } else { 0.0 };
            let (cj, aj) = (c[j], a[j]);
            if 1.0 - aj > EPS_DEN {
                let g = (lambda - cj) / (1.0 - aj);
                if g > floor && g < gamma {
                    gamma = g;
                    event = Event::Enter(j, 1.0);
                }
            }
            if 1.0 + aj > EPS_DEN {
                let g = (lambda + cj) / (1.0 + aj);
                if g > floor && g < gamma {
                    gamma = g;
                    event = Event::Enter(j, -1.0);
                }
            }
        }
        for (k, &j) in active.iter().enumerate() {
            if w[k] != 0.0 {
                let g = -beta[j] / w[k];
                if g > 0.0 && g < gamma {
                    gamma = g;
                    event = Event::Drop(k);
                }
            }
        }

        for (k, &j) in active.iter().enumerate() {
            beta[j] += gamma * w[k];
        }
        lambda -= gamma;

        let mut stop = false;
        match event {
            Event::Drop(k) => {
                let j = active.remove(k);
                signs.remove(k);
                chol.remove(k);
                in_active[j] = false;
                beta[j] = 0.0;
                just_dropped = Some(j);
            }
            Event::Enter(j, sign) => {
                just_dropped = None;
                let col: Vec<f64> = active.iter().map(|&i| sys.g(i, j)).collect();
                if chol.push(&col, sys.g(j, j)) {
                    active.push(j);
                    signs.push(sign);
                    in_active[j] = true;
                } else {
                    truncated = true;
                    stop = true;
                }
            }
            Event::End => {
                lambda = 0.0;
                stop = true;
            }
        }
        c = sys.correlations(target, &beta);

        let mut sorted = active.clone();
        sorted.sort_unstable();
        knots.push(LarsKnot {
            lambda,
            active: sorted,
            beta: beta.clone(),
            rss: n as f64 * sys.mse(target, &beta),
        });
        if stop || lambda <= 0.0 {
            break;
        }
    }
    Ok(finish(knots, n, truncated))
}

fn finish(knots: Vec<LarsKnot>, n: usize, truncated: bool) -> LarsPath {
    let aic = knots.iter().map(|k| aic(k.rss, n, k.df())).collect();
    LarsPath {
        knots,
        aic,
        truncated,
    }
}

/// Lower Cholesky factor of the active Gram block, updated one column at a time.
#[derive(Debug, Default)]
struct ActiveCholesky {
    /// Row `i` holds `L[i][0..=i]`.
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    /// Append a column with off-diagonal entries `col` and diagonal `diag`.
    /// Returns `false`, leaving the factor unchanged, if it is collinear.
    fn push(&mut self, col: &[f64], diag: f64) -> bool {
        let m = self.rows.len();
        let mut z = Vec::with_capacity(m + 1);
        for i in 0..m {
            let row = &self.rows[i];
            let s = col[i] - row[..i].iter().zip(&z).map(|(l, zk)| l * zk).sum::<f64>();
            z.push(s / row[i]);
        }
        let d2 = diag - z.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > RANK_TOL * diag.max(f64::MIN_POSITIVE)) {
            return false;
        }
        z.push(d2.sqrt());
        self.rows.push(z);
        true
    }

    /// Delete variable `k`, restoring triangularity with Givens rotations.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        let m = self.rows.len();
        for i in k..m {
            let (a, b) = (self.rows[i][i], self.rows[i][i + 1]);
            let r = a.hypot(b);
            let (cs, sn) = (a / r, b / r);
            for row in self.rows[i..].iter_mut() {
                let (x, y) = (row[i], row[i + 1]);
                row[i] = cs * x + sn * y;
                row[i + 1] = -sn * x + cs * y;
            }
            self.rows[i].truncate(i + 1);
        }
    }

    /// Solve `L Lᵀ x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.rows.len();
        let mut z = vec![0.0; m];
        for i in 0..m {
            let row = &self.rows[i];
            let s = b[i] - row[..i].iter().zip(&z).map(|(l, zk)| l * zk).sum::<f64>();
            z[i] = s / row[i];
        }
        for i in (0..m).rev() {
            let s = z[i] - ((i + 1)..m).map(|r| self.rows[r][i] * z[r]).sum::<f64>();
            z[i] = s / self.rows[i][i];
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{lambda_max, lasso_cd_cov, CdOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
        Matrix::from_vec(n, d, data).unwrap()
    }

    #[test]
    fn cholesky_updates_match_direct_solve() {
        // SPD matrix G = AᵀA + I
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(8, 5, &mut rng);
        let g = |i: usize, j: usize| -> f64 {
            (0..8).map(|r| a.get(r, i) * a.get(r, j)).sum::<f64>() + if i == j { 1.0 } else { 0.0 }
        };
        let mut chol = ActiveCholesky::default();
        let order = [3, 0, 4, 1];
        for (m, &j) in order.iter().enumerate() {
            let col: Vec<f64> = order[..m].iter().map(|&i| g(i, j)).collect();
            assert!(chol.push(&col, g(j, j)));
        }
        chol.remove(1); // drop variable 0
        let remaining = [3, 4, 1];
        let b = [1.0, -2.0, 0.5];
        let x = chol.solve(&b);
        for (r, &i) in remaining.iter().enumerate() {
            let lhs: f64 = remaining.iter().zip(&x).map(|(&j, xj)| g(i, j) * xj).sum();
            assert!((lhs - b[r]).abs() < 1e-10);
        }
    }

    #[test]
    fn collinear_column_is_refused() {
        let mut chol = ActiveCholesky::default();
        assert!(chol.push(&[], 1.0));
        assert!(!chol.push(&[1.0], 1.0));
        assert_eq!(chol.rows.len(), 1);
    }

    #[test]
    fn uncorrelated_response_gives_single_knot() {
        // both columns are orthogonal to the centered response
        let x = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]).unwrap();
        let y = vec![1.0, -1.0, -1.0, 1.0];
        let path = lars_path(&x, &y, 100).unwrap();
        assert_eq!(path.knots.len(), 1);
        assert!(path.knots[0].beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn path_structure_and_cd_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = gaussian(20, 10, &mut rng);
        let y: Vec<f64> = (0..20)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x.get(i, 2) * 1.5 - x.get(i, 7) + 0.5 * z
            })
            .collect();
        let sys = CovSystem::single(&x, &y).unwrap();
        let path = lars_path_cov(&sys, 0, 1000).unwrap();
        assert_eq!(path.knots[0].lambda, lambda_max(&sys, 0));
        for pair in path.knots.windows(2) {
            assert!(pair[1].lambda < pair[0].lambda);
            let (a, b) = (&pair[0].active, &pair[1].active);
            let diff = a.iter().filter(|j| !b.contains(j)).count() + b.iter().filter(|j| !a.contains(j)).count();
            // the closing least-squares knot at zero penalty adds no variable
            if pair[1].lambda > 0.0 {
                assert_eq!(diff, 1);
            } else {
                assert!(diff <= 1);
            }
        }
        let opts = CdOptions {
            tol: 1e-13,
            max_iter: 100_000,
            ..Default::default()
        };
        for k in &path.knots {
            let cd = lasso_cd_cov(&sys, 0, k.lambda, &opts, None).unwrap();
            let gap = cd.beta.iter().zip(&k.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-4, "lambda {}: gap {gap}", k.lambda);
        }
    }

    #[test]
    fn aic_selection_ties_and_singletons() {
        let knot = |lambda: f64, rss: f64, nz: usize| LarsKnot {
            lambda,
            active: (0..nz).collect(),
            beta: (0..3).map(|j| if j < nz { 1.0 } else { 0.0 }).collect(),
            rss,
        };
        let single = LarsPath {
            knots: vec![knot(0.7, 10.0, 0)],
            aic: vec![0.0],
            truncated: false,
        };
        assert_eq!(select_lambda_aic(&single, 10).unwrap(), 0.7);

        // equal AIC: same fit quality and support size
        let n = 10;
        let path = LarsPath {
            knots: vec![knot(0.9, 5.0, 2), knot(0.4, 5.0, 2), knot(0.1, 9.0, 3)],
            aic: vec![],
            truncated: false,
        };
        assert_eq!(select_lambda_aic(&path, n).unwrap(), 0.9);

        let empty = LarsPath {
            knots: vec![],
            aic: vec![],
            truncated: false,
        };
        assert!(select_lambda_aic(&empty, 3).is_err());
    }

    #[test]
    fn aic_picks_the_true_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100;
        let x = gaussian(n, 10, &mut rng);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                3.0 * x.get(i, 1) - 2.0 * x.get(i, 6) + 0.05 * z
            })
            .collect();
        let path = lars_path(&x, &y, 1000).unwrap();
        let chosen = select_knot_aic(&path, n).unwrap();

        // exhaustive evaluation from raw residuals
        let ym = y.iter().sum::<f64>() / n as f64;
        let xm: Vec<f64> = (0..10).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
        let scores: Vec<f64> = path
            .knots
            .iter()
            .map(|k| {
                let rss: f64 = (0..n)
                    .map(|i| {
                        let fit: f64 = (0..10).map(|j| (x.get(i, j) - xm[j]) * k.beta[j]).sum();
                        (y[i] - ym - fit).powi(2)
                    })
                    .sum();
                let df = k.beta.iter().filter(|&&b| b != 0.0).count();
                n as f64 * (rss / n as f64).ln() + 2.0 * df as f64
            })
            .collect();
        let mut oracle = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[oracle] {
                oracle = i;
            }
        }
        assert_eq!(chosen, oracle);
        let df = path.knots[chosen].df();
        assert!(df == 2 || df == 3, "df = {df}");
    }

    #[test]
    fn wide_problem_is_truncated_not_failed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(6, 12, &mut rng);
        let y: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let path = lars_path(&x, &y, 1000).unwrap();
        assert!(path.truncated);
        assert!(path.knots.iter().all(|k| k.df() <= 5));
    }
}
