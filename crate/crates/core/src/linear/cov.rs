use rayon::prelude::*;

use crate::{Error, Matrix, Result};

/// Centered second moments of a design and one or more targets, scaled by
/// `1/n`. Everything the LASSO solvers need; the raw rows are not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSystem {
    pub n: usize,
    pub d: usize,
    /// `(1/n) Xcᵀ Xc`, full symmetric, row-major `d x d`.
    pub gram: Vec<f64>,
    pub x_mean: Vec<f64>,
    /// `(1/n) Xcᵀ yc` per target.
    pub xty: Vec<Vec<f64>>,
    /// `(1/n) ycᵀ yc` per target.
    pub yty: Vec<f64>,
    pub y_mean: Vec<f64>,
}

impl CovSystem {
    /// `targets` holds one length-`n` column per target.
    pub fn new(x: &Matrix, targets: &[Vec<f64>]) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if !x.all_finite() {
            return Err(Error::NonFiniteInput);
        }
        for t in targets {
            if t.len() != n {
                return Err(Error::ShapeMismatch(format!("target of length {} for {n} rows", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        let inv_n = 1.0 / n as f64;

        // column-major centered copy
        let mut x_mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in x_mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        x_mean.iter_mut().for_each(|m| *m *= inv_n);
        let cols: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|j| (0..n).map(|i| x.get(i, j) - x_mean[j]).collect())
            .collect();

        // each entry is computed by exactly one task, so the result does not
        // depend on the thread count
        let upper: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|j| (j..d).map(|k| dot4(&cols[j], &cols[k]) * inv_n).collect())
            .collect();
        let mut gram = vec![0.0; d * d];
        for (j, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let k = j + off;
                gram[j * d + k] = v;
                gram[k * d + j] = v;
            }
        }

        let mut xty = Vec::with_capacity(targets.len());
        let mut yty = Vec::with_capacity(targets.len());
        let mut y_mean = Vec::with_capacity(targets.len());
        for t in targets {
            let m = t.iter().sum::<f64>() * inv_n;
            let yc: Vec<f64> = t.iter().map(|v| v - m).collect();
            xty.push(cols.par_iter().map(|c| dot4(c, &yc) * inv_n).collect());
            yty.push(dot4(&yc, &yc) * inv_n);
            y_mean.push(m);
        }
        Ok(Self {
            n,
            d,
            gram,
            x_mean,
            xty,
            yty,
            y_mean,
        })
    }

    pub fn single(x: &Matrix, y: &[f64]) -> Result<Self> {
        Self::new(x, &[y.to_vec()])
    }

    #[inline]
    pub fn g(&self, j: usize, k: usize) -> f64 {
        self.gram[j * self.d + k]
    }

    pub fn gram_row(&self, j: usize) -> &[f64] {
        &self.gram[j * self.d..(j + 1) * self.d]
    }

    /// `(1/n) ‖yc − Xc β‖²` for target `t`.
    pub fn mse(&self, t: usize, beta: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (j, &bj) in beta.iter().enumerate() {
            if bj == 0.0 {
                continue;
            }
            lin += bj * self.xty[t][j];
            let row = self.gram_row(j);
            quad += bj * beta.iter().zip(row).map(|(b, g)| b * g).sum::<f64>();
        }
        (self.yty[t] - 2.0 * lin + quad).max(0.0)
    }

    /// Correlations `(1/n) Xcᵀ (yc − Xc β)`.
    pub fn correlations(&self, t: usize, beta: &[f64]) -> Vec<f64> {
        let mut c = self.xty[t].clone();
        for (j, &bj) in beta.iter().enumerate() {
            if bj != 0.0 {
                for (ck, g) in c.iter_mut().zip(self.gram_row(j)) {
                    *ck -= g * bj;
                }
            }
        }
        c
    }

    pub fn intercept(&self, t: usize, beta: &[f64]) -> f64 {
        self.y_mean[t] - self.x_mean.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
    }
}

/// Dot product with four fixed accumulators: vectorizes, and the summation
/// order is a function of the length only.
pub(crate) fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_direct_computation() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 5.0], [4.0, 4.0], [0.0, 1.0]]).unwrap();
        let y = vec![1.0, 2.0, 0.0, 5.0];
        let sys = CovSystem::single(&x, &y).unwrap();
        // means: x = (2, 3), y = 2
        // centered x: (-1,-1), (1,2), (2,1), (-2,-2); centered y: -1, 0, -2, 3
        assert_eq!(sys.x_mean, vec![2.0, 3.0]);
        assert!((sys.g(0, 0) - 10.0 / 4.0).abs() < 1e-15);
        assert!((sys.g(0, 1) - 9.0 / 4.0).abs() < 1e-15);
        assert!((sys.g(1, 1) - 10.0 / 4.0).abs() < 1e-15);
        assert!((sys.xty[0][0] - (1.0 + 0.0 - 4.0 - 6.0) / 4.0).abs() < 1e-15);
        assert!((sys.yty[0] - 14.0 / 4.0).abs() < 1e-15);
        let beta = [0.5, -0.25];
        let direct: f64 = (0..4)
            .map(|i| {
                let r = (y[i] - 2.0) - 0.5 * (x.get(i, 0) - 2.0) + 0.25 * (x.get(i, 1) - 3.0);
                r * r
            })
            .sum::<f64>()
            / 4.0;
        assert!((sys.mse(0, &beta) - direct).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite() {
        let x = Matrix::from_rows(&[[1.0], [f64::NAN]]).unwrap();
        assert!(matches!(CovSystem::single(&x, &[1.0, 2.0]), Err(Error::NonFiniteInput)));
    }
}
