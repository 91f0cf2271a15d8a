use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Lower bound on a column's scale; constant columns standardize to zero.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Per-column z-score with population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::DegenerateInput(format!(
                "standardizer needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        let scale = var
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(SCALE_FLOOR))
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let data = x.iter_rows().flat_map(|r| self.transform_row(r)).collect();
        Matrix::from_vec(x.rows(), x.cols(), data).expect("shape preserved")
    }

    pub fn inverse(&self, x: &Matrix) -> Matrix {
        let data = x.iter_rows().flat_map(|r| self.inverse_row(r)).collect();
        Matrix::from_vec(x.rows(), x.cols(), data).expect("shape preserved")
    }
}
