use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cov::CovSystem;
use super::lars::{lars_path_cov, select_lambda_aic};
use super::lasso::{lasso_cd_cov, CdOptions, LassoFit};
use super::standardize::Standardizer;
use crate::{Error, Matrix, Result};

pub const LEAR_MIN_SAMPLES: usize = 50;
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearConfig {
    pub cd: CdOptions,
    /// Cap on LARS knots per horizon.
    pub max_knots: usize,
    /// Apply `asinh` after z-scoring inputs and targets.
    pub asinh: bool,
    /// Re-select `λ` on every n-th retrain; `β` is refit on every retrain.
    pub lambda_refresh: usize,
}

impl Default for LearConfig {
    fn default() -> Self {
        Self {
            cd: CdOptions::default(),
            max_knots: usize::MAX,
            asinh: false,
            lambda_refresh: 3,
        }
    }
}

/// Sixteen independent LASSO regressions on a shared standardized design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearModel {
    pub version: u32,
    pub x_std: Standardizer,
    pub y_std: Standardizer,
    /// One fit per horizon, in standardized space.
    pub fits: Vec<LassoFit>,
    pub asinh: bool,
    /// Whether the penalties were re-selected for this fit or carried over.
    pub lambda_selected: bool,
}

/// Fit with `λ` chosen per horizon by LARS + in-sample AIC, then refit by
/// coordinate descent at that `λ`.
pub fn lear_fit(x: &Matrix, y: &Matrix, cfg: &LearConfig) -> Result<LearModel> {
    fit_inner(x, y, None, cfg)
}

/// Fit at fixed per-horizon penalties.
pub fn lear_refit(x: &Matrix, y: &Matrix, lambdas: &[f64], cfg: &LearConfig) -> Result<LearModel> {
    if lambdas.len() != y.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} penalties for {} horizons",
            lambdas.len(),
            y.cols()
        )));
    }
    fit_inner(x, y, Some(lambdas), cfg)
}

fn fit_inner(x: &Matrix, y: &Matrix, lambdas: Option<&[f64]>, cfg: &LearConfig) -> Result<LearModel> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::ShapeMismatch(format!("{n} feature rows, {} target rows", y.rows())));
    }
    if n < LEAR_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "LEAR needs at least {LEAR_MIN_SAMPLES} samples, got {n}"
        )));
    }
    if !x.all_finite() || !y.all_finite() {
        return Err(Error::NonFiniteInput);
    }
    let x_std = Standardizer::fit(x)?;
    let y_std = Standardizer::fit(y)?;
    let mut xs = x_std.transform(x);
    let mut ys = y_std.transform(y);
    if cfg.asinh {
        xs = map(&xs, f64::asinh);
        ys = map(&ys, f64::asinh);
    }
    let targets: Vec<Vec<f64>> = (0..ys.cols()).map(|h| ys.column(h)).collect();
    let sys = CovSystem::new(&xs, &targets)?;

    let fits = (0..targets.len())
        .into_par_iter()
        .map(|h| {
            let lambda = match lambdas {
                Some(l) => l[h],
                None => {
                    let path = lars_path_cov(&sys, h, cfg.max_knots)?;
                    select_lambda_aic(&path, n)?
                }
            };
            lasso_cd_cov(&sys, h, lambda, &cfg.cd, None)
        })
        .enumerate()
        .map(|(h, r)| r.map_err(|e| e.at_horizon(h)))
        .collect::<Result<Vec<_>>>()?;

    Ok(LearModel {
        version: SNAPSHOT_VERSION,
        x_std,
        y_std,
        fits,
        asinh: cfg.asinh,
        lambda_selected: lambdas.is_none(),
    })
}

fn map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let data = m.as_slice().iter().map(|&v| f(v)).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("shape preserved")
}

impl LearModel {
    pub fn lambdas(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.lambda).collect()
    }

    pub fn horizons(&self) -> usize {
        self.fits.len()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut xs = self.x_std.transform_row(x);
        if self.asinh {
            xs.iter_mut().for_each(|v| *v = v.asinh());
        }
        let zs: Vec<f64> = self
            .fits
            .iter()
            .map(|f| {
                let z = f.intercept + f.beta.iter().zip(&xs).map(|(b, v)| b * v).sum::<f64>();
                if self.asinh {
                    z.sinh()
                } else {
                    z
                }
            })
            .collect();
        self.y_std.inverse_row(&zs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidParam(format!("unsupported LEAR snapshot version {}", m.version)));
        }
        Ok(m)
    }
}
