use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{ModelFamily, SearchPreset};
use crate::eval::MetricSet;
use crate::linear::{lear_fit, lear_refit, LearConfig, LearModel};
use crate::mlp::{mlp_fit, MlpArchitecture, MlpModel, TrainConfig};
use crate::rng::{derive_seed, stream};
use crate::trees::{gbt_fit, rf_fit, ForestModel, ForestParams, GbtModel, GbtParams};
use crate::{Error, Matrix, Result};

/// Settings of one tunable model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Rf(ForestParams),
    Gbt(GbtParams),
    Mlp { arch: MlpArchitecture, train: TrainConfig },
}

impl Hyperparams {
    pub fn family(&self) -> ModelFamily {
        match self {
            Self::Rf(_) => ModelFamily::Rf,
            Self::Gbt(_) => ModelFamily::Gbt,
            Self::Mlp { .. } => ModelFamily::Mlp,
        }
    }
}

/// A trained model of any family except Naive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelFit {
    Lear(LearModel),
    Rf(ForestModel),
    Gbt(GbtModel),
    Mlp(MlpModel),
}

impl ModelFit {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Lear(m) => m.predict(x),
            Self::Rf(m) => m.predict(x),
            Self::Gbt(m) => m.predict(x),
            Self::Mlp(m) => m.predict(x),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.predict(r)).collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, 0))
    }
}

/// Fit a tunable family. MLPs use `(x_val, y_val)` for early stopping; the
/// tree ensembles ignore it.
pub fn fit_with(
    params: &Hyperparams,
    x: &Matrix,
    y: &Matrix,
    x_val: &Matrix,
    y_val: &Matrix,
    seed: u64,
) -> Result<ModelFit> {
    match params {
        Hyperparams::Rf(p) => rf_fit(x, y, p, seed).map(ModelFit::Rf),
        Hyperparams::Gbt(p) => gbt_fit(x, y, p, seed).map(ModelFit::Gbt),
        Hyperparams::Mlp { arch, train } => {
            let cfg = TrainConfig {
                seed,
                ..train.clone()
            };
            mlp_fit(x, y, x_val, y_val, arch, &cfg).map(ModelFit::Mlp)
        }
    }
}

/// LEAR with penalties re-selected (`lambdas = None`) or held.
pub fn fit_lear(x: &Matrix, y: &Matrix, lambdas: Option<&[f64]>) -> Result<ModelFit> {
    let cfg = LearConfig::default();
    match lambdas {
        None => lear_fit(x, y, &cfg),
        Some(l) => lear_refit(x, y, l, &cfg),
    }
    .map(ModelFit::Lear)
}

/// Finite grid of candidate settings for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub family: ModelFamily,
    pub candidates: Vec<Hyperparams>,
}

impl SearchSpace {
    pub fn preset(family: ModelFamily, preset: SearchPreset) -> Result<Self> {
        let candidates = match (family, preset) {
            (ModelFamily::Rf, SearchPreset::Full) => rf_grid(&[100, 300, 500], &[Some(6), Some(10), None], &[0.3, 0.6, 1.0]),
            (ModelFamily::Rf, SearchPreset::Compact) => rf_grid(&[10, 20], &[Some(4), Some(6)], &[0.3]),
            (ModelFamily::Gbt, SearchPreset::Full) => gbt_grid(
                &[100, 300],
                &[0.03, 0.1],
                &[4, 6, 8],
                &[1.0, 10.0],
                &[0.0, 1.0],
                &[0.8, 1.0],
            ),
            (ModelFamily::Gbt, SearchPreset::Compact) => {
                gbt_grid(&[10, 20], &[0.1, 0.3], &[2, 3], &[1.0], &[0.0], &[1.0])
            }
            (ModelFamily::Mlp, SearchPreset::Full) => mlp_grid(
                &[1, 2, 3],
                &[1, 2, 3],
                &[64, 128, 256],
                &[0.0, 0.1, 0.25, 0.5],
                &[32, 64, 128],
                &[1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
                300,
                30,
            ),
            (ModelFamily::Mlp, SearchPreset::Compact) => {
                mlp_grid(&[1], &[1], &[16, 32], &[0.0, 0.1], &[64], &[1e-3, 3e-3], 20, 5)
            }
            (f, _) => return Err(Error::Plan(format!("model family '{f}' has no hyperparameter search"))),
        };
        Ok(Self { family, candidates })
    }

    /// `budget` distinct candidates in seeded random order.
    pub fn sample(&self, budget: usize, seed: u64) -> Vec<Hyperparams> {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.shuffle(&mut stream(seed, &[]));
        idx.into_iter()
            .take(budget)
            .map(|i| self.candidates[i].clone())
            .collect()
    }
}

fn rf_grid(trees: &[usize], depths: &[Option<usize>], feats: &[f64]) -> Vec<Hyperparams> {
    let mut out = Vec::new();
    for &n_trees in trees {
        for &max_depth in depths {
            for &max_features in feats {
                out.push(Hyperparams::Rf(ForestParams {
                    n_trees,
                    max_depth,
                    min_samples_leaf: 1,
                    max_features,
                    bootstrap: true,
                }));
            }
        }
    }
    out
}

fn gbt_grid(
    rounds: &[usize],
    etas: &[f64],
    depths: &[usize],
    lambdas: &[f64],
    gammas: &[f64],
    subsamples: &[f64],
) -> Vec<Hyperparams> {
    let mut out = Vec::new();
    for &n_rounds in rounds {
        for &learning_rate in etas {
            for &max_depth in depths {
                for &lambda_reg in lambdas {
                    for &gamma in gammas {
                        for &subsample in subsamples {
                            out.push(Hyperparams::Gbt(GbtParams {
                                n_rounds,
                                learning_rate,
                                max_depth,
                                lambda_reg,
                                gamma,
                                subsample,
                                colsample: 1.0,
                                min_child_weight: 1.0,
                            }));
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn mlp_grid(
    n_blocks: &[usize],
    layers_per_block: &[usize],
    widths: &[usize],
    dropouts: &[f64],
    batches: &[usize],
    rates: &[f64],
    max_epochs: usize,
    patience: usize,
) -> Vec<Hyperparams> {
    let mut out = Vec::new();
    for &nb in n_blocks {
        for &lp in layers_per_block {
            for &w in widths {
                for &dropout in dropouts {
                    for &batch_size in batches {
                        for &learning_rate in rates {
                            out.push(Hyperparams::Mlp {
                                arch: MlpArchitecture::new(vec![vec![w; lp]; nb], dropout),
                                train: TrainConfig {
                                    max_epochs,
                                    patience,
                                    batch_size,
                                    learning_rate,
                                    ..Default::default()
                                },
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: Hyperparams,
    /// Validation MAE, or `None` if the fit failed.
    pub val_mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub model: ModelFamily,
    /// Origin of the first forecast of the tuning epoch.
    pub epoch_start: Option<chrono::NaiveDateTime>,
    pub training_window: u32,
    pub epoch: usize,
    pub trials: Vec<Trial>,
    pub selected: usize,
    /// Wall-clock seconds; not part of the deterministic record.
    #[serde(skip)]
    pub seconds: f64,
}

impl TuningRecord {
    pub fn selected_params(&self) -> &Hyperparams {
        &self.trials[self.selected].params
    }
}

/// Seeded random search: fit each sampled candidate on the fit split and
/// keep the lowest validation MAE, ties going to the earlier trial.
#[allow(clippy::too_many_arguments)]
pub fn tune(
    family: ModelFamily,
    x_fit: &Matrix,
    y_fit: &Matrix,
    x_val: &Matrix,
    y_val: &Matrix,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<TuningRecord> {
    if budget == 0 {
        return Err(Error::InvalidParam("tuning budget must be >= 1".into()));
    }
    if space.family != family || space.candidates.is_empty() {
        return Err(Error::InvalidParam(format!("search space does not cover '{family}'")));
    }
    let started = std::time::Instant::now();
    let candidates = space.sample(budget, seed);
    let trials: Vec<Trial> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(i, params)| {
            let scored = fit_with(&params, x_fit, y_fit, x_val, y_val, derive_seed(seed, &[i as u64]))
                .and_then(|fit| validation_mae(&fit, x_val, y_val));
            match scored {
                Ok(mae) => Trial {
                    params,
                    val_mae: Some(mae),
                    error: None,
                },
                Err(e) => Trial {
                    params,
                    val_mae: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut selected: Option<(usize, f64)> = None;
    for (i, t) in trials.iter().enumerate() {
        if let Some(m) = t.val_mae {
            if selected.is_none_or(|(_, b)| m < b) {
                selected = Some((i, m));
            }
        }
    }
    let (selected, _) = selected.ok_or(Error::TuningFailed(trials.len()))?;
    Ok(TuningRecord {
        model: family,
        epoch_start: None,
        training_window: 0,
        epoch: 0,
        trials,
        selected,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn validation_mae(fit: &ModelFit, x_val: &Matrix, y_val: &Matrix) -> Result<f64> {
    let pred = fit.predict_matrix(x_val);
    let mae = MetricSet::from_pairs(y_val.as_slice().iter().copied().zip(pred.as_slice().iter().copied()))?.mae;
    if mae.is_finite() {
        Ok(mae)
    } else {
        Err(Error::NonFiniteInput)
    }
}
