use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::backtest::ForecastRecord;
use crate::{Error, Result};

pub const DM_MIN_SAMPLES: usize = 30;
pub const DM_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    /// One-sided p-value for "A is more accurate than B".
    pub p_value: f64,
    pub reject: bool,
    pub n: usize,
}

/// Long-run variance of `d` with Bartlett weights up to `lag`.
pub fn bartlett_lrv(d: &[f64], lag: usize) -> f64 {
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let autocov = |k: usize| -> f64 {
        (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / n as f64
    };
    let mut s = autocov(0);
    for k in 1..=lag.min(n.saturating_sub(1)) {
        s += 2.0 * (1.0 - k as f64 / (lag as f64 + 1.0)) * autocov(k);
    }
    s
}

/// Diebold-Mariano test on forecast errors of two models at the same points.
///
/// The loss differential is `|e_a| − |e_b|`; its mean is scaled by a HAC
/// standard error with lag `horizon − 1`. Small p-values favour model A.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64], horizon: usize) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} and {} errors",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let n = errors_a.len();
    if n < DM_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "DM test needs at least {DM_MIN_SAMPLES} points, got {n}"
        )));
    }
    if errors_a.iter().chain(errors_b).any(|e| !e.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a.abs() - b.abs()).collect();
    let var = bartlett_lrv(&d, horizon.saturating_sub(1));
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let statistic = mean / (var / n as f64).sqrt();
    let p_value = Normal::standard().cdf(statistic);
    Ok(DmResult {
        statistic,
        p_value,
        reject: p_value < DM_ALPHA,
        n,
    })
}

/// Pairwise DM results; `results[i][j]` tests row model `i` against
/// column model `j`. The diagonal and degenerate pairs are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmMatrix {
    pub models: Vec<String>,
    pub results: Vec<Vec<Option<DmResult>>>,
}

impl DmMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<&DmResult> {
        let i = self.models.iter().position(|m| m == a)?;
        let j = self.models.iter().position(|m| m == b)?;
        self.results[i][j].as_ref()
    }

    pub fn decision(&self, a: &str, b: &str) -> bool {
        self.get(a, b).is_some_and(|r| r.reject)
    }
}

/// Error series of two models on the points both forecast, ordered by
/// target time then origin.
pub fn aligned_errors(records: &[ForecastRecord], a: &str, b: &str) -> (Vec<f64>, Vec<f64>) {
    let index = |m: &str| -> BTreeMap<(NaiveDateTime, NaiveDateTime), f64> {
        records
            .iter()
            .filter(|r| r.model == m)
            .map(|r| ((r.target_ts, r.origin_ts), r.error()))
            .collect()
    };
    let (ia, ib) = (index(a), index(b));
    ia.iter()
        .filter_map(|(k, ea)| ib.get(k).map(|eb| (*ea, *eb)))
        .unzip()
}

/// DM tests for every ordered pair of models present in `records`, in order
/// of first appearance.
pub fn dm_matrix(records: &[ForecastRecord], horizon: usize) -> DmMatrix {
    let mut models: Vec<String> = Vec::new();
    for r in records {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let results = models
        .iter()
        .map(|a| {
            models
                .iter()
                .map(|b| {
                    if a == b {
                        return None;
                    }
                    let (ea, eb) = aligned_errors(records, a, b);
                    dm_test(&ea, &eb, horizon).ok()
                })
                .collect()
        })
        .collect();
    DmMatrix { models, results }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal as Gauss};

    #[test]
    fn identical_models_have_no_decision() {
        let e: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert!(matches!(dm_test(&e, &e, 16), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn too_short_or_misaligned() {
        let e = vec![1.0; 20];
        assert!(matches!(dm_test(&e, &e, 16), Err(Error::InsufficientData(_))));
        assert!(matches!(dm_test(&[1.0; 40], &[1.0; 41], 16), Err(Error::ShapeMismatch(_))));
    }

    /// Independent computation of the statistic written out term by term.
    fn scripted_dm(a: &[f64], b: &[f64], lag: usize) -> f64 {
        let n = a.len() as f64;
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.abs() - y.abs()).collect();
        let mean = d.iter().sum::<f64>() / n;
        let mut gamma = vec![0.0; lag + 1];
        for (k, g) in gamma.iter_mut().enumerate() {
            for t in k..d.len() {
                *g += (d[t] - mean) * (d[t - k] - mean);
            }
            *g /= n;
        }
        let mut lrv = gamma[0];
        for k in 1..=lag {
            lrv += 2.0 * (1.0 - k as f64 / (lag as f64 + 1.0)) * gamma[k];
        }
        mean / (lrv / n).sqrt()
    }

    #[test]
    fn clearly_better_model_is_detected() {
        let mut rng = crate::rng::stream(21, &[]);
        let noise = Gauss::new(0.0, 1.0).unwrap();
        let b: Vec<f64> = (0..1000).map(|_| 5.0 + noise.sample(&mut rng)).collect();
        let a: Vec<f64> = b.iter().map(|v| v - 0.5 + 0.3 * noise.sample(&mut rng)).collect();
        let r = dm_test(&a, &b, 16).unwrap();
        let oracle = scripted_dm(&a, &b, 15);
        assert!((r.statistic - oracle).abs() < 1e-9 * oracle.abs());
        assert!(r.reject && r.p_value < 0.05);
        let back = dm_test(&b, &a, 16).unwrap();
        assert_eq!(back.statistic, -r.statistic);
        assert!(!back.reject);
    }

    #[test]
    fn matrix_is_never_mutually_significant() {
        let mut rng = crate::rng::stream(5, &[]);
        let noise = Gauss::new(0.0, 1.0).unwrap();
        let origin = crate::series::parse_ts("2024-01-01T00:00").unwrap();
        let mut records = Vec::new();
        for (m, scale) in [("a", 1.0), ("b", 1.3), ("c", 1.0)] {
            for o in 0..10 {
                let ts = origin + crate::series::period() * (16 * o);
                for k in 0..16 {
                    records.push(ForecastRecord {
                        origin_ts: ts,
                        horizon: k,
                        target_ts: crate::features::target_ts(ts, k),
                        y_true: 0.0,
                        y_pred: scale * noise.sample(&mut rng),
                        model: m.into(),
                        training_window: 30,
                        tuning_epoch: 0,
                    });
                }
            }
        }
        let dm = dm_matrix(&records, 16);
        assert_eq!(dm.models, ["a", "b", "c"]);
        for a in &dm.models {
            assert!(dm.get(a, a).is_none());
            for b in &dm.models {
                assert!(!(dm.decision(a, b) && dm.decision(b, a)));
            }
        }
    }
}
