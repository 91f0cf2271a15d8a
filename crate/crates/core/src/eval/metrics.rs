use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::backtest::ForecastRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub rmse: f64,
    /// Percent, in `[0, 100]`.
    pub smape: f64,
    pub n: usize,
}

impl MetricSet {
    /// Metrics over `(actual, forecast)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let (mut abs, mut sq, mut sym, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (y, f) in pairs {
            let e = (y - f).abs();
            abs += e;
            sq += e * e;
            sym += smape_term(y, f);
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let nf = n as f64;
        let mae = abs / nf;
        // mae <= rmse holds exactly in real arithmetic; keep it under rounding
        let rmse = (sq / nf).sqrt().max(mae);
        Ok(Self {
            mae,
            rmse,
            smape: (100.0 * sym / nf).min(100.0),
            n,
        })
    }

    pub fn from_records(records: &[ForecastRecord]) -> Result<Self> {
        Self::from_pairs(records.iter().map(|r| (r.y_true, r.y_pred)))
    }
}

/// `|y - f| / (|y| + |f|)`, with `0/0` taken as 0.
fn smape_term(y: f64, f: f64) -> f64 {
    let den = y.abs() + f.abs();
    if den == 0.0 {
        0.0
    } else {
        ((y - f).abs() / den).min(1.0)
    }
}

pub fn mae(records: &[ForecastRecord]) -> Result<f64> {
    MetricSet::from_records(records).map(|m| m.mae)
}

pub fn rmse(records: &[ForecastRecord]) -> Result<f64> {
    MetricSet::from_records(records).map(|m| m.rmse)
}

/// Symmetric MAPE in percent, `100/n · Σ |y − ŷ| / (|y| + |ŷ|)`.
pub fn smape(records: &[ForecastRecord]) -> Result<f64> {
    MetricSet::from_records(records).map(|m| m.smape)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourStats {
    pub hour: u32,
    /// Distinct target periods in this hour.
    pub n: usize,
    pub mean_price: f64,
    /// Population standard deviation of the price.
    pub sd_price: f64,
    /// Per model: (scored points, MAE). `None` MAE when a model has no
    /// points in this hour.
    pub mae: BTreeMap<String, (usize, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyBreakdown {
    pub models: Vec<String>,
    pub hours: Vec<HourStats>,
}

/// Group records by hour of day of their target period.
///
/// Price statistics use each distinct target period once, whichever models
/// forecast it; MAE is per model.
pub fn hourly_breakdown(records: &[ForecastRecord]) -> Result<HourlyBreakdown> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut prices: BTreeMap<NaiveDateTime, f64> = BTreeMap::new();
    let mut errs: BTreeMap<(u32, &str), (usize, f64)> = BTreeMap::new();
    let mut models: Vec<String> = Vec::new();
    for r in records {
        prices.entry(r.target_ts).or_insert(r.y_true);
        let e = errs.entry((r.target_ts.hour(), r.model.as_str())).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += (r.y_true - r.y_pred).abs();
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let mut by_hour: Vec<Vec<f64>> = vec![Vec::new(); 24];
    for (ts, p) in &prices {
        by_hour[ts.hour() as usize].push(*p);
    }
    let hours = by_hour
        .into_iter()
        .enumerate()
        .map(|(h, ps)| {
            let n = ps.len();
            let (mean_price, sd_price) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let m = ps.iter().sum::<f64>() / n as f64;
                let v = ps.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / n as f64;
                (m, v.sqrt())
            };
            let mae = models
                .iter()
                .map(|m| {
                    let (c, s) = errs.get(&(h as u32, m.as_str())).copied().unwrap_or((0, 0.0));
                    (m.clone(), (c, (c > 0).then(|| s / c as f64)))
                })
                .collect();
            HourStats {
                hour: h as u32,
                n,
                mean_price,
                sd_price,
                mae,
            }
        })
        .collect();
    Ok(HourlyBreakdown { models, hours })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::target_ts;
    use crate::series::parse_ts;

    pub(crate) fn rec(model: &str, origin: &str, k: usize, y: f64, f: f64) -> ForecastRecord {
        let o = parse_ts(origin).unwrap();
        ForecastRecord {
            origin_ts: o,
            horizon: k,
            target_ts: target_ts(o, k),
            y_true: y,
            y_pred: f,
            model: model.into(),
            training_window: 30,
            tuning_epoch: 0,
        }
    }

    #[test]
    fn perfect_forecasts_score_zero() {
        let m = MetricSet::from_pairs([(3.0, 3.0), (-1.0, -1.0)]).unwrap();
        assert_eq!((m.mae, m.rmse, m.smape, m.n), (0.0, 0.0, 0.0, 2));
    }

    #[test]
    fn hand_computed_errors() {
        let m = MetricSet::from_pairs([(0.0, 1.0), (0.0, -1.0), (0.0, 3.0)]).unwrap();
        assert!((m.mae - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - (11.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn smape_cases() {
        assert_eq!(MetricSet::from_pairs([(1.0, 0.0)]).unwrap().smape, 100.0);
        let m = MetricSet::from_pairs([(2.0, 1.0), (0.0, 0.0)]).unwrap();
        assert!((m.smape - 100.0 / 2.0 * (1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(MetricSet::from_pairs([(5.0, 5.0)]).unwrap().smape, 0.0);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(mae(&[]), Err(Error::EmptyInput)));
        assert!(matches!(hourly_breakdown(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn constant_prices_have_zero_spread() {
        let mut records = Vec::new();
        for day in 1..=3 {
            for k in 0..16 {
                records.push(rec("naive", &format!("2024-01-0{day}T00:00"), k, 50.0, 48.0));
            }
        }
        let hb = hourly_breakdown(&records).unwrap();
        let covered: Vec<&HourStats> = hb.hours.iter().filter(|h| h.n > 0).collect();
        assert_eq!(covered.len(), 8);
        for h in covered {
            assert_eq!(h.mean_price, 50.0);
            assert_eq!(h.sd_price, 0.0);
            assert_eq!(h.mae["naive"], (6, Some(2.0)));
        }
        assert_eq!(hb.hours.iter().map(|h| h.n).sum::<usize>(), 48);
    }
}
