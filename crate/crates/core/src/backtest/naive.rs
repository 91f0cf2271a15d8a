use chrono::NaiveDateTime;

use crate::features::MAX_LAG;
use crate::series::{SettlementSeries, Variable};
use crate::{Error, Result, HORIZON};

/// Most recent published price is three periods before the origin.
pub const NAIVE_LAG: usize = 3;

/// The last 16 published prices, `bmp[t−18 ..= t−3]`, as the forecast for
/// `t+2 ..= t+17`.
pub fn naive_forecast(series: &SettlementSeries, origin_ts: NaiveDateTime) -> Result<Vec<f64>> {
    let pos = series
        .position(origin_ts)
        .ok_or(Error::UnknownTimestamp(origin_ts))?;
    naive_at(series, pos)
}

pub(crate) fn naive_at(series: &SettlementSeries, pos: usize) -> Result<Vec<f64>> {
    if pos < MAX_LAG {
        return Err(Error::InsufficientHistory {
            origin: series.ts(pos),
        });
    }
    let first = pos - NAIVE_LAG - HORIZON + 1;
    Ok((first..=pos - NAIVE_LAG).map(|p| series.value(p, Variable::Bmp)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{synthesize, SynthParams};

    #[test]
    fn forecast_is_the_lagged_index() {
        let s = synthesize(3, 1, 0.0, &SynthParams::default()).unwrap();
        let mut recs = s.records().to_vec();
        for (i, r) in recs.iter_mut().enumerate() {
            r.bmp = i as f64;
        }
        let s = SettlementSeries::new(recs).unwrap();
        let t = 80;
        let f = naive_forecast(&s, s.ts(t)).unwrap();
        let want: Vec<f64> = (t - 18..=t - 3).map(|i| i as f64).collect();
        assert_eq!(f, want);
    }

    #[test]
    fn constant_prices_give_a_constant_forecast() {
        let s = synthesize(3, 2, 0.0, &SynthParams::default()).unwrap();
        let recs: Vec<_> = s
            .records()
            .iter()
            .map(|r| {
                let mut r = *r;
                r.bmp = 42.0;
                r
            })
            .collect();
        let s = SettlementSeries::new(recs).unwrap();
        assert_eq!(naive_forecast(&s, s.ts(100)).unwrap(), vec![42.0; 16]);
    }

    #[test]
    fn needs_history() {
        let s = synthesize(2, 3, 0.0, &SynthParams::default()).unwrap();
        assert!(matches!(naive_forecast(&s, s.ts(10)), Err(Error::InsufficientHistory { .. })));
    }
}
