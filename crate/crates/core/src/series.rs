//! Aligned half-hourly settlement data: ingestion, validation and synthesis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";
pub const PERIOD_MINUTES: i64 = 30;
pub const PERIODS_PER_DAY: usize = 48;
/// Longest run of consecutive missing rows that forward-fill may bridge.
pub const MAX_FILL_RUN: usize = 4;

pub const COLUMNS: [&str; 10] = [
    "ts", "bmp", "bmv", "wdiff", "inter", "dam", "phpn", "phi", "phfw", "phfd",
];

pub fn period() -> Duration {
    Duration::minutes(PERIOD_MINUTES)
}

pub fn format_ts(ts: NaiveDateTime) -> String {
    ts.format(TS_FORMAT).to_string()
}

pub fn parse_ts(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TS_FORMAT).ok()
}

/// The nine market variables carried by every settlement period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    Bmp,
    Bmv,
    Wdiff,
    Inter,
    Dam,
    Phpn,
    Phi,
    Phfw,
    Phfd,
}

impl Variable {
    pub const ALL: [Variable; 9] = [
        Variable::Bmp,
        Variable::Bmv,
        Variable::Wdiff,
        Variable::Inter,
        Variable::Dam,
        Variable::Phpn,
        Variable::Phi,
        Variable::Phfw,
        Variable::Phfd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Bmp => "bmp",
            Variable::Bmv => "bmv",
            Variable::Wdiff => "wdiff",
            Variable::Inter => "inter",
            Variable::Dam => "dam",
            Variable::Phpn => "phpn",
            Variable::Phi => "phi",
            Variable::Phfw => "phfw",
            Variable::Phfd => "phfd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub ts: NaiveDateTime,
    /// Balancing-market price, EUR/MWh.
    pub bmp: f64,
    /// Balancing-market volume, MWh.
    pub bmv: f64,
    /// Forecast minus actual wind, MW.
    pub wdiff: f64,
    /// Interconnector flow, MW.
    pub inter: f64,
    /// Day-ahead price, EUR/MWh, repeated across both half-hours of the clock hour.
    pub dam: f64,
    /// Physical-notification volume, MW.
    pub phpn: f64,
    /// Net interconnector schedule, MW.
    pub phi: f64,
    /// Renewables forecast, MW.
    pub phfw: f64,
    /// Demand forecast, MW.
    pub phfd: f64,
}

impl SettlementRecord {
    pub fn get(&self, v: Variable) -> f64 {
        match v {
            Variable::Bmp => self.bmp,
            Variable::Bmv => self.bmv,
            Variable::Wdiff => self.wdiff,
            Variable::Inter => self.inter,
            Variable::Dam => self.dam,
            Variable::Phpn => self.phpn,
            Variable::Phi => self.phi,
            Variable::Phfw => self.phfw,
            Variable::Phfd => self.phfd,
        }
    }

    pub fn set(&mut self, v: Variable, value: f64) {
        match v {
            Variable::Bmp => self.bmp = value,
            Variable::Bmv => self.bmv = value,
            Variable::Wdiff => self.wdiff = value,
            Variable::Inter => self.inter = value,
            Variable::Dam => self.dam = value,
            Variable::Phpn => self.phpn = value,
            Variable::Phi => self.phi = value,
            Variable::Phfw => self.phfw = value,
            Variable::Phfd => self.phfd = value,
        }
    }
}

/// Validated, gap-free half-hourly series. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SettlementSeries {
    records: Vec<SettlementRecord>,
    origin_index: HashMap<NaiveDateTime, usize>,
}

impl SettlementSeries {
    /// Build a series, checking spacing, finiteness and hourly DAM values.
    pub fn new(records: Vec<SettlementRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            let row = i + 2;
            if !is_aligned(r.ts) {
                return Err(Error::MisalignedTimestamp { row, ts: r.ts });
            }
            for v in Variable::ALL {
                if !r.get(v).is_finite() {
                    return Err(Error::NonFiniteValue {
                        row,
                        column: v.name().to_string(),
                    });
                }
            }
            if i > 0 {
                let prev = &records[i - 1];
                if r.ts <= prev.ts {
                    return Err(Error::NonMonotonicTimestamp { row, ts: r.ts });
                }
                if r.ts - prev.ts != period() {
                    let missing = ((r.ts - prev.ts).num_minutes() / PERIOD_MINUTES) as usize - 1;
                    return Err(Error::GapExceedsLimit {
                        row,
                        missing,
                        limit: 0,
                    });
                }
                if r.ts.minute() == 30 && r.dam != prev.dam {
                    return Err(Error::InconsistentDam { row });
                }
            }
        }
        let origin_index = records.iter().enumerate().map(|(i, r)| (r.ts, i)).collect();
        Ok(Self {
            records,
            origin_index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SettlementRecord] {
        &self.records
    }

    pub fn record(&self, pos: usize) -> &SettlementRecord {
        &self.records[pos]
    }

    /// Exact position of `ts`; no nearest-match semantics.
    pub fn position(&self, ts: NaiveDateTime) -> Option<usize> {
        self.origin_index.get(&ts).copied()
    }

    pub fn ts(&self, pos: usize) -> NaiveDateTime {
        self.records[pos].ts
    }

    pub fn first_ts(&self) -> Option<NaiveDateTime> {
        self.records.first().map(|r| r.ts)
    }

    pub fn last_ts(&self) -> Option<NaiveDateTime> {
        self.records.last().map(|r| r.ts)
    }

    pub fn column(&self, v: Variable) -> Vec<f64> {
        self.records.iter().map(|r| r.get(v)).collect()
    }

    pub fn value(&self, pos: usize, v: Variable) -> f64 {
        self.records[pos].get(v)
    }

    /// Copy of the series with one value replaced. Used for perturbation tests.
    pub fn with_value(&self, pos: usize, v: Variable, value: f64) -> Result<Self> {
        let mut records = self.records.clone();
        records[pos].set(v, value);
        if v == Variable::Dam {
            // keep the hourly invariant by moving the partner half-hour too
            let partner = if records[pos].ts.minute() == 0 {
                pos + 1
            } else {
                pos.wrapping_sub(1)
            };
            if partner < records.len() && records[partner].ts.hour() == records[pos].ts.hour() {
                records[partner].dam = value;
            }
        }
        Self::new(records)
    }
}

fn is_aligned(ts: NaiveDateTime) -> bool {
    ts.second() == 0 && ts.nanosecond() == 0 && (ts.minute() == 0 || ts.minute() == 30)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillPolicy {
    Reject,
    ForwardFill,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: usize,
    /// Rows synthesized for missing timestamps.
    pub rows_inserted: usize,
    /// Cells replaced by forward fill, including those of inserted rows.
    pub fill_count: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>, policy: FillPolicy) -> Result<(SettlementSeries, IngestStats)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, policy)
}

/// Parse and validate a CSV in the canonical schema.
///
/// Row numbers in errors are 1-based file line numbers (the header is line 1).
pub fn read_csv<R: Read>(reader: R, policy: FillPolicy) -> Result<(SettlementSeries, IngestStats)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    if headers.len() != COLUMNS.len() || headers.iter().zip(COLUMNS).any(|(h, c)| h != c) {
        return Err(Error::InvalidParam(format!(
            "header must be exactly `{}`",
            COLUMNS.join(",")
        )));
    }

    let limit = match policy {
        FillPolicy::Reject => 0,
        FillPolicy::ForwardFill => MAX_FILL_RUN,
    };
    let mut stats = IngestStats::default();
    let mut records: Vec<SettlementRecord> = Vec::new();
    // consecutive missing cells per variable, inserted rows included
    let mut runs = [0usize; 9];

    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        stats.rows_read += 1;

        let ts_raw = row.get(0).unwrap_or("");
        let ts = parse_ts(ts_raw).ok_or_else(|| Error::Parse {
            row: line,
            column: "ts".into(),
            value: ts_raw.into(),
        })?;
        if !is_aligned(ts) {
            return Err(Error::MisalignedTimestamp { row: line, ts });
        }

        if let Some(prev) = records.last().copied() {
            if ts <= prev.ts {
                return Err(Error::NonMonotonicTimestamp { row: line, ts });
            }
            let missing = ((ts - prev.ts).num_minutes() / PERIOD_MINUTES) as usize - 1;
            if missing > 0 {
                if missing > limit {
                    return Err(Error::GapExceedsLimit {
                        row: line,
                        missing,
                        limit,
                    });
                }
                for k in 1..=missing {
                    let mut filled = prev;
                    filled.ts = prev.ts + period() * k as i32;
                    records.push(filled);
                }
                stats.rows_inserted += missing;
                stats.fill_count += missing * Variable::ALL.len();
                for r in runs.iter_mut() {
                    *r += missing;
                }
            }
        }

        let prev = records.last().copied();
        let mut rec = SettlementRecord {
            ts,
            bmp: 0.0,
            bmv: 0.0,
            wdiff: 0.0,
            inter: 0.0,
            dam: 0.0,
            phpn: 0.0,
            phi: 0.0,
            phfw: 0.0,
            phfd: 0.0,
        };
        for (k, v) in Variable::ALL.into_iter().enumerate() {
            let raw = row.get(k + 1).unwrap_or("");
            let same_hour_dam = v == Variable::Dam
                && ts.minute() == 30
                && prev.is_some_and(|p| p.ts + period() == ts);
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                if same_hour_dam {
                    // hourly DAM published once per hour; expand to the half-hour
                    rec.set(v, prev.unwrap().dam);
                    runs[k] = 0;
                    continue;
                }
                runs[k] += 1;
                match (policy, prev) {
                    (FillPolicy::ForwardFill, Some(p)) if runs[k] <= limit => {
                        rec.set(v, p.get(v));
                        stats.fill_count += 1;
                    }
                    (FillPolicy::ForwardFill, Some(_)) => {
                        return Err(Error::GapExceedsLimit {
                            row: line,
                            missing: runs[k],
                            limit,
                        })
                    }
                    _ => {
                        return Err(Error::MissingValue {
                            row: line,
                            column: v.name().into(),
                        })
                    }
                }
            } else {
                let value: f64 = raw.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: v.name().into(),
                    value: raw.into(),
                })?;
                if !value.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: line,
                        column: v.name().into(),
                    });
                }
                if same_hour_dam && value != prev.unwrap().dam {
                    return Err(Error::InconsistentDam { row: line });
                }
                rec.set(v, value);
                runs[k] = 0;
            }
        }
        records.push(rec);
    }

    let series = SettlementSeries::new(records)?;
    Ok((series, stats))
}

pub fn write_csv<W: Write>(series: &SettlementSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in series.records() {
        let mut fields = Vec::with_capacity(COLUMNS.len());
        fields.push(format_ts(r.ts));
        // `{}` on f64 prints the shortest representation that parses back exactly
        fields.extend(Variable::ALL.iter().map(|&v| format!("{}", r.get(v))));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(series: &SettlementSeries, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(series, std::io::BufWriter::new(file))
}

/// Linear dependence of an exogenous column on the price deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub offset: f64,
    pub load: f64,
    pub noise_sd: f64,
}

impl Loading {
    const fn new(offset: f64, load: f64, noise_sd: f64) -> Self {
        Self {
            offset,
            load,
            noise_sd,
        }
    }
}

/// Parameters of the synthetic price process.
///
/// Price = daily seasonal profile + AR(1) deviation + occasional jumps.
/// Jumps affect only the period in which they occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub start: NaiveDateTime,
    pub base_price: f64,
    /// Amplitude of the daily cycle, peaking at `peak_hour`.
    pub daily_amplitude: f64,
    pub peak_hour: f64,
    /// Amplitude of the half-day harmonic (morning shoulder).
    pub semidaily_amplitude: f64,
    /// AR(1) coefficient of the deviation per settlement period.
    pub reversion: f64,
    pub innovation_sd: f64,
    /// Smallest jump magnitude, EUR/MWh.
    pub jump_min: f64,
    /// Mean of the exponential excess over `jump_min`.
    pub jump_mean_excess: f64,
    /// Probability that a jump is upward.
    pub jump_up_prob: f64,
    pub dam_load: f64,
    pub dam_noise_sd: f64,
    pub bmv: Loading,
    pub wdiff: Loading,
    pub inter: Loading,
    pub phpn: Loading,
    pub phi: Loading,
    pub phfw: Loading,
    pub phfd: Loading,
    /// Daily swing of the demand forecast, MW.
    pub demand_amplitude: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2021, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            base_price: 90.0,
            daily_amplitude: 30.0,
            peak_hour: 17.0,
            semidaily_amplitude: 8.0,
            reversion: 0.9,
            innovation_sd: 8.0,
            jump_min: 120.0,
            jump_mean_excess: 150.0,
            jump_up_prob: 0.7,
            dam_load: 0.5,
            dam_noise_sd: 4.0,
            bmv: Loading::new(0.0, 1.5, 10.0),
            wdiff: Loading::new(0.0, -4.0, 60.0),
            inter: Loading::new(0.0, 6.0, 80.0),
            phpn: Loading::new(4200.0, 12.0, 60.0),
            phi: Loading::new(0.0, -8.0, 50.0),
            phfw: Loading::new(1800.0, -20.0, 120.0),
            phfd: Loading::new(4500.0, 15.0, 80.0),
            demand_amplitude: 500.0,
        }
    }
}

impl SynthParams {
    /// Seasonal mean price at fractional hour-of-day `hour`.
    pub fn seasonal_mean(&self, hour: f64) -> f64 {
        self.base_price
            + self.daily_amplitude * (2.0 * PI * (hour - self.peak_hour) / 24.0).cos()
            + self.semidaily_amplitude * (4.0 * PI * (hour - 8.0) / 24.0).cos()
    }

    /// Stationary standard deviation of the AR(1) deviation.
    pub fn deviation_sd(&self) -> f64 {
        self.innovation_sd / (1.0 - self.reversion * self.reversion).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.reversion.abs() < 1.0) {
            return Err(Error::InvalidParam("reversion must lie in (-1, 1)".into()));
        }
        if !(self.innovation_sd >= 0.0) || !(self.jump_mean_excess > 0.0) {
            return Err(Error::InvalidParam("noise scales must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.jump_up_prob) {
            return Err(Error::InvalidParam("jump_up_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

pub fn hour_of(ts: NaiveDateTime) -> f64 {
    ts.hour() as f64 + ts.minute() as f64 / 60.0
}

/// Latent pieces of a synthetic series, aligned with its records.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthComponents {
    pub seasonal: Vec<f64>,
    pub deviation: Vec<f64>,
    /// Jump term per period; exactly zero where no jump occurred.
    pub jump: Vec<f64>,
}

pub fn synthesize(n_days: i64, seed: u64, spike_prob: f64, params: &SynthParams) -> Result<SettlementSeries> {
    synthesize_with_components(n_days, seed, spike_prob, params).map(|(s, _)| s)
}

pub fn synthesize_with_components(
    n_days: i64,
    seed: u64,
    spike_prob: f64,
    params: &SynthParams,
) -> Result<(SettlementSeries, SynthComponents)> {
    if n_days < 2 {
        return Err(Error::InvalidParam(format!("n_days must be at least 2, got {n_days}")));
    }
    if !(0.0..=1.0).contains(&spike_prob) {
        return Err(Error::InvalidParam(format!("spike_prob {spike_prob} outside [0, 1]")));
    }
    params.validate()?;
    if !is_aligned(params.start) {
        return Err(Error::InvalidParam("start must be on a settlement-period boundary".into()));
    }

    let n = n_days as usize * PERIODS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let excess = Exp::new(1.0 / params.jump_mean_excess).unwrap();

    let mut comps = SynthComponents {
        seasonal: Vec::with_capacity(n),
        deviation: Vec::with_capacity(n),
        jump: Vec::with_capacity(n),
    };
    let mut records = Vec::with_capacity(n);
    let mut x = params.deviation_sd() * std_normal.sample(&mut rng);
    let mut dam = 0.0;

    for i in 0..n {
        let ts = params.start + period() * i as i32;
        let hour = hour_of(ts);
        if i > 0 {
            x = params.reversion * x + params.innovation_sd * std_normal.sample(&mut rng);
        }
        let seasonal = params.seasonal_mean(hour);
        // draw unconditionally so the stream layout does not depend on spike_prob
        let u: f64 = rng.random();
        let up: f64 = rng.random();
        let size = params.jump_min + excess.sample(&mut rng);
        let jump = if u < spike_prob {
            if up < params.jump_up_prob {
                size
            } else {
                -size
            }
        } else {
            0.0
        };
        let dam_noise = params.dam_noise_sd * std_normal.sample(&mut rng);
        if ts.minute() == 0 || i == 0 {
            dam = seasonal + params.dam_load * x + dam_noise;
        }
        let mut exo = |l: &Loading| l.offset + l.load * x + l.noise_sd * std_normal.sample(&mut rng);
        let bmv = exo(&params.bmv);
        let wdiff = exo(&params.wdiff);
        let inter = exo(&params.inter);
        let phpn = exo(&params.phpn);
        let phi = exo(&params.phi);
        let phfw = exo(&params.phfw);
        let phfd = exo(&params.phfd)
            + params.demand_amplitude * (2.0 * PI * (hour - 18.0) / 24.0).cos();

        records.push(SettlementRecord {
            ts,
            bmp: seasonal + x + jump,
            bmv,
            wdiff,
            inter,
            dam,
            phpn,
            phi,
            phfw,
            phfd,
        });
        comps.seasonal.push(seasonal);
        comps.deviation.push(x);
        comps.jump.push(jump);
    }
    Ok((SettlementSeries::new(records)?, comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "ts,bmp,bmv,wdiff,inter,dam,phpn,phi,phfw,phfd\n";

    fn parse(body: &str, policy: FillPolicy) -> Result<(SettlementSeries, IngestStats)> {
        read_csv(format!("{HEADER}{body}").as_bytes(), policy)
    }

    #[test]
    fn three_well_formed_rows() {
        let body = "2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T00:30,1.5,2,3,4,50,6,7,8,9\n\
                    2021-01-01T01:00,2,2,3,4,51,6,7,8,9\n";
        let (s, stats) = parse(body, FillPolicy::Reject).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(stats.fill_count, 0);
        assert_eq!(s.record(1).bmp, 1.5);
        assert_eq!(s.position(s.ts(2)), Some(2));
    }

    #[test]
    fn forward_fill_copies_previous_cell() {
        let body = "2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T00:30,1,,3,4,50,6,7,8,9\n";
        let (s, stats) = parse(body, FillPolicy::ForwardFill).unwrap();
        assert_eq!(s.record(1).bmv, 2.0);
        assert_eq!(stats.fill_count, 1);

        let err = parse(body, FillPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 3, .. }), "{err}");
    }

    #[test]
    fn missing_half_hour_is_a_gap_under_reject() {
        let body = "2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T01:00,1,2,3,4,50,6,7,8,9\n";
        let err = parse(body, FillPolicy::Reject).unwrap_err();
        assert!(
            matches!(err, Error::GapExceedsLimit { row: 3, missing: 1, limit: 0 }),
            "{err}"
        );
        let (s, stats) = parse(body, FillPolicy::ForwardFill).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(stats.rows_inserted, 1);
    }

    #[test]
    fn forward_fill_is_capped() {
        let mut body = String::from("2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n");
        // four missing rows are bridged
        body.push_str("2021-01-01T02:30,1,2,3,4,50,6,7,8,9\n");
        assert!(parse(&body, FillPolicy::ForwardFill).is_ok());
        // five are not
        let body = "2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T03:00,1,2,3,4,50,6,7,8,9\n";
        let err = parse(body, FillPolicy::ForwardFill).unwrap_err();
        assert!(matches!(err, Error::GapExceedsLimit { missing: 5, .. }), "{err}");

        let mut body = String::from("2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n");
        for k in 1..=5 {
            let ts = format_ts(SynthParams::default().start + period() * k);
            body.push_str(&format!("{ts},,2,3,4,50,6,7,8,9\n"));
        }
        let err = parse(&body, FillPolicy::ForwardFill).unwrap_err();
        assert!(matches!(err, Error::GapExceedsLimit { missing: 5, .. }), "{err}");
    }

    #[test]
    fn out_of_order_rows_are_rejected_not_sorted() {
        let body = "2021-01-01T00:30,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n";
        let err = parse(body, FillPolicy::ForwardFill).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTimestamp { row: 3, .. }));
    }

    #[test]
    fn header_problems() {
        let err = read_csv("ts,bmp,bmv\n".as_bytes(), FillPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "wdiff"));
        let err = read_csv(
            "ts,bmv,bmp,wdiff,inter,dam,phpn,phi,phfw,phfd\n".as_bytes(),
            FillPolicy::Reject,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParam(_)));
    }

    #[test]
    fn non_finite_and_unparseable_cells() {
        let err = parse("2021-01-01T00:00,NaN,2,3,4,50,6,7,8,9\n", FillPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { ref column, .. } if column == "bmp"));
        let err = parse("2021-01-01T00:00,abc,2,3,4,50,6,7,8,9\n", FillPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = parse("2021-01-01T00:15,1,2,3,4,50,6,7,8,9\n", FillPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::MisalignedTimestamp { .. }));
    }

    #[test]
    fn dam_is_expanded_and_checked_within_the_hour() {
        let body = "2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T00:30,1,2,3,4,,6,7,8,9\n";
        let (s, stats) = parse(body, FillPolicy::Reject).unwrap();
        assert_eq!(s.record(1).dam, 50.0);
        assert_eq!(stats.fill_count, 0);
        let body = "2021-01-01T00:00,1,2,3,4,50,6,7,8,9\n\
                    2021-01-01T00:30,1,2,3,4,51,6,7,8,9\n";
        assert!(matches!(
            parse(body, FillPolicy::Reject).unwrap_err(),
            Error::InconsistentDam { row: 3 }
        ));
    }

    #[test]
    fn synthetic_two_days_without_spikes() {
        let p = SynthParams::default();
        let (s, c) = synthesize_with_components(2, 7, 0.0, &p).unwrap();
        assert_eq!(s.len(), 96);
        assert!(c.jump.iter().all(|&j| j == 0.0));
        // scan: every price sits inside the 3-sigma band around its seasonal mean
        let sd = p.deviation_sd();
        for (r, seasonal) in s.records().iter().zip(&c.seasonal) {
            assert!((r.bmp - seasonal).abs() <= 3.0 * sd, "{} vs {}", r.bmp, seasonal);
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let p = SynthParams::default();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&synthesize(2, 7, 0.0, &p).unwrap(), &mut a).unwrap();
        write_csv(&synthesize(2, 7, 0.0, &p).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_csv(&synthesize(2, 8, 0.0, &p).unwrap(), &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spike_prob_one_jumps_everywhere() {
        let p = SynthParams::default();
        let (_, c) = synthesize_with_components(2, 7, 1.0, &p).unwrap();
        assert!(c.jump.iter().all(|&j| j.abs() >= p.jump_min));
    }

    #[test]
    fn synth_rejects_bad_params() {
        let p = SynthParams::default();
        assert!(matches!(synthesize(0, 1, 0.0, &p), Err(Error::InvalidParam(_))));
        assert!(matches!(synthesize(-3, 1, 0.0, &p), Err(Error::InvalidParam(_))));
        assert!(matches!(synthesize(2, 1, 1.5, &p), Err(Error::InvalidParam(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn csv_round_trip_is_exact(days in 2i64..5, seed in any::<u64>(), spikes in 0.0f64..0.2) {
            let s = synthesize(days, seed, spikes, &SynthParams::default()).unwrap();
            let mut buf = Vec::new();
            write_csv(&s, &mut buf).unwrap();
            let (back, stats) = read_csv(buf.as_slice(), FillPolicy::Reject).unwrap();
            prop_assert_eq!(stats.fill_count, 0);
            prop_assert_eq!(back, s);
        }
    }
}
