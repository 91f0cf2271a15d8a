//! Fixed-layout (feature, target) samples at each forecast origin.
//!
//! At origin `t` the periods `t` and `t+1` are already closed, so targets are
//! the prices of `t+2 ..= t+17`. Historical blocks end where each feed stops
//! being available; future-looking blocks cover the forecast horizon.
//!
//! Feature layout, in order (offsets inclusive, relative to `t`):
//!
//! | block  | variable | offsets    | len |
//! |--------|----------|------------|-----|
//! | 0      | bmp      | -51 ..= -3 | 49  |
//! | 1      | bmv      | -51 ..= -3 | 49  |
//! | 2      | wdiff    | -51 ..= -3 | 49  |
//! | 3      | inter    | -50 ..= -2 | 49  |
//! | 4      | dam      | -48 ..= 0  | 49  |
//! | 5      | phpn     | +2 ..= +17 | 16  |
//! | 6      | phi      | +2 ..= +17 | 16  |
//! | 7      | phfw     | +2 ..= +17 | 16  |
//! | 8      | phfd     | +2 ..= +17 | 16  |
//! | 9      | dam      | +1 ..= +16 | 16  |

use std::io::Write;
use std::ops::Range;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::series::{format_ts, period, SettlementSeries, Variable};
use crate::{Error, Matrix, Result, HORIZON};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub var: Variable,
    pub start: i64,
    pub end: i64,
}

impl Block {
    const fn new(var: Variable, start: i64, end: i64) -> Self {
        Self { var, start, end }
    }

    pub const fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub const fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn offsets(&self) -> std::ops::RangeInclusive<i64> {
        self.start..=self.end
    }
}

pub const FEATURE_BLOCKS: [Block; 10] = [
    Block::new(Variable::Bmp, -51, -3),
    Block::new(Variable::Bmv, -51, -3),
    Block::new(Variable::Wdiff, -51, -3),
    Block::new(Variable::Inter, -50, -2),
    Block::new(Variable::Dam, -48, 0),
    Block::new(Variable::Phpn, 2, 17),
    Block::new(Variable::Phi, 2, 17),
    Block::new(Variable::Phfw, 2, 17),
    Block::new(Variable::Phfd, 2, 17),
    Block::new(Variable::Dam, 1, 16),
];

pub const TARGET_BLOCK: Block = Block::new(Variable::Bmp, 2, 17);

pub const FEATURE_DIM: usize = 325;
/// Deepest lag used by any block.
pub const MAX_LAG: usize = 51;
/// Furthest lead used by any block or the target.
pub const MAX_LEAD: usize = 17;

/// Offset of the first feature of each block in the feature vector.
pub fn block_starts() -> [usize; 10] {
    let mut out = [0; 10];
    let mut acc = 0;
    for (i, b) in FEATURE_BLOCKS.iter().enumerate() {
        out[i] = acc;
        acc += b.len();
    }
    out
}

/// Column names `<var>_<m|p><offset>`, e.g. `bmp_m51`, `dam_p16`.
pub fn feature_names() -> Vec<String> {
    FEATURE_BLOCKS
        .iter()
        .flat_map(|b| b.offsets().map(move |o| offset_name(b.var.name(), o)))
        .collect()
}

pub fn target_names() -> Vec<String> {
    TARGET_BLOCK.offsets().map(|o| offset_name("y", o)).collect()
}

fn offset_name(prefix: &str, o: i64) -> String {
    if o <= 0 {
        format!("{prefix}_m{}", -o)
    } else {
        format!("{prefix}_p{o}")
    }
}

/// Positions at which a full sample can be built for a series of `len` records.
pub fn valid_origins(len: usize) -> Range<usize> {
    if len < MAX_LAG + MAX_LEAD + 1 {
        return 0..0;
    }
    MAX_LAG..len - MAX_LEAD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub origin_ts: NaiveDateTime,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub hour_of_target: [u32; HORIZON],
}

pub fn make_sample(series: &SettlementSeries, origin_ts: NaiveDateTime) -> Result<Sample> {
    let pos = series
        .position(origin_ts)
        .ok_or(Error::UnknownTimestamp(origin_ts))?;
    sample_at(series, pos)
}

pub fn sample_at(series: &SettlementSeries, pos: usize) -> Result<Sample> {
    let origin_ts = series.ts(pos);
    if pos < MAX_LAG {
        return Err(Error::InsufficientHistory { origin: origin_ts });
    }
    if pos + MAX_LEAD >= series.len() {
        return Err(Error::InsufficientFuture { origin: origin_ts });
    }
    let mut x = Vec::with_capacity(FEATURE_DIM);
    fill_features(series, pos, &mut x);
    let y = fill_target(series, pos);
    Ok(Sample {
        origin_ts,
        x,
        y,
        hour_of_target: target_hours(origin_ts),
    })
}

fn fill_features(series: &SettlementSeries, pos: usize, out: &mut Vec<f64>) {
    for b in &FEATURE_BLOCKS {
        for o in b.offsets() {
            out.push(series.value((pos as i64 + o) as usize, b.var));
        }
    }
}

fn fill_target(series: &SettlementSeries, pos: usize) -> Vec<f64> {
    TARGET_BLOCK
        .offsets()
        .map(|o| series.value((pos as i64 + o) as usize, TARGET_BLOCK.var))
        .collect()
}

/// Hour-of-day of each target period `t + (k+2)` for `k = 0..16`.
pub fn target_hours(origin_ts: NaiveDateTime) -> [u32; HORIZON] {
    let mut out = [0; HORIZON];
    for (k, h) in out.iter_mut().enumerate() {
        *h = target_ts(origin_ts, k).hour();
    }
    out
}

pub fn target_ts(origin_ts: NaiveDateTime, horizon: usize) -> NaiveDateTime {
    origin_ts + period() * (horizon as i32 + 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub origin_ts: NaiveDateTime,
    pub hour_of_target: [u32; HORIZON],
}

/// Stacked samples; row `i` corresponds to `meta[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub meta: Vec<SampleMeta>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }
}

pub fn make_dataset(series: &SettlementSeries, origins: &[NaiveDateTime]) -> Result<Dataset> {
    let positions = origins
        .iter()
        .map(|&ts| series.position(ts).ok_or(Error::UnknownTimestamp(ts)))
        .collect::<Result<Vec<_>>>()?;
    dataset_at(series, &positions)
}

pub fn dataset_at(series: &SettlementSeries, positions: &[usize]) -> Result<Dataset> {
    let mut x = Vec::with_capacity(positions.len() * FEATURE_DIM);
    let mut y = Vec::with_capacity(positions.len() * HORIZON);
    let mut meta = Vec::with_capacity(positions.len());
    for &pos in positions {
        let s = sample_at(series, pos)?;
        x.extend_from_slice(&s.x);
        y.extend_from_slice(&s.y);
        meta.push(SampleMeta {
            origin_ts: s.origin_ts,
            hour_of_target: s.hour_of_target,
        });
    }
    Ok(Dataset {
        x: Matrix::from_vec(positions.len(), FEATURE_DIM, x)?,
        y: Matrix::from_vec(positions.len(), HORIZON, y)?,
        meta,
    })
}

/// Samples at every valid origin of the series; row `i` is origin position
/// `valid_origins(len).start + i`.
pub fn full_table(series: &SettlementSeries) -> Result<Dataset> {
    let positions: Vec<usize> = valid_origins(series.len()).collect();
    dataset_at(series, &positions)
}

pub fn write_dataset_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["origin_ts".to_string()];
    header.extend(feature_names());
    header.extend(target_names());
    w.write_record(&header)?;
    for (i, m) in ds.meta.iter().enumerate() {
        let mut row = Vec::with_capacity(header.len());
        row.push(format_ts(m.origin_ts));
        row.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        row.extend(ds.y.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
