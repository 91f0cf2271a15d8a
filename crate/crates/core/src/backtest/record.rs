use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::features::target_ts;
use crate::series::{format_ts, parse_ts};
use crate::{Error, Result};

/// One forecast point: horizon `k` of the forecast issued at `origin_ts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub origin_ts: NaiveDateTime,
    /// `0..16`; the target is `origin_ts + (k+2)` periods.
    pub horizon: usize,
    pub target_ts: NaiveDateTime,
    pub y_true: f64,
    pub y_pred: f64,
    pub model: String,
    pub training_window: u32,
    pub tuning_epoch: usize,
}

impl ForecastRecord {
    pub fn error(&self) -> f64 {
        self.y_pred - self.y_true
    }

    pub fn is_consistent(&self) -> bool {
        self.horizon < crate::HORIZON && self.target_ts == target_ts(self.origin_ts, self.horizon)
    }
}

pub const RECORD_HEADER: [&str; 8] = [
    "model",
    "training_window",
    "tuning_epoch",
    "origin_ts",
    "horizon",
    "target_ts",
    "y_true",
    "y_pred",
];

/// Writes records as CSV, one row at a time.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(RECORD_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &ForecastRecord) -> Result<()> {
        self.inner.write_record([
            r.model.clone(),
            r.training_window.to_string(),
            r.tuning_epoch.to_string(),
            format_ts(r.origin_ts),
            r.horizon.to_string(),
            format_ts(r.target_ts),
            r.y_true.to_string(),
            r.y_pred.to_string(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_records<W: Write>(records: &[ForecastRecord], writer: W) -> Result<()> {
    let mut w = RecordWriter::new(writer)?;
    for r in records {
        w.write(r)?;
    }
    w.flush()
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    for col in RECORD_HEADER {
        if !header.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let idx = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let cols: Vec<usize> = RECORD_HEADER.iter().map(|c| idx(c)).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| row.get(cols[k]).unwrap_or("");
        let parse_err = |k: usize| Error::Parse {
            row: line,
            column: RECORD_HEADER[k].to_string(),
            value: field(k).to_string(),
        };
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| parse_err(k));
        let int = |k: usize| field(k).parse::<usize>().map_err(|_| parse_err(k));
        let ts = |k: usize| parse_ts(field(k)).ok_or_else(|| parse_err(k));
        out.push(ForecastRecord {
            model: field(0).to_string(),
            training_window: int(1)? as u32,
            tuning_epoch: int(2)?,
            origin_ts: ts(3)?,
            horizon: int(4)?,
            target_ts: ts(5)?,
            y_true: num(6)?,
            y_pred: num(7)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let origin = parse_ts("2024-03-01T10:30").unwrap();
        let records: Vec<ForecastRecord> = (0..3)
            .map(|k| ForecastRecord {
                origin_ts: origin,
                horizon: k,
                target_ts: target_ts(origin, k),
                y_true: 0.1 * k as f64 + 1.0 / 3.0,
                y_pred: -7.25e-3 * k as f64,
                model: "lear".into(),
                training_window: 30,
                tuning_epoch: 0,
            })
            .collect();
        assert!(records.iter().all(ForecastRecord::is_consistent));
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), records);
    }
}
