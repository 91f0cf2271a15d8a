//! Report tables written after a backtest, and the charts drawn from them.

mod svg;

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::{write_records, BacktestReport, ForecastRecord, ModelFamily};
use crate::eval::{dm_matrix, hourly_breakdown, DmMatrix, MetricSet};
use crate::series::format_ts;
use crate::{Error, Result, HORIZON};

pub use svg::{hourly_svg, timing_svg, Axis};

pub const METRICS_FILE: &str = "metrics.csv";
pub const HOURLY_FILE: &str = "hourly.csv";
pub const DM_FILE: &str = "dm_matrix.csv";
pub const DM_DETAIL_FILE: &str = "dm_detail.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const FAILED_FILE: &str = "failed.csv";
pub const TUNING_FILE: &str = "tuning.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub window_days: u32,
    /// `None` when every origin failed.
    pub metrics: Option<MetricSet>,
    pub failed_origins: usize,
}

/// One row per model and training window, models in plan order.
pub fn metrics_table(report: &BacktestReport) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for &m in &report.plan.models {
        for &w in &report.plan.training_window_days {
            rows.push(MetricsRow {
                model: m.name().to_string(),
                window_days: w,
                metrics: MetricSet::from_records(&report.records_for(m, w)).ok(),
                failed_origins: report.failed_count(m, w),
            });
        }
    }
    rows
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "window_days", "mae", "rmse", "smape", "n", "failed_origins"])?;
    for r in rows {
        let (mae, rmse, smape, n) = match &r.metrics {
            Some(m) => (m.mae.to_string(), m.rmse.to_string(), m.smape.to_string(), m.n),
            None => (String::new(), String::new(), String::new(), 0),
        };
        out.write_record([
            r.model.clone(),
            r.window_days.to_string(),
            mae,
            rmse,
            smape,
            n.to_string(),
            r.failed_origins.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRow {
    pub window_days: u32,
    pub hour: u32,
    pub n: usize,
    pub mean_price: Option<f64>,
    pub sd_price: Option<f64>,
    /// MAE per model, aligned with [`HourlyTable::models`].
    pub mae: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyTable {
    pub models: Vec<String>,
    pub rows: Vec<HourlyRow>,
}

const HOURLY_FIXED: [&str; 5] = ["window_days", "hour", "n", "mean_price", "sd_price"];

impl HourlyTable {
    pub fn from_report(report: &BacktestReport) -> Result<Self> {
        let models: Vec<String> = report.plan.models.iter().map(|m| m.name().to_string()).collect();
        let mut rows = Vec::new();
        for &w in &report.plan.training_window_days {
            let recs: Vec<ForecastRecord> =
                report.records.iter().filter(|r| r.training_window == w).cloned().collect();
            if recs.is_empty() {
                continue;
            }
            let hb = hourly_breakdown(&recs)?;
            for h in hb.hours {
                let finite = |v: f64| v.is_finite().then_some(v);
                rows.push(HourlyRow {
                    window_days: w,
                    hour: h.hour,
                    n: h.n,
                    mean_price: finite(h.mean_price),
                    sd_price: finite(h.sd_price),
                    mae: models.iter().map(|m| h.mae.get(m).and_then(|(_, v)| *v)).collect(),
                });
            }
        }
        Ok(Self { models, rows })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = HOURLY_FIXED.iter().map(|s| s.to_string()).collect();
        header.extend(self.models.iter().map(|m| format!("mae_{m}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.window_days.to_string(),
                r.hour.to_string(),
                r.n.to_string(),
                opt(r.mean_price),
                opt(r.sd_price),
            ];
            rec.extend(r.mae.iter().map(|v| opt(*v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for (i, col) in HOURLY_FIXED.iter().enumerate() {
            if header.get(i).map(String::as_str) != Some(col) {
                return Err(Error::MissingColumn(col.to_string()));
            }
        }
        let models = header[HOURLY_FIXED.len()..]
            .iter()
            .map(|h| h.strip_prefix("mae_").map(str::to_string).ok_or_else(|| Error::MissingColumn(format!("mae_{h}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let cell = |k: usize| CsvCell { row: i + 2, column: &header[k], value: rec.get(k).unwrap_or("") };
            rows.push(HourlyRow {
                window_days: cell(0).parse()?,
                hour: cell(1).parse()?,
                n: cell(2).parse()?,
                mean_price: cell(3).parse_opt()?,
                sd_price: cell(4).parse_opt()?,
                mae: (0..models.len()).map(|j| cell(5 + j).parse_opt()).collect::<Result<_>>()?,
            });
        }
        Ok(Self { models, rows })
    }

    pub fn windows(&self) -> Vec<u32> {
        let mut w: Vec<u32> = self.rows.iter().map(|r| r.window_days).collect();
        w.dedup();
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    pub window_days: u32,
    pub fits: usize,
    pub fit_seconds: f64,
    pub tunes: usize,
    pub tune_seconds: f64,
}

impl TimingRow {
    pub fn mean_fit_seconds(&self) -> f64 {
        if self.fits == 0 {
            0.0
        } else {
            self.fit_seconds / self.fits as f64
        }
    }
}

pub fn timing_table(report: &BacktestReport) -> Vec<TimingRow> {
    let mut rows: Vec<TimingRow> = report
        .timing
        .iter()
        .map(|t| TimingRow {
            model: t.model.clone(),
            window_days: t.training_window,
            fits: t.fits,
            fit_seconds: t.fit_seconds,
            tunes: t.tunes,
            tune_seconds: t.tune_seconds,
        })
        .collect();
    let order = |m: &str| report.plan.models.iter().position(|f| f.name() == m);
    rows.sort_by_key(|r| (order(&r.model), r.window_days));
    rows
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["model", "window_days", "fits", "fit_seconds", "tunes", "tune_seconds"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_timing_csv<R: Read>(r: R) -> Result<Vec<TimingRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// DM results per training window, over the records of that window.
pub fn dm_tables(report: &BacktestReport) -> Vec<(u32, DmMatrix)> {
    report
        .plan
        .training_window_days
        .iter()
        .map(|&w| {
            let recs: Vec<ForecastRecord> =
                report.records.iter().filter(|r| r.training_window == w).cloned().collect();
            (w, dm_matrix(&recs, HORIZON))
        })
        .collect()
}

/// Decision grid: 1 where the row model is significantly more accurate than
/// the column model, 0 otherwise, blank on the diagonal.
pub fn write_dm_csv<W: Write>(tables: &[(u32, DmMatrix)], models: &[ModelFamily], w: W) -> Result<()> {
    let names: Vec<&str> = models.iter().map(|m| m.name()).collect();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["window_days", "model"];
    header.extend(&names);
    out.write_record(&header)?;
    for (w, dm) in tables {
        for a in &names {
            let mut rec = vec![w.to_string(), a.to_string()];
            for b in &names {
                rec.push(if a == b {
                    String::new()
                } else {
                    u8::from(dm.decision(a, b)).to_string()
                });
            }
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_dm_detail_csv<W: Write>(tables: &[(u32, DmMatrix)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["window_days", "model_a", "model_b", "statistic", "p_value", "reject", "n"])?;
    for (w, dm) in tables {
        for (i, a) in dm.models.iter().enumerate() {
            for (j, b) in dm.models.iter().enumerate() {
                if i == j {
                    continue;
                }
                let cells = match &dm.results[i][j] {
                    Some(r) => [r.statistic.to_string(), r.p_value.to_string(), u8::from(r.reject).to_string(), r.n.to_string()],
                    None => [String::new(), String::new(), String::new(), String::new()],
                };
                let mut rec = vec![w.to_string(), a.clone(), b.clone()];
                rec.extend(cells);
                out.write_record(&rec)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_failed_csv<W: Write>(report: &BacktestReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "window_days", "origin_ts", "error"])?;
    for f in &report.failed {
        out.write_record([f.model.name(), &f.training_window.to_string(), &format_ts(f.origin_ts), &f.error])?;
    }
    out.flush()?;
    Ok(())
}

/// Write the full table bundle into `dir`; returns the files written, in a
/// fixed order. Only `timing.csv` depends on wall-clock time.
pub fn write_bundle(report: &BacktestReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut file = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        written.push(p.clone());
        Ok(BufWriter::new(File::create(p)?))
    };
    write_records(&report.records, file(FORECASTS_FILE)?)?;
    write_metrics_csv(&metrics_table(report), file(METRICS_FILE)?)?;
    HourlyTable::from_report(report)?.write_csv(file(HOURLY_FILE)?)?;
    let dm = dm_tables(report);
    write_dm_csv(&dm, &report.plan.models, file(DM_FILE)?)?;
    write_dm_detail_csv(&dm, file(DM_DETAIL_FILE)?)?;
    write_failed_csv(report, file(FAILED_FILE)?)?;
    let mut tuning = file(TUNING_FILE)?;
    serde_json::to_writer_pretty(&mut tuning, &report.tuning)?;
    tuning.write_all(b"\n")?;
    tuning.flush()?;
    write_timing_csv(&timing_table(report), file(TIMING_FILE)?)?;
    Ok(written)
}

/// Draw `hourly.svg` and `timing.svg` from the tables in `dir`.
pub fn render_charts(dir: &Path) -> Result<Vec<PathBuf>> {
    let hourly_path = dir.join(HOURLY_FILE);
    let timing_path = dir.join(TIMING_FILE);
    for p in [&hourly_path, &timing_path] {
        if !p.is_file() {
            return Err(Error::InsufficientData(format!("{} not found", p.display())));
        }
    }
    let hourly = HourlyTable::read_csv(File::open(&hourly_path)?)?;
    let timing = read_timing_csv(File::open(&timing_path)?)?;
    let out = [(dir.join("hourly.svg"), hourly_svg(&hourly)), (dir.join("timing.svg"), timing_svg(&timing))];
    let mut written = Vec::new();
    for (p, body) in out {
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct CsvCell<'a> {
    row: usize,
    column: &'a str,
    value: &'a str,
}

impl CsvCell<'_> {
    fn err(&self) -> Error {
        Error::Parse {
            row: self.row,
            column: self.column.to_string(),
            value: self.value.to_string(),
        }
    }

    fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value.trim().parse().map_err(|_| self.err())
    }

    fn parse_opt(&self) -> Result<Option<f64>> {
        if self.value.trim().is_empty() {
            Ok(None)
        } else {
            self.parse().map(Some)
        }
    }
}
