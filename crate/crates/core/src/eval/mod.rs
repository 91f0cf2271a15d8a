//! Forecast accuracy metrics and model comparison.

mod dm;
mod metrics;

pub use dm::{aligned_errors, bartlett_lrv, dm_matrix, dm_test, DmMatrix, DmResult, DM_ALPHA, DM_MIN_SAMPLES};
pub use metrics::{hourly_breakdown, mae, rmse, smape, HourStats, HourlyBreakdown, MetricSet};
