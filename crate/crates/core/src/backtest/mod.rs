//! Walk-forward backtesting.

mod engine;
mod naive;
mod plan;
mod record;
mod search;

pub use engine::{
    run_backtest, Backtest, BacktestReport, Checkpoint, FailedOrigin, RetrainEvent, TimingEntry, LEAR_LAMBDA_REFRESH,
    TRAIN_GAP,
};
pub use naive::{naive_forecast, NAIVE_LAG};
pub use plan::{BacktestPlan, ModelFamily, SearchPreset, CONFIG_KEYS};
pub use record::{read_records, write_records, ForecastRecord, RecordWriter, RECORD_HEADER};
pub use search::{fit_lear, fit_with, tune, Hyperparams, ModelFit, SearchSpace, Trial, TuningRecord};
