use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::series::{format_ts, parse_ts, PERIODS_PER_DAY};
use crate::{Error, Result, HORIZON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Naive,
    Lear,
    Rf,
    Gbt,
    Mlp,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [Self::Naive, Self::Lear, Self::Rf, Self::Gbt, Self::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Lear => "lear",
            Self::Rf => "rf",
            Self::Gbt => "gbt",
            Self::Mlp => "mlp",
        }
    }

    /// Families whose hyperparameters are searched at each tuning epoch.
    pub fn is_tuned(self) -> bool {
        matches!(self, Self::Rf | Self::Gbt | Self::Mlp)
    }

    pub(crate) fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Plan(format!("unknown model family '{s}'")))
    }
}

/// Hyperparameter grids searched during tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchPreset {
    /// The full grids used for the studied model families.
    Full,
    /// Small models and short training, for desk-scale runs and tests.
    Compact,
}

impl FromStr for SearchPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Self::Full),
            "compact" => Ok(Self::Compact),
            other => Err(Error::Plan(format!("unknown search preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestPlan {
    /// Training windows in days; the backtest runs once per window.
    pub training_window_days: Vec<u32>,
    pub retrain_stride_periods: usize,
    pub tune_stride_days: u32,
    pub validation_cap_days: f64,
    pub models: Vec<ModelFamily>,
    pub seed: u64,
    /// First forecast target period.
    pub test_start: NaiveDateTime,
    /// End of the test range, exclusive.
    pub test_end: NaiveDateTime,
    /// Random-search trials per tuning epoch.
    pub tune_budget: usize,
    pub search: SearchPreset,
}

pub const CONFIG_KEYS: [&str; 10] = [
    "training_window_days",
    "retrain_stride_periods",
    "tune_stride_days",
    "validation_cap_days",
    "model",
    "seed",
    "test_start",
    "test_end",
    "tune_budget",
    "search",
];

impl BacktestPlan {
    pub fn new(
        training_window_days: Vec<u32>,
        models: Vec<ModelFamily>,
        test_start: NaiveDateTime,
        test_end: NaiveDateTime,
        seed: u64,
    ) -> Self {
        Self {
            training_window_days,
            retrain_stride_periods: HORIZON,
            tune_stride_days: 90,
            validation_cap_days: 30.0,
            models,
            seed,
            test_start,
            test_end,
            tune_budget: 10,
            search: SearchPreset::Full,
        }
    }

    /// Parse a flat `key = value` file. `#` starts a comment; lists are
    /// comma-separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut windows = None;
        let mut stride = HORIZON;
        let mut tune_stride = 90;
        let mut cap = 30.0;
        let mut models = None;
        let mut seed = 0;
        let mut start = None;
        let mut end = None;
        let mut budget = 10;
        let mut search = SearchPreset::Full;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Plan(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Plan(format!("line {}: invalid {key} '{value}': {what}", i + 1));
            match key {
                "training_window_days" => {
                    windows = Some(
                        value
                            .split(',')
                            .map(|v| v.trim().parse::<u32>().map_err(|_| bad("expected days")))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "retrain_stride_periods" => stride = value.parse().map_err(|_| bad("expected an integer"))?,
                "tune_stride_days" => tune_stride = value.parse().map_err(|_| bad("expected an integer"))?,
                "validation_cap_days" => cap = value.parse().map_err(|_| bad("expected a number"))?,
                "model" => {
                    models = Some(value.split(',').map(ModelFamily::from_str).collect::<Result<Vec<_>>>()?)
                }
                "seed" => seed = value.parse().map_err(|_| bad("expected an integer"))?,
                "test_start" => start = Some(parse_ts(value).ok_or_else(|| bad("expected YYYY-MM-DDTHH:MM"))?),
                "test_end" => end = Some(parse_ts(value).ok_or_else(|| bad("expected YYYY-MM-DDTHH:MM"))?),
                "tune_budget" => budget = value.parse().map_err(|_| bad("expected an integer"))?,
                "search" => search = value.parse()?,
                other => return Err(Error::Plan(format!("line {}: unknown key '{other}'", i + 1))),
            }
        }
        let missing = |k: &str| Error::Plan(format!("missing required key '{k}'"));
        let plan = Self {
            training_window_days: windows.ok_or_else(|| missing("training_window_days"))?,
            retrain_stride_periods: stride,
            tune_stride_days: tune_stride,
            validation_cap_days: cap,
            models: models.ok_or_else(|| missing("model"))?,
            seed,
            test_start: start.ok_or_else(|| missing("test_start"))?,
            test_end: end.ok_or_else(|| missing("test_end"))?,
            tune_budget: budget,
            search,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_config(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let search = match self.search {
            SearchPreset::Full => "full",
            SearchPreset::Compact => "compact",
        };
        format!(
            "training_window_days = {}\nretrain_stride_periods = {}\ntune_stride_days = {}\nvalidation_cap_days = {}\nmodel = {}\nseed = {}\ntest_start = {}\ntest_end = {}\ntune_budget = {}\nsearch = {}\n",
            join(self.training_window_days.iter().map(u32::to_string).collect()),
            self.retrain_stride_periods,
            self.tune_stride_days,
            self.validation_cap_days,
            join(self.models.iter().map(|m| m.name().to_string()).collect()),
            self.seed,
            format_ts(self.test_start),
            format_ts(self.test_end),
            self.tune_budget,
            search,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Plan(m));
        if self.training_window_days.is_empty() || self.training_window_days.contains(&0) {
            return bad("training windows must be at least one day".into());
        }
        if self.retrain_stride_periods != HORIZON {
            return bad(format!(
                "retrain stride must equal the {HORIZON}-period forecast horizon, got {}",
                self.retrain_stride_periods
            ));
        }
        if self.tune_stride_days == 0 {
            return bad("tune_stride_days must be >= 1".into());
        }
        if !(self.validation_cap_days > 0.0) {
            return bad("validation_cap_days must be > 0".into());
        }
        if self.models.is_empty() {
            return bad("no models listed".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return bad(format!("model '{m}' listed twice"));
            }
        }
        if self.tune_budget == 0 {
            return bad("tune_budget must be >= 1".into());
        }
        if self.test_end <= self.test_start {
            return bad("test_end must be after test_start".into());
        }
        let periods = self.test_periods();
        if periods % HORIZON as i64 != 0 || (self.test_end - self.test_start).num_seconds() % 1800 != 0 {
            return bad(format!(
                "test range of {} minutes is not a whole number of {HORIZON}-period steps",
                (self.test_end - self.test_start).num_minutes()
            ));
        }
        Ok(())
    }

    pub fn test_periods(&self) -> i64 {
        (self.test_end - self.test_start).num_minutes() / 30
    }

    /// Retrain events per training window.
    pub fn n_steps(&self) -> usize {
        (self.test_periods() / HORIZON as i64).max(0) as usize
    }

    /// Retrain events per tuning epoch.
    pub fn steps_per_epoch(&self) -> usize {
        self.tune_stride_days as usize * PERIODS_PER_DAY / HORIZON
    }

    /// Training samples in a window of `days`.
    pub fn window_samples(days: u32) -> usize {
        days as usize * PERIODS_PER_DAY
    }

    /// Validation samples: a quarter of the window, capped.
    pub fn validation_samples(&self, days: u32) -> usize {
        let vdays = (0.25 * days as f64).min(self.validation_cap_days);
        (vdays * PERIODS_PER_DAY as f64).round() as usize
    }
}
