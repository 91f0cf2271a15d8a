use std::collections::BTreeMap;
use std::time::Instant;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::naive::naive_at;
use super::plan::{BacktestPlan, ModelFamily};
use super::record::ForecastRecord;
use super::search::{fit_lear, fit_with, tune, Hyperparams, ModelFit, SearchSpace, TuningRecord};
use crate::features::{dataset_at, target_ts, Dataset, MAX_LAG, MAX_LEAD};
use crate::rng::derive_seed;
use crate::series::{SettlementSeries, Variable};
use crate::{Error, Matrix, Result, HORIZON};

const CHECKPOINT_VERSION: u32 = 1;

/// Gap between the last training origin and the forecast origin: a
/// training target window `s+2 ..= s+17` must end by `t−3`, the latest
/// published price.
pub const TRAIN_GAP: usize = MAX_LEAD + 3;

/// Retrain events between LEAR penalty re-selections (daily at 8-hour
/// retrains).
pub const LEAR_LAMBDA_REFRESH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedOrigin {
    pub model: ModelFamily,
    pub training_window: u32,
    pub origin_ts: NaiveDateTime,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub model: ModelFamily,
    pub training_window: u32,
    pub step: usize,
    pub origin_ts: NaiveDateTime,
    pub tuning_epoch: usize,
    /// First and last training origins; absent for Naive.
    pub train_origins: Option<(NaiveDateTime, NaiveDateTime)>,
    pub lambda_selected: Option<bool>,
    pub failed: bool,
}

impl RetrainEvent {
    /// Latest target period seen in training.
    pub fn last_training_target(&self) -> Option<NaiveDateTime> {
        self.train_origins.map(|(_, last)| target_ts(last, HORIZON - 1))
    }
}

/// Wall-clock spent per model and window. Not deterministic, so kept out of
/// checkpoints and the forecast outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub model: String,
    pub training_window: u32,
    pub fits: usize,
    pub fit_seconds: f64,
    pub tunes: usize,
    pub tune_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelState {
    family: ModelFamily,
    params: Option<Hyperparams>,
    tuned_epoch: Option<usize>,
    lambdas: Option<Vec<f64>>,
}

impl ModelState {
    fn new(family: ModelFamily) -> Self {
        Self {
            family,
            params: None,
            tuned_epoch: None,
            lambdas: None,
        }
    }
}

/// Everything needed to continue a backtest where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub plan: BacktestPlan,
    pub next_step: usize,
    pub records: Vec<ForecastRecord>,
    pub failed: Vec<FailedOrigin>,
    pub tuning: Vec<TuningRecord>,
    pub retrains: Vec<RetrainEvent>,
    models: Vec<ModelState>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidParam(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub plan: BacktestPlan,
    pub records: Vec<ForecastRecord>,
    pub failed: Vec<FailedOrigin>,
    pub tuning: Vec<TuningRecord>,
    pub retrains: Vec<RetrainEvent>,
    #[serde(skip)]
    pub timing: Vec<TimingEntry>,
}

impl BacktestReport {
    pub fn records_for(&self, model: ModelFamily, window: u32) -> Vec<ForecastRecord> {
        self.records
            .iter()
            .filter(|r| r.model == model.name() && r.training_window == window)
            .cloned()
            .collect()
    }

    pub fn failed_count(&self, model: ModelFamily, window: u32) -> usize {
        self.failed
            .iter()
            .filter(|f| f.model == model && f.training_window == window)
            .count()
    }
}

/// Walk-forward backtest driven one retrain step at a time.
///
/// Steps run over every training window in turn; within a window, step `i`
/// forecasts from origin `t_i = test_start − 2 + 16·i` after refitting each
/// model on the samples whose targets end by `t_i − 3`.
pub struct Backtest<'a> {
    series: &'a SettlementSeries,
    table: Option<(usize, Dataset)>,
    first_origin: usize,
    state: Checkpoint,
    timing: BTreeMap<(ModelFamily, u32), TimingEntry>,
}

impl<'a> Backtest<'a> {
    pub fn new(series: &'a SettlementSeries, plan: &BacktestPlan) -> Result<Self> {
        plan.validate()?;
        let models = plan.models.iter().map(|&m| ModelState::new(m)).collect();
        let state = Checkpoint {
            version: CHECKPOINT_VERSION,
            plan: plan.clone(),
            next_step: 0,
            records: Vec::new(),
            failed: Vec::new(),
            tuning: Vec::new(),
            retrains: Vec::new(),
            models,
        };
        Self::with_state(series, state)
    }

    pub fn resume(series: &'a SettlementSeries, checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.plan.validate()?;
        if checkpoint.next_step > checkpoint.plan.n_steps() * checkpoint.plan.training_window_days.len() {
            return Err(Error::Plan("checkpoint is past the end of its plan".into()));
        }
        Self::with_state(series, checkpoint)
    }

    fn with_state(series: &'a SettlementSeries, state: Checkpoint) -> Result<Self> {
        let plan = &state.plan;
        let start = series
            .position(plan.test_start)
            .ok_or_else(|| Error::InsufficientData(format!("series does not contain test_start {}", plan.test_start)))?;
        if start < 2 {
            return Err(Error::InsufficientData("no origin before test_start".into()));
        }
        let first_origin = start - 2;
        let last_origin = first_origin + HORIZON * (plan.n_steps() - 1);
        if last_origin + MAX_LEAD >= series.len() {
            return Err(Error::InsufficientData(format!(
                "series ends before test_end {}",
                plan.test_end
            )));
        }
        if first_origin < MAX_LAG {
            return Err(Error::InsufficientData("not enough history before the first origin".into()));
        }
        let trained = plan.models.iter().any(|&m| m != ModelFamily::Naive);
        let table = if trained {
            let widest = *plan.training_window_days.iter().max().expect("validated non-empty");
            let need = TRAIN_GAP + BacktestPlan::window_samples(widest) - 1 + MAX_LAG;
            if first_origin < need {
                return Err(Error::InsufficientData(format!(
                    "a {widest}-day training window needs {need} periods before the first origin, have {first_origin}"
                )));
            }
            let lo = first_origin - TRAIN_GAP - BacktestPlan::window_samples(widest) + 1;
            let positions: Vec<usize> = (lo..=last_origin).collect();
            Some((lo, dataset_at(series, &positions)?))
        } else {
            None
        };
        Ok(Self {
            series,
            table,
            first_origin,
            state,
            timing: BTreeMap::new(),
        })
    }

    pub fn plan(&self) -> &BacktestPlan {
        &self.state.plan
    }

    pub fn total_steps(&self) -> usize {
        self.state.plan.n_steps() * self.state.plan.training_window_days.len()
    }

    pub fn next_step(&self) -> usize {
        self.state.next_step
    }

    pub fn is_done(&self) -> bool {
        self.state.next_step >= self.total_steps()
    }

    pub fn records(&self) -> &[ForecastRecord] {
        &self.state.records
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.state.clone()
    }

    /// Run one retrain step for every model; returns how many records it
    /// added.
    pub fn step(&mut self) -> Result<usize> {
        if self.is_done() {
            return Ok(0);
        }
        let n_steps = self.state.plan.n_steps();
        let s = self.state.next_step;
        let (w, i) = (s / n_steps, s % n_steps);
        let days = self.state.plan.training_window_days[w];
        if i == 0 {
            let fresh = self.state.plan.models.iter().map(|&m| ModelState::new(m)).collect();
            self.state.models = fresh;
        }
        let before = self.state.records.len();
        for m in 0..self.state.models.len() {
            self.step_model(m, days, i)?;
        }
        self.state.next_step += 1;
        Ok(self.state.records.len() - before)
    }

    pub fn run(mut self) -> Result<BacktestReport> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> BacktestReport {
        BacktestReport {
            plan: self.state.plan,
            records: self.state.records,
            failed: self.state.failed,
            tuning: self.state.tuning,
            retrains: self.state.retrains,
            timing: self.timing.into_values().collect(),
        }
    }

    fn step_model(&mut self, m: usize, days: u32, i: usize) -> Result<()> {
        let family = self.state.models[m].family;
        let p = self.first_origin + HORIZON * i;
        let origin_ts = self.series.ts(p);
        let epoch = i / self.state.plan.steps_per_epoch();
        let mut event = RetrainEvent {
            model: family,
            training_window: days,
            step: i,
            origin_ts,
            tuning_epoch: epoch,
            train_origins: None,
            lambda_selected: None,
            failed: false,
        };

        let forecast = if family == ModelFamily::Naive {
            naive_at(self.series, p)
        } else {
            self.fit_and_forecast(m, days, i, epoch, p, &mut event)
        };

        match forecast {
            Ok(pred) => {
                for (k, &y_pred) in pred.iter().enumerate() {
                    self.state.records.push(ForecastRecord {
                        origin_ts,
                        horizon: k,
                        target_ts: target_ts(origin_ts, k),
                        y_true: self.series.value(p + k + 2, Variable::Bmp),
                        y_pred,
                        model: family.name().to_string(),
                        training_window: days,
                        tuning_epoch: epoch,
                    });
                }
            }
            Err(e) => {
                event.failed = true;
                self.state.failed.push(FailedOrigin {
                    model: family,
                    training_window: days,
                    origin_ts,
                    error: e.to_string(),
                });
            }
        }
        self.state.retrains.push(event);
        Ok(())
    }

    fn fit_and_forecast(
        &mut self,
        m: usize,
        days: u32,
        i: usize,
        epoch: usize,
        p: usize,
        event: &mut RetrainEvent,
    ) -> Result<Vec<f64>> {
        let plan = &self.state.plan;
        let family = self.state.models[m].family;
        let (lo, table) = self.table.as_ref().expect("built when a trained model is planned");
        let n = BacktestPlan::window_samples(days);
        let last = p - TRAIN_GAP;
        let first = last + 1 - n;
        event.train_origins = Some((self.series.ts(first), self.series.ts(last)));
        let x = table.x.slice_rows(first - lo, last - lo + 1);
        let y = table.y.slice_rows(first - lo, last - lo + 1);
        let x_now = table.x.row(p - lo).to_vec();
        let n_val = plan.validation_samples(days).min(n);
        let split = |mat: &Matrix| (mat.slice_rows(0, n - n_val), mat.slice_rows(n - n_val, n));
        let timing = self
            .timing
            .entry((family, days))
            .or_insert_with(|| TimingEntry {
                model: family.name().to_string(),
                training_window: days,
                ..Default::default()
            });

        let fit = match family {
            ModelFamily::Lear => {
                let state = &mut self.state.models[m];
                let held = if i.is_multiple_of(LEAR_LAMBDA_REFRESH) {
                    None
                } else {
                    state.lambdas.clone()
                };
                event.lambda_selected = Some(held.is_none());
                let t0 = Instant::now();
                let fit = fit_lear(&x, &y, held.as_deref());
                timing.fits += 1;
                timing.fit_seconds += t0.elapsed().as_secs_f64();
                let fit = fit?;
                if let ModelFit::Lear(l) = &fit {
                    if l.lambda_selected {
                        state.lambdas = Some(l.lambdas());
                    }
                }
                fit
            }
            ModelFamily::Rf | ModelFamily::Gbt | ModelFamily::Mlp => {
                let (x_fit, x_val) = split(&x);
                let (y_fit, y_val) = split(&y);
                if self.state.models[m].tuned_epoch != Some(epoch) {
                    let space = SearchSpace::preset(family, plan.search)?;
                    let seed = derive_seed(plan.seed, &[family.code(), days as u64, epoch as u64, 0]);
                    let mut rec = tune(family, &x_fit, &y_fit, &x_val, &y_val, &space, plan.tune_budget, seed)?;
                    rec.epoch_start = Some(self.series.ts(p));
                    rec.training_window = days;
                    rec.epoch = epoch;
                    timing.tunes += 1;
                    timing.tune_seconds += rec.seconds;
                    let state = &mut self.state.models[m];
                    state.params = Some(rec.selected_params().clone());
                    state.tuned_epoch = Some(epoch);
                    self.state.tuning.push(rec);
                }
                let params = self.state.models[m].params.clone().expect("set by tuning");
                let seed = derive_seed(plan.seed, &[family.code(), days as u64, i as u64, 1]);
                let t0 = Instant::now();
                // tree ensembles train on the whole window; the network
                // keeps the validation tail for early stopping
                let fit = match family {
                    ModelFamily::Mlp => fit_with(&params, &x_fit, &y_fit, &x_val, &y_val, seed),
                    _ => fit_with(&params, &x, &y, &x_val, &y_val, seed),
                };
                timing.fits += 1;
                timing.fit_seconds += t0.elapsed().as_secs_f64();
                fit?
            }
            ModelFamily::Naive => unreachable!("naive is not fitted"),
        };
        let pred = fit.predict(&x_now);
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(pred)
    }
}

pub fn run_backtest(series: &SettlementSeries, plan: &BacktestPlan) -> Result<BacktestReport> {
    Backtest::new(series, plan)?.run()
}
