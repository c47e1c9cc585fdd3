//! Trains several freeze policies from one starting point and tabulates
//! parameter counts, epoch time and test metrics side by side.

use serde::Serialize;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::trainer::{eval_batches, evaluate, train_with, EpochRecord, Evaluation, Metrics, TrainConfig};
use crate::tuning::{count_params, Convention, FreezePolicy, OptimizerHp};

/// Train, validation and test examples sharing one tokenizer.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub pad_id: u32,
}

#[derive(Clone, Debug)]
pub struct Strategy {
    pub policy: FreezePolicy,
    pub optimizer: OptimizerHp,
}

impl Strategy {
    /// The policy with its default learning rate and decay.
    pub fn standard(policy: FreezePolicy) -> Self {
        Strategy { optimizer: OptimizerHp::for_policy(&policy), policy }
    }
}

#[derive(Clone, Debug)]
pub struct StrategyResult {
    pub policy: FreezePolicy,
    /// From the parameter ledger under the compact convention.
    pub trainable_params: u64,
    pub records: Vec<EpochRecord>,
    pub minutes_per_epoch: f64,
    pub val: Metrics,
    pub test: Evaluation,
    pub frozen_unchanged: bool,
    pub params: ModelParams,
}

#[derive(Clone, Debug)]
pub struct StrategyReport {
    pub results: Vec<StrategyResult>,
}

#[derive(Serialize)]
struct TableRow<'a> {
    strategy: &'a str,
    trainable_params: u64,
    minutes_per_epoch: f64,
    val_acc: f64,
    test_acc: f64,
    f1: f64,
    auroc: Option<f64>,
}

pub const TABLE_COLUMNS: [&str; 7] =
    ["strategy", "trainable_params", "minutes_per_epoch", "val_acc", "test_acc", "f1", "auroc"];

impl StrategyReport {
    pub fn get(&self, policy: &FreezePolicy) -> Option<&StrategyResult> {
        self.results.iter().find(|r| &r.policy == policy)
    }

    /// One row per strategy with [`TABLE_COLUMNS`].
    pub fn table_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.results {
            let name = r.policy.name();
            w.serialize(TableRow {
                strategy: &name,
                trainable_params: r.trainable_params,
                minutes_per_epoch: r.minutes_per_epoch,
                val_acc: r.val.accuracy,
                test_acc: r.test.metrics.accuracy,
                f1: r.test.metrics.f1,
                auroc: r.test.metrics.auroc,
            })
            .expect("in-memory csv");
        }
        if self.results.is_empty() {
            w.write_record(TABLE_COLUMNS).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    /// Per-epoch and cumulative training time: `strategy,epoch,seconds,total_minutes`.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("strategy,epoch,seconds,total_minutes\n");
        for r in &self.results {
            let mut total = 0.0;
            for e in &r.records {
                total += e.seconds;
                s.push_str(&format!("{},{},{},{}\n", r.policy.name(), e.epoch, e.seconds, total / 60.0));
            }
        }
        s
    }
}

/// Trains a copy of `init` under each strategy with identical data, seed and
/// schedule, then evaluates on validation and test.
pub fn compare_strategies_with(
    init: &ModelParams,
    data: &SplitData,
    base: &TrainConfig,
    strategies: &[Strategy],
    observe: &mut dyn FnMut(&FreezePolicy, &EpochRecord),
) -> Result<StrategyReport> {
    if strategies.is_empty() {
        return Err(Error::config("no strategies to compare"));
    }
    if data.val.is_empty() || data.test.is_empty() {
        return Err(Error::contract("comparison needs non-empty validation and test sets"));
    }
    let mut results = Vec::with_capacity(strategies.len());
    for s in strategies {
        let cfg = TrainConfig { policy: s.policy.clone(), optimizer: s.optimizer, ..base.clone() };
        let mut params = init.clone();
        let outcome = train_with(&mut params, &data.train, &data.val, data.pad_id, &cfg, &mut |r| observe(&s.policy, r))?;
        let val = evaluate(&params, &eval_batches(&data.val, &params, cfg.seq_len, cfg.batch_size, data.pad_id)?)?;
        let test = evaluate(&params, &eval_batches(&data.test, &params, cfg.seq_len, cfg.batch_size, data.pad_id)?)?;
        let epochs = outcome.records.len().max(1) as f64;
        results.push(StrategyResult {
            trainable_params: count_params(params.config(), &s.policy, Convention::Compact)?.trainable,
            minutes_per_epoch: outcome.records.iter().map(|r| r.seconds).sum::<f64>() / epochs / 60.0,
            records: outcome.records,
            val: val.metrics,
            test,
            frozen_unchanged: outcome.frozen_unchanged,
            policy: s.policy.clone(),
            params,
        });
    }
    Ok(StrategyReport { results })
}

pub fn compare_strategies(init: &ModelParams, data: &SplitData, base: &TrainConfig, strategies: &[Strategy]) -> Result<StrategyReport> {
    compare_strategies_with(init, data, base, strategies, &mut |_, _| {})
}
