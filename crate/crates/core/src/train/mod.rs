//! Fine-tuning loop, evaluation metrics and the strategy comparison.

mod compare;
mod metrics;
mod trainer;

pub use compare::{compare_strategies, compare_strategies_with, SplitData, Strategy, StrategyReport, StrategyResult, TABLE_COLUMNS};
pub use metrics::{auroc, f1_from_counts, roc_csv, roc_points, trapezoid, ConfusionMatrix};
pub use trainer::{
    eval_batches, evaluate, export_learning_curves, learning_curves_csv, read_learning_curves, train, train_step, train_with, EpochRecord,
    Evaluation, Metrics, TrainConfig, TrainOutcome,
};
