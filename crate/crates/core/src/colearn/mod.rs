//! The co-learning loop: train, select references, suggest relabels, take
//! expert decisions, evaluate, repeat.

mod dataset;
mod metrics;
mod model;
mod run;
mod scores;
mod strategies;
mod suggest;

pub use dataset::{
    ApplyReport, AuditEntry, Decision, DecisionKind, LabelSource, LabeledDataset, LabeledSequence, SignalStore,
};
pub use metrics::{evaluate, EvalMetrics};
pub use model::{ModelKind, ModelOutputs, RoundModel, TrainPlan, MEMORY_DIR, MODEL_DIR};
pub use run::{
    predict_dataset, read_jsonl, round_dir, simulated_decision, write_jsonl, ArchPreset, ColearnConfig, ExpertConfig,
    IterationReport, Run, RunConfig, RunState, RunStatus, RunSummary, SummaryRow, DECISIONS, HISTORY, REPORT,
    RUN_CONFIG, RUN_LABELS, RUN_STATE, RUN_SUMMARY, SIMULATED_EXPERT, SUGGESTIONS,
};
pub use scores::{certainty, uncertainty_score, Strategy};
pub use strategies::{compare_strategies, format_strategy_table, StrategyRow, DEFAULT_STRATEGY_BUDGET};
pub use suggest::{apportion_budget, suggest_relabels, Predictions, RefSummary, Suggestion, SuggestionExplanation};
