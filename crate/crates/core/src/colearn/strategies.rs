use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::model::ModelOutputs;
use super::scores::Strategy;
use super::suggest::{suggest_relabels, Predictions};
use crate::cohort::SimulatedExpert;
use crate::error::{Error, Result};

pub const DEFAULT_STRATEGY_BUDGET: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub suggestions: usize,
    pub agreed: usize,
    pub agreement: Option<f64>,
    /// Fraction of proposals equal to the ground truth.
    pub precision: Option<f64>,
}

/// For each strategy, suggest `budget` relabels over the whole dataset and
/// count how many the expert confirms.
pub fn compare_strategies(
    dataset: &LabeledDataset,
    outputs: &ModelOutputs,
    expert: &SimulatedExpert,
    budget: usize,
) -> Result<Vec<StrategyRow>> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let preds = Predictions {
        probs: &outputs.probs,
        scores: None,
    };
    Strategy::ALL
        .iter()
        .map(|&strategy| {
            let sugg = suggest_relabels(dataset, &all, &preds, strategy, budget, 1)?;
            let (mut agreed, mut correct) = (0, 0);
            for s in &sugg {
                let truth = dataset
                    .get(&s.sequence_id)
                    .and_then(|i| i.true_label)
                    .ok_or_else(|| Error::Config(format!("no ground truth for {}", s.sequence_id)))?;
                agreed += usize::from(expert.review(&s.sequence_id, truth) == s.proposed_label);
                correct += usize::from(truth == s.proposed_label);
            }
            let n = sugg.len();
            Ok(StrategyRow {
                strategy,
                suggestions: n,
                agreed,
                agreement: (n > 0).then(|| agreed as f64 / n as f64),
                precision: (n > 0).then(|| correct as f64 / n as f64),
            })
        })
        .collect()
}

/// Rows in the "High Confidence 92.19%" style.
pub fn format_strategy_table(rows: &[StrategyRow]) -> String {
    rows.iter()
        .map(|r| {
            let a = r.agreement.map_or("-".to_string(), |a| format!("{:.2}%", 100.0 * a));
            format!(
                "{:<16} {:>8}  ({}/{})\n",
                r.strategy.title(),
                a,
                r.agreed,
                r.suggestions
            )
        })
        .collect()
}
