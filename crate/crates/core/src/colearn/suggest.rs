use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::scores::{certainty, uncertainty_score, Strategy};
use crate::cohort::Split;
use crate::error::{Error, Result};
use crate::labels::ClassLabel;
use crate::memory::{nearest_reference, ReferenceMemory};
use crate::nn::argmax_row;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefSummary {
    pub id: String,
    pub label: ClassLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionExplanation {
    pub rstar_id: String,
    pub rstar_label: ClassLabel,
    pub rstar_score: f64,
    /// Expert who last labelled the reference sequence.
    pub rstar_expert: String,
    pub top_refs: Vec<RefSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub sequence_id: String,
    pub current_label: ClassLabel,
    pub proposed_label: ClassLabel,
    pub strategy: Strategy,
    pub score: f64,
    pub split: Split,
    pub explanation: Option<SuggestionExplanation>,
}

/// Model outputs for every dataset item, in dataset order.
pub struct Predictions<'a> {
    pub probs: &'a [Vec<f64>],
    /// Similarity scores against the memory, for memory-based models.
    pub scores: Option<(&'a [Vec<f64>], &'a ReferenceMemory)>,
}

/// Split a budget across train and test in proportion to their sizes.
pub fn apportion_budget(budget: usize, train: usize, test: usize) -> Result<(usize, usize)> {
    if budget > train + test {
        return Err(Error::Config(format!(
            "budget {budget} exceeds dataset size {}",
            train + test
        )));
    }
    if budget == 0 {
        return Ok((0, 0));
    }
    let b_train = ((budget * train) as f64 / (train + test) as f64).round() as usize;
    Ok((b_train.min(budget), budget - b_train.min(budget)))
}

/// Rank the confident disagreements among `indices` and keep the top `budget`.
pub fn suggest_relabels(
    dataset: &LabeledDataset,
    indices: &[usize],
    preds: &Predictions,
    strategy: Strategy,
    budget: usize,
    top_k: usize,
) -> Result<Vec<Suggestion>> {
    if preds.probs.len() != dataset.len() {
        return Err(Error::dim("predictions", dataset.len(), preds.probs.len()));
    }
    let mut ranked = Vec::new();
    for &i in indices {
        let p = &preds.probs[i];
        let predicted = ClassLabel::from_index(argmax_row(p)).ok_or_else(|| Error::dim("predictions", 5, p.len()))?;
        if predicted != dataset.items[i].label {
            ranked.push((certainty(p, strategy)?, i, predicted));
        }
    }
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| dataset.items[a.1].sequence_id.cmp(&dataset.items[b.1].sequence_id))
    });
    ranked.truncate(budget);
    ranked
        .into_iter()
        .map(|(_, i, predicted)| {
            let item = &dataset.items[i];
            let explanation = match preds.scores {
                Some((scores, mem)) => Some(explain(&item.sequence_id, &scores[i], mem, predicted, top_k)?),
                None => None,
            };
            Ok(Suggestion {
                sequence_id: item.sequence_id.clone(),
                current_label: item.label,
                proposed_label: predicted,
                strategy,
                score: uncertainty_score(&preds.probs[i], strategy)?,
                split: item.split,
                explanation,
            })
        })
        .collect()
}

fn explain(
    id: &str,
    scores: &[f64],
    mem: &ReferenceMemory,
    predicted: ClassLabel,
    top_k: usize,
) -> Result<SuggestionExplanation> {
    let ex = nearest_reference(id, scores, mem, predicted, top_k)?;
    let top_refs = ex
        .top_by_class
        .iter()
        .find(|(c, _)| *c == predicted)
        .map(|(_, hits)| {
            hits.iter()
                .map(|h| RefSummary {
                    id: h.sequence_id.clone(),
                    label: h.label,
                    score: h.score,
                })
                .collect()
        })
        .unwrap_or_default();
    let rstar_expert = mem.entries[ex.rstar.index].expert_id.clone();
    Ok(SuggestionExplanation {
        rstar_id: ex.rstar.sequence_id,
        rstar_label: ex.rstar.label,
        rstar_score: ex.rstar.score,
        rstar_expert,
        top_refs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion_budget(10, 80, 20).unwrap(), (8, 2));
        assert_eq!(apportion_budget(837, 16000, 4000).unwrap(), (670, 167));
        assert_eq!(apportion_budget(0, 5, 5).unwrap(), (0, 0));
        assert!(apportion_budget(11, 5, 5).is_err());
    }
}
