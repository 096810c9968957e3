use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, NUM_CLASSES};

/// Test-set metrics. Confusion rows are the expert label, columns the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub test_count: usize,
    pub accuracy: f64,
    pub reeval_count: usize,
    pub reeval_accuracy: Option<f64>,
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

pub fn evaluate(predicted: &[ClassLabel], labels: &[ClassLabel], reeval: &[bool]) -> Result<EvalMetrics> {
    if predicted.is_empty() {
        return Err(Error::Config("empty test split".into()));
    }
    if predicted.len() != labels.len() || reeval.len() != labels.len() {
        return Err(Error::dim("evaluate", labels.len(), predicted.len().max(reeval.len())));
    }
    let mut confusion = [[0; NUM_CLASSES]; NUM_CLASSES];
    let (mut hits, mut re_n, mut re_hits) = (0, 0, 0);
    for ((p, l), r) in predicted.iter().zip(labels).zip(reeval) {
        confusion[l.index()][p.index()] += 1;
        hits += usize::from(p == l);
        if *r {
            re_n += 1;
            re_hits += usize::from(p == l);
        }
    }
    Ok(EvalMetrics {
        test_count: labels.len(),
        accuracy: hits as f64 / labels.len() as f64,
        reeval_count: re_n,
        reeval_accuracy: (re_n > 0).then(|| re_hits as f64 / re_n as f64),
        confusion,
    })
}
