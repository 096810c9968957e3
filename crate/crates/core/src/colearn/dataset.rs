use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{split_by_patient, CohortManifest, PatientMode, Split};
use crate::error::{Error, Result};
use crate::labels::ClassLabel;
use crate::nn::SampleSet;
use crate::signal::io::read_sequences;
use crate::signal::{mirror_montage, MontageSequence, NUM_MONTAGES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Initial,
    Expert,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub round: usize,
    pub old: Option<ClassLabel>,
    pub new: ClassLabel,
    pub source: LabelSource,
    pub expert_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub sequence_id: String,
    pub patient_id: String,
    pub split: Split,
    pub label: ClassLabel,
    /// Ground truth when known (synthetic cohorts). Only the simulated
    /// expert and diagnostics read it; training never does.
    pub true_label: Option<ClassLabel>,
    pub audit: Vec<AuditEntry>,
}

impl LabeledSequence {
    pub fn original_label(&self) -> ClassLabel {
        self.audit.first().map_or(self.label, |a| a.new)
    }

    pub fn last_expert(&self) -> &str {
        self.audit.last().map_or("initial", |a| a.expert_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    AcceptProposed,
    KeepCurrent,
    Override,
}

/// A reviewed label for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub sequence_id: String,
    pub kind: DecisionKind,
    pub label: ClassLabel,
    pub source: LabelSource,
    pub expert_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub applied: usize,
    pub changed: usize,
    pub rejected: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub items: Vec<LabeledSequence>,
    /// Sequences whose label has been re-reviewed at least once.
    pub reevaluated: BTreeSet<String>,
    /// Rounds for which decisions were applied, including empty ones.
    pub rounds_applied: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabeledDataset {
    pub fn new(items: Vec<LabeledSequence>) -> Result<Self> {
        let mut d = Self {
            items,
            reevaluated: BTreeSet::new(),
            rounds_applied: Vec::new(),
            index: HashMap::new(),
        };
        d.reindex()?;
        Ok(d)
    }

    /// Rebuild the id index (needed after deserialising).
    pub fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, it) in self.items.iter().enumerate() {
            if self.index.insert(it.sequence_id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate sequence id {}", it.sequence_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSequence> {
        self.position(id).map(|i| &self.items[i])
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| self.items[i].split == split)
            .collect()
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn audit_len(&self) -> usize {
        self.items.iter().map(|i| i.audit.len()).sum()
    }

    /// Fraction of current labels equal to the ground truth, when it is known.
    pub fn label_accuracy(&self) -> Option<f64> {
        let known: Vec<_> = self
            .items
            .iter()
            .filter_map(|i| i.true_label.map(|t| t == i.label))
            .collect();
        if known.is_empty() {
            None
        } else {
            Some(known.iter().filter(|b| **b).count() as f64 / known.len() as f64)
        }
    }

    /// Apply reviewed labels. Unknown ids are rejected individually.
    pub fn apply_decisions(&mut self, round: usize, decisions: &[Decision]) -> ApplyReport {
        let mut report = ApplyReport::default();
        for d in decisions {
            let Some(i) = self.position(&d.sequence_id) else {
                report.rejected.push((d.sequence_id.clone(), "unknown sequence".into()));
                continue;
            };
            let item = &mut self.items[i];
            item.audit.push(AuditEntry {
                round,
                old: Some(item.label),
                new: d.label,
                source: d.source,
                expert_id: d.expert_id.clone(),
            });
            if item.label != d.label {
                report.changed += 1;
            }
            item.label = d.label;
            self.reevaluated.insert(d.sequence_id.clone());
            report.applied += 1;
        }
        self.rounds_applied.push(round);
        report
    }

    /// Build from a cohort manifest, taking the noisy labels as the initial ones.
    pub fn from_cohort(
        manifest: &CohortManifest,
        order: &[&str],
        mode: PatientMode,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let by_id: HashMap<&str, _> = manifest.windows.iter().map(|w| (w.sequence_id.as_str(), w)).collect();
        let windows = order
            .iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Schema(format!("no label for sequence {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let patients: Vec<&str> = windows.iter().map(|w| w.patient_id.as_str()).collect();
        let splits = split_by_patient(&patients, mode, test_fraction, seed)?;
        let items = windows
            .iter()
            .zip(splits)
            .map(|(w, split)| LabeledSequence {
                sequence_id: w.sequence_id.clone(),
                patient_id: w.patient_id.clone(),
                split,
                label: w.noisy_label,
                true_label: Some(w.true_label),
                audit: vec![AuditEntry {
                    round: 0,
                    old: None,
                    new: w.noisy_label,
                    source: LabelSource::Initial,
                    expert_id: "initial".into(),
                }],
            })
            .collect();
        Self::new(items)
    }
}

/// Core windows of every sequence, in dataset order.
#[derive(Debug, Clone)]
pub struct SignalStore {
    pub channels: usize,
    pub len: usize,
    pub sample_rate_hz: f64,
    pub ids: Vec<String>,
    pub cores: Vec<Vec<f32>>,
}

impl SignalStore {
    pub fn from_sequences(seqs: Vec<MontageSequence>) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::Config("no sequences".into()))?;
        let (len, fs) = (first.window_samples, first.sample_rate_hz);
        if let Some(s) = seqs.iter().find(|s| s.window_samples != len || s.sample_rate_hz != fs) {
            return Err(Error::Schema(format!(
                "sequence {} has a different window shape",
                s.sequence_id
            )));
        }
        let (ids, cores) = seqs.into_iter().map(|s| (s.sequence_id, s.core)).unzip();
        Ok(Self {
            channels: NUM_MONTAGES,
            len,
            sample_rate_hz: fs,
            ids,
            cores,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_sequences(read_sequences(dir)?)
    }

    /// Sample set over `indices`, labelled with the dataset's current labels.
    pub fn sample_set(&self, dataset: &LabeledDataset, indices: &[usize], labelled: bool) -> Result<SampleSet<'_>> {
        let rows = indices.iter().map(|&i| self.cores[i].as_slice()).collect();
        let labels = if labelled {
            indices.iter().map(|&i| dataset.items[i].label.index()).collect()
        } else {
            Vec::new()
        };
        Ok(SampleSet::new(self.channels, self.len, rows, labels)?
            .with_mirror((0..NUM_MONTAGES).map(mirror_montage).collect()))
    }

    /// Check that the store and dataset list the same sequences in the same order.
    pub fn check_aligned(&self, dataset: &LabeledDataset) -> Result<()> {
        if self.ids.len() != dataset.len() || self.ids.iter().zip(&dataset.items).any(|(a, b)| *a != b.sequence_id) {
            return Err(Error::Schema("sequence store and label set disagree".into()));
        }
        Ok(())
    }
}
