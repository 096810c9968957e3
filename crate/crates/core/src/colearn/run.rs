use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::dataset::{Decision, DecisionKind, LabelSource, LabeledDataset, SignalStore};
use super::metrics::{evaluate, EvalMetrics};
use super::model::{ModelKind, ModelOutputs, RoundModel, TrainPlan};
use super::scores::{certainty, Strategy};
use super::suggest::{apportion_budget, suggest_relabels, Predictions, Suggestion};
use crate::cohort::{read_manifest, PatientMode, SimulatedExpert, Split};
use crate::error::{Error, Result};
use crate::labels::{ClassLabel, NUM_CLASSES};
use crate::memory::{interpretability_scores, INTERPRETABILITY_TOP_K};
use crate::nn::{argmax_row, ArchConfig, History};
use crate::rng;
use crate::signal::io::{read_json, write_atomic, write_json, SCHEMA_VERSION};

pub const RUN_CONFIG: &str = "config.json";
pub const RUN_STATE: &str = "state.json";
pub const RUN_LABELS: &str = "labels.json";
pub const RUN_SUMMARY: &str = "summary.json";
pub const SUGGESTIONS: &str = "suggestions.jsonl";
pub const DECISIONS: &str = "decisions.jsonl";
pub const REPORT: &str = "report.json";
pub const HISTORY: &str = "history.json";
pub const SIMULATED_EXPERT: &str = "simulated";

pub fn round_dir(run: &Path, round: usize) -> PathBuf {
    run.join(format!("round-{round:03}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    Standard,
    Compact,
}

impl ArchPreset {
    pub fn resolve(self, channels: usize, len: usize) -> ArchConfig {
        match self {
            ArchPreset::Standard => ArchConfig::standard(channels, len),
            ArchPreset::Compact => ArchConfig::compact(channels, len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColearnConfig {
    pub model: ModelKind,
    pub strategy: Strategy,
    /// Review rounds. The run trains `rounds + 1` models; the last one is only evaluated.
    pub rounds: usize,
    pub budget_fraction: f64,
    /// Absolute per-round budget, overriding the fraction.
    pub budget: Option<usize>,
    pub patient_mode: PatientMode,
    pub test_fraction: f64,
    pub arch: ArchPreset,
    pub plan: TrainPlan,
    pub top_k: usize,
    /// Fraction of suggestions that must be decided before a round may resume.
    pub quorum: f64,
    pub seed: u64,
    /// Simulated reviewer. Without one, rounds park until decisions arrive.
    pub expert: Option<ExpertConfig>,
    /// Take each round's decisions from another run instead of reviewing.
    pub shared_decisions: Option<PathBuf>,
}

impl Default for ColearnConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::HamletCnn,
            strategy: Strategy::Confidence,
            rounds: 1,
            budget_fraction: 0.04,
            budget: None,
            patient_mode: PatientMode::Unseen,
            test_fraction: 0.2,
            arch: ArchPreset::Standard,
            plan: TrainPlan::default(),
            top_k: crate::memory::DEFAULT_TOP_K,
            quorum: 1.0,
            seed: 42,
            expert: None,
            shared_decisions: None,
        }
    }
}

impl ColearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quorum > 0.0 && self.quorum <= 1.0) {
            return Err(Error::Config(format!("quorum {} outside (0, 1]", self.quorum)));
        }
        if !(0.0..=1.0).contains(&self.budget_fraction) {
            return Err(Error::Config(format!(
                "budget fraction {} outside [0, 1]",
                self.budget_fraction
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        self.plan.train.validate()
    }

    pub fn budget_for(&self, n: usize) -> usize {
        self.budget
            .unwrap_or_else(|| (self.budget_fraction * n as f64).round() as usize)
            .min(n)
    }
}

/// The exact resolved configuration, echoed into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub run_id: String,
    pub dataset_dir: PathBuf,
    pub colearn: ColearnConfig,
    pub arch: ArchConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Open,
    AwaitingReview,
    Training,
    Closed,
}

impl RunStatus {
    pub fn accepts_decisions(self) -> bool {
        matches!(self, RunStatus::Open | RunStatus::AwaitingReview)
    }

    pub fn can_move_to(self, to: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, to),
            (Open | AwaitingReview, Training) | (Training, Open | AwaitingReview | Closed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub schema_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    /// Round under review (parked), being trained, or the last round (closed).
    pub round: usize,
    pub rounds: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub schema_version: u32,
    pub round: usize,
    pub model: ModelKind,
    pub strategy: Strategy,
    pub budget: usize,
    pub budget_train: usize,
    pub budget_test: usize,
    pub suggestions: usize,
    pub suggestions_train: usize,
    pub suggestions_test: usize,
    pub decided: usize,
    pub changed: usize,
    pub agreement: Option<f64>,
    /// Fraction of suggestions whose proposal equals the ground truth, when known.
    pub suggestion_precision: Option<f64>,
    pub train_accuracy: f64,
    pub before: EvalMetrics,
    pub after: Option<EvalMetrics>,
    pub label_accuracy_before: Option<f64>,
    pub label_accuracy_after: Option<f64>,
    pub interpretability: Option<[f64; NUM_CLASSES]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: usize,
    pub before_full: f64,
    pub before_reeval: Option<f64>,
    pub after_full: Option<f64>,
    pub after_reeval: Option<f64>,
    pub suggestions: usize,
    pub agreement: Option<f64>,
    pub label_accuracy_before: Option<f64>,
    pub label_accuracy_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub model: ModelKind,
    pub strategy: Strategy,
    pub rows: Vec<SummaryRow>,
}

impl RunSummary {
    /// Plain-text table with one line per round.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}%", 100.0 * x));
        let mut s = format!(
            "{:>5} {:>12} {:>14} {:>12} {:>14} {:>11} {:>10}\n",
            "round", "before_full", "before_reeval", "after_full", "after_reeval", "suggestions", "agreement"
        );
        for r in &self.rows {
            s += &format!(
                "{:>5} {:>12} {:>14} {:>12} {:>14} {:>11} {:>10}\n",
                r.round,
                pct(Some(r.before_full)),
                pct(r.before_reeval),
                pct(r.after_full),
                pct(r.after_reeval),
                r.suggestions,
                pct(r.agreement)
            );
        }
        s
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::json(path, e))?;
        buf.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    write_atomic(path, &buf)
}

fn fraction(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

fn labels_of(probs: &[Vec<f64>]) -> Vec<ClassLabel> {
    probs
        .iter()
        .map(|p| ClassLabel::from_index(argmax_row(p)).expect("five outputs"))
        .collect()
}

/// Decision a simulated reviewer makes on one suggestion.
pub fn simulated_decision(expert: &SimulatedExpert, s: &Suggestion, truth: ClassLabel) -> Decision {
    let label = expert.review(&s.sequence_id, truth);
    let kind = if label == s.proposed_label {
        DecisionKind::AcceptProposed
    } else if label == s.current_label {
        DecisionKind::KeepCurrent
    } else {
        DecisionKind::Override
    };
    Decision {
        sequence_id: s.sequence_id.clone(),
        kind,
        label,
        source: LabelSource::Simulated,
        expert_id: SIMULATED_EXPERT.into(),
    }
}

/// One co-learning run persisted under a directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub state: RunState,
    pub dataset: LabeledDataset,
}

impl Run {
    /// Start a run over a preprocessed dataset directory.
    pub fn create(dir: &Path, dataset_dir: &Path, cfg: ColearnConfig) -> Result<(Run, SignalStore)> {
        cfg.validate()?;
        if dir.join(RUN_STATE).exists() {
            return Err(Error::Conflict(format!("{} already holds a run", dir.display())));
        }
        let store = SignalStore::load(dataset_dir)?;
        let manifest = read_manifest(dataset_dir)?;
        let order: Vec<&str> = store.ids.iter().map(String::as_str).collect();
        let dataset = LabeledDataset::from_cohort(
            &manifest,
            &order,
            cfg.patient_mode,
            cfg.test_fraction,
            rng::derive_str(cfg.seed, "split"),
        )?;
        let arch = cfg.arch.resolve(store.channels, store.len);
        arch.validate()?;
        let run_id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let config = RunConfig {
            schema_version: SCHEMA_VERSION,
            run_id: run_id.clone(),
            dataset_dir: dataset_dir.to_path_buf(),
            colearn: cfg,
            arch,
        };
        let state = RunState {
            schema_version: SCHEMA_VERSION,
            run_id,
            status: RunStatus::Training,
            round: 1,
            rounds: config.colearn.rounds,
            error: None,
        };
        let run = Run {
            dir: dir.to_path_buf(),
            config,
            state,
            dataset,
        };
        write_json(&dir.join(RUN_CONFIG), &run.config)?;
        run.save()?;
        Ok((run, store))
    }

    pub fn open(dir: &Path) -> Result<Run> {
        let config: RunConfig = read_json(&dir.join(RUN_CONFIG))?;
        let state: RunState = read_json(&dir.join(RUN_STATE))?;
        if config.schema_version != SCHEMA_VERSION || state.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "run {} has an unsupported schema version",
                dir.display()
            )));
        }
        let mut dataset: LabeledDataset = read_json(&dir.join(RUN_LABELS))?;
        dataset.reindex()?;
        Ok(Run {
            dir: dir.to_path_buf(),
            config,
            state,
            dataset,
        })
    }

    pub fn load_store(&self) -> Result<SignalStore> {
        let store = SignalStore::load(&self.config.dataset_dir)?;
        store.check_aligned(&self.dataset)?;
        Ok(store)
    }

    fn save(&self) -> Result<()> {
        write_json(&self.dir.join(RUN_LABELS), &self.dataset)?;
        self.save_state()
    }

    fn save_state(&self) -> Result<()> {
        write_json(&self.dir.join(RUN_STATE), &self.state)
    }

    fn set_status(&mut self, to: RunStatus) -> Result<()> {
        if !self.state.status.can_move_to(to) {
            return Err(Error::Conflict(format!(
                "run cannot move from {:?} to {:?}",
                self.state.status, to
            )));
        }
        self.state.status = to;
        Ok(())
    }

    pub fn suggestions(&self, round: usize) -> Result<Vec<Suggestion>> {
        let dir = round_dir(&self.dir, round);
        if !dir.exists() {
            return Err(Error::NotFound(format!("round {round}")));
        }
        read_jsonl(&dir.join(SUGGESTIONS))
    }

    pub fn decisions(&self, round: usize) -> Result<Vec<Decision>> {
        read_jsonl(&round_dir(&self.dir, round).join(DECISIONS))
    }

    pub fn report(&self, round: usize) -> Result<IterationReport> {
        let path = round_dir(&self.dir, round).join(REPORT);
        if !path.exists() {
            return Err(Error::NotFound(format!("report for round {round}")));
        }
        read_json(&path)
    }

    pub fn summary(&self) -> Result<RunSummary> {
        read_json(&self.dir.join(RUN_SUMMARY))
    }

    pub fn load_model(&self, round: usize) -> Result<RoundModel> {
        RoundModel::load(&round_dir(&self.dir, round))
    }

    /// Ids of the current round's suggestions that have no decision yet.
    pub fn pending(&self) -> Result<Vec<String>> {
        if !self.state.status.accepts_decisions() {
            return Ok(Vec::new());
        }
        let decided: HashSet<String> = self
            .decisions(self.state.round)?
            .into_iter()
            .map(|d| d.sequence_id)
            .collect();
        Ok(self
            .suggestions(self.state.round)?
            .into_iter()
            .map(|s| s.sequence_id)
            .filter(|id| !decided.contains(id))
            .collect())
    }

    /// Record a decision for the current round; a later decision on the same sequence replaces it.
    pub fn submit_decision(&self, decision: Decision) -> Result<()> {
        if !self.state.status.accepts_decisions() {
            return Err(Error::Conflict(format!(
                "run is {:?} and takes no decisions",
                self.state.status
            )));
        }
        let round = self.state.round;
        if !self
            .suggestions(round)?
            .iter()
            .any(|s| s.sequence_id == decision.sequence_id)
        {
            return Err(Error::NotFound(format!(
                "sequence {} is not in the round {round} queue",
                decision.sequence_id
            )));
        }
        let mut all = self.decisions(round)?;
        all.retain(|d| d.sequence_id != decision.sequence_id);
        all.push(decision);
        write_jsonl(&round_dir(&self.dir, round).join(DECISIONS), &all)
    }

    /// Apply the parked round's decisions and move to TRAINING for the next round.
    pub fn begin_resume(&mut self) -> Result<()> {
        if !self.state.status.accepts_decisions() {
            return Err(Error::Conflict(format!(
                "run is {:?}, nothing to resume",
                self.state.status
            )));
        }
        let round = self.state.round;
        let suggestions = self.suggestions(round)?;
        let decisions = self.decisions(round)?;
        let shared = self.config.colearn.shared_decisions.is_some();
        if !shared {
            let pending = self.pending()?;
            let required = (self.config.colearn.quorum * suggestions.len() as f64 - 1e-9).ceil() as usize;
            if suggestions.len() - pending.len() < required {
                return Err(Error::Pending { pending });
            }
        }
        if !self.dataset.rounds_applied.contains(&round) {
            let applied = self.dataset.apply_decisions(round, &decisions);
            for (id, why) in &applied.rejected {
                tracing::warn!(sequence = %id, reason = %why, "decision rejected");
            }
            let mut report = self.report(round)?;
            let proposed: std::collections::HashMap<&str, ClassLabel> = suggestions
                .iter()
                .map(|s| (s.sequence_id.as_str(), s.proposed_label))
                .collect();
            let judged: Vec<bool> = decisions
                .iter()
                .filter_map(|d| proposed.get(d.sequence_id.as_str()).map(|p| *p == d.label))
                .collect();
            report.decided = judged.len();
            report.changed = applied.changed;
            report.agreement = fraction(judged.iter().filter(|b| **b).count(), judged.len());
            write_json(&round_dir(&self.dir, round).join(REPORT), &report)?;
            write_json(&self.dir.join(RUN_LABELS), &self.dataset)?;
        }
        self.set_status(RunStatus::Training)?;
        self.state.round = round + 1;
        self.state.error = None;
        self.save_state()?;
        self.write_summary()
    }

    /// Train the current round, then park for review (as `park`) or close.
    pub fn step(&mut self, store: &SignalStore, park: RunStatus) -> Result<()> {
        if self.state.status != RunStatus::Training {
            return Err(Error::Conflict(format!("run is {:?}, not training", self.state.status)));
        }
        match self.train_round(store, park) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.state.error = Some(e.to_string());
                self.save_state()?;
                Err(e)
            }
        }
    }

    fn train_round(&mut self, store: &SignalStore, park: RunStatus) -> Result<()> {
        store.check_aligned(&self.dataset)?;
        let cfg = self.config.colearn.clone();
        let t = self.state.round;
        let rd = round_dir(&self.dir, t);
        let prev = if t > 1 { Some(self.load_model(t - 1)?) } else { None };
        tracing::info!(round = t, model = %cfg.model, "training");
        let model = RoundModel::train(
            cfg.model,
            prev,
            store,
            &self.dataset,
            &self.config.arch,
            &cfg.plan,
            rng::derive(cfg.seed, t as u64),
        )?;
        model.save(&rd)?;
        let histories: Vec<(&String, &History)> = model.histories.iter().map(|(n, h)| (n, h)).collect();
        write_json(&rd.join(HISTORY), &histories)?;

        let n = self.dataset.len();
        let all: Vec<usize> = (0..n).collect();
        let outputs = model.predict(
            &store.sample_set(&self.dataset, &all, false)?,
            cfg.plan.train.batch_size,
        )?;
        let predicted = labels_of(&outputs.probs);
        let tr = self.dataset.indices(Split::Train);
        let te = self.dataset.indices(Split::Test);
        let items = &self.dataset.items;
        let train_accuracy =
            fraction(tr.iter().filter(|&&i| predicted[i] == items[i].label).count(), tr.len()).unwrap_or(0.0);
        let eval_on = |extra: &HashSet<String>| -> Result<EvalMetrics> {
            let p: Vec<ClassLabel> = te.iter().map(|&i| predicted[i]).collect();
            let l: Vec<ClassLabel> = te.iter().map(|&i| items[i].label).collect();
            let r: Vec<bool> = te
                .iter()
                .map(|&i| {
                    self.dataset.reevaluated.contains(&items[i].sequence_id) || extra.contains(&items[i].sequence_id)
                })
                .collect();
            evaluate(&p, &l, &r)
        };

        if t > 1 {
            let mut prev_report = self.report(t - 1)?;
            prev_report.after = Some(eval_on(&HashSet::new())?);
            prev_report.label_accuracy_after = self.dataset.label_accuracy();
            write_json(&round_dir(&self.dir, t - 1).join(REPORT), &prev_report)?;
        }

        let interpretability = match &model.memory {
            Some(mem) if !mem.is_empty() => Some(interpretability_scores(
                &model.head,
                mem,
                INTERPRETABILITY_TOP_K.min(mem.len()),
            )?),
            _ => None,
        };
        let reviewing = t <= cfg.rounds;
        let (budget, b_train, b_test, suggestions) = if reviewing {
            let budget = cfg.budget_for(n);
            let (b_train, b_test) = apportion_budget(budget, tr.len(), te.len())?;
            let preds = Predictions {
                probs: &outputs.probs,
                scores: outputs.scores.as_deref().zip(model.memory.as_ref()),
            };
            let mut s = suggest_relabels(&self.dataset, &tr, &preds, cfg.strategy, b_train, cfg.top_k)?;
            s.extend(suggest_relabels(
                &self.dataset,
                &te,
                &preds,
                cfg.strategy,
                b_test,
                cfg.top_k,
            )?);
            let key = |x: &Suggestion| {
                let i = self.dataset.position(&x.sequence_id).expect("suggested ids exist");
                certainty(&outputs.probs[i], cfg.strategy).expect("checked when ranking")
            };
            s.sort_by(|a, b| {
                key(b)
                    .total_cmp(&key(a))
                    .then_with(|| a.sequence_id.cmp(&b.sequence_id))
            });
            (budget, b_train, b_test, s)
        } else {
            (0, 0, 0, Vec::new())
        };
        let suggested_test: HashSet<String> = suggestions
            .iter()
            .filter(|s| s.split == Split::Test)
            .map(|s| s.sequence_id.clone())
            .collect();
        let precision_hits: Vec<bool> = suggestions
            .iter()
            .filter_map(|s| {
                self.dataset
                    .get(&s.sequence_id)
                    .and_then(|i| i.true_label)
                    .map(|t| t == s.proposed_label)
            })
            .collect();
        let report = IterationReport {
            schema_version: SCHEMA_VERSION,
            round: t,
            model: cfg.model,
            strategy: cfg.strategy,
            budget,
            budget_train: b_train,
            budget_test: b_test,
            suggestions: suggestions.len(),
            suggestions_train: suggestions.len() - suggested_test.len(),
            suggestions_test: suggested_test.len(),
            decided: 0,
            changed: 0,
            agreement: None,
            suggestion_precision: fraction(precision_hits.iter().filter(|b| **b).count(), precision_hits.len()),
            train_accuracy,
            before: eval_on(&suggested_test)?,
            after: None,
            label_accuracy_before: self.dataset.label_accuracy(),
            label_accuracy_after: None,
            interpretability,
        };
        write_json(&rd.join(REPORT), &report)?;
        if reviewing {
            write_jsonl(&rd.join(SUGGESTIONS), &suggestions)?;
            write_jsonl::<Decision>(&rd.join(DECISIONS), &[])?;
            self.set_status(park)?;
        } else {
            self.set_status(RunStatus::Closed)?;
        }
        self.save_state()?;
        self.write_summary()
    }

    fn write_summary(&self) -> Result<()> {
        let mut rows = Vec::new();
        for t in 1.. {
            let Ok(r) = self.report(t) else { break };
            rows.push(SummaryRow {
                round: r.round,
                before_full: r.before.accuracy,
                before_reeval: r.before.reeval_accuracy,
                after_full: r.after.as_ref().map(|a| a.accuracy),
                after_reeval: r.after.as_ref().and_then(|a| a.reeval_accuracy),
                suggestions: r.suggestions,
                agreement: r.agreement,
                label_accuracy_before: r.label_accuracy_before,
                label_accuracy_after: r.label_accuracy_after,
            });
        }
        let summary = RunSummary {
            schema_version: SCHEMA_VERSION,
            model: self.config.colearn.model,
            strategy: self.config.colearn.strategy,
            rows,
        };
        write_json(&self.dir.join(RUN_SUMMARY), &summary)
    }

    /// Decisions for the parked round from the simulated expert or a shared run.
    fn automatic_decisions(&self) -> Result<Option<Vec<Decision>>> {
        let round = self.state.round;
        if let Some(other) = &self.config.colearn.shared_decisions {
            return read_jsonl(&round_dir(other, round).join(DECISIONS)).map(Some);
        }
        let Some(ec) = &self.config.colearn.expert else {
            return Ok(None);
        };
        let expert = SimulatedExpert::new(ec.alpha, ec.seed)?;
        self.suggestions(round)?
            .iter()
            .map(|s| {
                let truth = self
                    .dataset
                    .get(&s.sequence_id)
                    .and_then(|i| i.true_label)
                    .ok_or_else(|| {
                        Error::Config(format!("simulated review needs ground truth for {}", s.sequence_id))
                    })?;
                Ok(simulated_decision(&expert, s, truth))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Advance as far as possible: train, review automatically when a reviewer
    /// is configured, and stop when closed or parked with decisions pending.
    pub fn drive(&mut self, store: &SignalStore) -> Result<()> {
        loop {
            match self.state.status {
                RunStatus::Training => self.step(store, RunStatus::AwaitingReview)?,
                RunStatus::Open | RunStatus::AwaitingReview => {
                    if !self.dataset.rounds_applied.contains(&self.state.round) {
                        if let Some(decisions) = self.automatic_decisions()? {
                            write_jsonl(&round_dir(&self.dir, self.state.round).join(DECISIONS), &decisions)?;
                        }
                    }
                    match self.begin_resume() {
                        Err(Error::Pending { .. }) => return Ok(()),
                        r => r?,
                    }
                }
                RunStatus::Closed => return Ok(()),
            }
        }
    }
}

/// Predictions of a round's model over every dataset item.
pub fn predict_dataset(
    model: &RoundModel,
    store: &SignalStore,
    dataset: &LabeledDataset,
    batch_size: usize,
) -> Result<ModelOutputs> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    model.predict(&store.sample_set(dataset, &all, false)?, batch_size)
}
