use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, SignalStore};
use crate::cohort::Split;
use crate::error::{Error, Result};
use crate::memory::{
    head_features, load_memory, save_memory, select_references, similarity_scores, Candidate, ReferenceMemory,
};
use crate::nn::{
    classify, embed_all, embedding_from_parts, embedding_meta, fit_autoencoder, fit_classifier, fit_head,
    head_from_net, load_model, predict_features, save_model, train_cae, train_cnn, ArchConfig, Autoencoder, DenseHead,
    EmbeddingModel, History, SampleSet, TrainConfig,
};
use crate::rng;

pub const MODEL_DIR: &str = "model";
pub const MEMORY_DIR: &str = "memory";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    HamletCnn,
    HamletCae,
    Cnn,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::HamletCnn,
        ModelKind::HamletCae,
        ModelKind::Cnn,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::HamletCnn => "hamlet-cnn",
            ModelKind::HamletCae => "hamlet-cae",
            ModelKind::Cnn => "cnn",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn uses_memory(self) -> bool {
        matches!(self, ModelKind::HamletCnn | ModelKind::HamletCae)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Usage(format!(
                "unknown model {s:?} (choices: hamlet-cnn, hamlet-cae, cnn, mlp)"
            ))
        })
    }
}

/// Training schedule shared by every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub head_epochs: usize,
    pub memory_size: usize,
    pub normalize_embedding: bool,
    pub train: TrainConfig,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            pretrain_epochs: 100,
            finetune_epochs: 20,
            head_epochs: 100,
            memory_size: crate::memory::DEFAULT_MEMORY_SIZE,
            normalize_embedding: false,
            train: TrainConfig::default(),
        }
    }
}

/// Everything a round trains: the embedding trunk, its training companion
/// (classification head or decoder), the reference memory and the classifier.
#[derive(Debug, Clone)]
pub struct RoundModel {
    pub kind: ModelKind,
    pub trunk: Option<EmbeddingModel>,
    pub companion: Option<crate::nn::Sequential>,
    pub memory: Option<ReferenceMemory>,
    pub head: DenseHead,
    pub normalize_embedding: bool,
    pub input_scale: f64,
    pub histories: Vec<(String, History)>,
}

/// Model outputs for every dataset item, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    pub probs: Vec<Vec<f64>>,
    pub scores: Option<Vec<Vec<f64>>>,
}

fn flat_features(set: &SampleSet, scale: f64) -> Vec<Vec<f64>> {
    set.rows
        .iter()
        .map(|r| r.iter().map(|&v| f64::from(v) * scale).collect())
        .collect()
}

fn epochs(cfg: &TrainConfig, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        ..cfg.clone()
    }
}

impl RoundModel {
    /// Train one round. `prev` is the previous round's model, fine-tuned when present.
    pub fn train(
        kind: ModelKind,
        prev: Option<RoundModel>,
        store: &SignalStore,
        dataset: &LabeledDataset,
        arch: &ArchConfig,
        plan: &TrainPlan,
        seed: u64,
    ) -> Result<Self> {
        let tr = dataset.indices(Split::Train);
        let te = dataset.indices(Split::Test);
        let train_set = store.sample_set(dataset, &tr, true)?;
        let test_set = store.sample_set(dataset, &te, true)?;
        let eval = (!test_set.is_empty()).then_some(&test_set);
        let bs = plan.train.batch_size;
        let mut histories = Vec::new();

        if kind == ModelKind::Mlp {
            let feats = flat_features(&train_set, arch.input_scale);
            let test_feats = flat_features(&test_set, arch.input_scale);
            let (mut head, n) = match prev {
                Some(p) => (p.head, plan.finetune_epochs),
                None => (
                    DenseHead::new(feats[0].len(), plan.train.head_hidden, plan.train.dropout, seed)?,
                    plan.pretrain_epochs,
                ),
            };
            let cfg = epochs(&plan.train, n, seed);
            let h = fit_head(
                &mut head,
                &feats,
                &train_set.labels,
                eval.map(|_| (test_feats.as_slice(), test_set.labels.as_slice())),
                &cfg,
            )?;
            histories.push(("mlp".to_string(), h));
            return Ok(Self {
                kind,
                trunk: None,
                companion: None,
                memory: None,
                head,
                normalize_embedding: false,
                input_scale: arch.input_scale,
                histories,
            });
        }

        let (trunk, companion) = match (kind, prev) {
            (ModelKind::HamletCnn | ModelKind::Cnn, None) => {
                let (trunk, head, h) =
                    train_cnn(&train_set, eval, arch, &epochs(&plan.train, plan.pretrain_epochs, seed))?;
                histories.push(("pretrain".to_string(), h));
                (trunk, head.net)
            }
            (ModelKind::HamletCnn | ModelKind::Cnn, Some(p)) => {
                let mut trunk = p
                    .trunk
                    .ok_or_else(|| Error::Usage("previous model has no trunk".into()))?;
                let mut head = match p.companion {
                    Some(c) => head_from_net(c)?,
                    None => p.head,
                };
                let h = fit_classifier(
                    &mut trunk,
                    &mut head,
                    &train_set,
                    eval,
                    &epochs(&plan.train, plan.finetune_epochs, seed),
                )?;
                histories.push(("finetune".to_string(), h));
                (trunk, head.net)
            }
            (ModelKind::HamletCae, None) => {
                let (ae, h) = train_cae(&train_set, eval, arch, &epochs(&plan.train, plan.pretrain_epochs, seed))?;
                histories.push(("pretrain".to_string(), h));
                (ae.encoder, ae.decoder)
            }
            (ModelKind::HamletCae, Some(p)) => {
                let mut ae = Autoencoder {
                    encoder: p
                        .trunk
                        .ok_or_else(|| Error::Usage("previous model has no encoder".into()))?,
                    decoder: p
                        .companion
                        .ok_or_else(|| Error::Usage("previous model has no decoder".into()))?,
                };
                let h = fit_autoencoder(
                    &mut ae,
                    &train_set,
                    eval,
                    &epochs(&plan.train, plan.finetune_epochs, seed),
                )?;
                histories.push(("finetune".to_string(), h));
                (ae.encoder, ae.decoder)
            }
            (ModelKind::Mlp, _) => unreachable!(),
        };

        if kind == ModelKind::Cnn {
            return Ok(Self {
                kind,
                head: head_from_net(companion)?,
                trunk: Some(trunk),
                companion: None,
                memory: None,
                normalize_embedding: false,
                input_scale: arch.input_scale,
                histories,
            });
        }

        let train_emb = embed_all(&trunk, &train_set, bs)?;
        let candidates: Vec<Candidate> = tr
            .iter()
            .zip(&train_emb)
            .map(|(&i, e)| Candidate {
                embedding: e,
                label: dataset.items[i].label,
                sequence_id: &dataset.items[i].sequence_id,
                expert_id: dataset.items[i].last_expert(),
            })
            .collect();
        let memory = select_references(&candidates, plan.memory_size, rng::derive_str(seed, "memory"))?;
        let feats = |emb: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
            emb.iter()
                .map(|e| head_features(e, &memory, plan.normalize_embedding))
                .collect()
        };
        let train_feats = feats(&train_emb)?;
        let test_feats = feats(&embed_all(&trunk, &test_set, bs)?)?;
        let head_seed = rng::derive_str(seed, "g");
        let mut head = DenseHead::new(
            train_feats[0].len(),
            plan.train.head_hidden,
            plan.train.dropout,
            head_seed,
        )?;
        let h = fit_head(
            &mut head,
            &train_feats,
            &train_set.labels,
            eval.map(|_| (test_feats.as_slice(), test_set.labels.as_slice())),
            &epochs(&plan.train, plan.head_epochs, head_seed),
        )?;
        histories.push(("head".to_string(), h));
        Ok(Self {
            kind,
            trunk: Some(trunk),
            companion: Some(companion),
            memory: Some(memory),
            head,
            normalize_embedding: plan.normalize_embedding,
            input_scale: arch.input_scale,
            histories,
        })
    }

    /// Class probabilities (and similarity scores) for `set`.
    pub fn predict(&self, set: &SampleSet, batch_size: usize) -> Result<ModelOutputs> {
        match (&self.trunk, &self.memory) {
            (None, _) => Ok(ModelOutputs {
                probs: predict_features(&self.head, &flat_features(set, self.input_scale), batch_size)?,
                scores: None,
            }),
            (Some(trunk), None) => Ok(ModelOutputs {
                probs: classify(trunk, &self.head, set, batch_size)?,
                scores: None,
            }),
            (Some(trunk), Some(mem)) => {
                let emb = embed_all(trunk, set, batch_size)?;
                let scores = emb
                    .iter()
                    .map(|e| similarity_scores(e, mem))
                    .collect::<Result<Vec<_>>>()?;
                let feats = emb
                    .iter()
                    .map(|e| head_features(e, mem, self.normalize_embedding))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ModelOutputs {
                    probs: predict_features(&self.head, &feats, batch_size)?,
                    scores: Some(scores),
                })
            }
        }
    }

    /// Write `model/` (and `memory/` when present) under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "normalize_embedding": self.normalize_embedding,
            "input_scale": self.input_scale,
            "trunk": self.trunk.as_ref().map(embedding_meta),
        });
        let mut nets = Vec::new();
        if let Some(t) = &self.trunk {
            nets.push(("trunk", &t.net));
        }
        if let Some(c) = &self.companion {
            nets.push(("companion", c));
        }
        nets.push(("head", &self.head.net));
        save_model(&dir.join(MODEL_DIR), self.kind.as_str(), meta, &nets)?;
        if let Some(m) = &self.memory {
            save_memory(&dir.join(MEMORY_DIR), m)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut file = load_model(&dir.join(MODEL_DIR))?;
        let kind: ModelKind = file
            .kind
            .parse()
            .map_err(|_| Error::Schema(format!("unknown model kind {:?}", file.kind)))?;
        let trunk = match file.meta.get("trunk") {
            Some(m) if !m.is_null() => {
                let m = m.clone();
                Some(embedding_from_parts(&m, file.take("trunk")?)?)
            }
            _ => None,
        };
        let companion = file
            .networks
            .iter()
            .any(|(n, _)| n == "companion")
            .then(|| file.take("companion"))
            .transpose()?;
        let head = head_from_net(file.take("head")?)?;
        let memory = kind
            .uses_memory()
            .then(|| load_memory(&dir.join(MEMORY_DIR)))
            .transpose()?;
        let normalize_embedding = file
            .meta
            .get("normalize_embedding")
            .and_then(|v| v.as_bool())
            .unwrap_or(false);
        let input_scale = file
            .meta
            .get("input_scale")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Schema("model metadata lacks input_scale".into()))?;
        Ok(Self {
            kind,
            trunk,
            companion,
            memory,
            head,
            normalize_embedding,
            input_scale,
            histories: Vec::new(),
        })
    }
}
