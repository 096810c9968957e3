//! Reference memory: per-class k-means medoids, cosine scores, explanations.

pub mod kmeans;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, NUM_CLASSES};
use crate::nn::{DenseHead, Tensor};
use crate::rng;
use crate::signal::io::{read_json, write_atomic, write_json, SCHEMA_VERSION};

pub const DEFAULT_MEMORY_SIZE: usize = 510;
/// Reference positions ranked per class when scoring interpretability.
pub const INTERPRETABILITY_TOP_K: usize = 16;
pub const DEFAULT_TOP_K: usize = 3;
pub const MEMORY_MANIFEST: &str = "memory.json";
pub const MEMORY_BLOB: &str = "embeddings.f64";

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub embedding: Vec<f64>,
    pub label: ClassLabel,
    pub sequence_id: String,
    pub expert_id: String,
}

/// One labelled embedding offered to [`select_references`].
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub embedding: &'a [f64],
    pub label: ClassLabel,
    pub sequence_id: &'a str,
    pub expert_id: &'a str,
}

/// `N` reference embeddings grouped by class, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMemory {
    pub dim: usize,
    pub entries: Vec<MemoryEntry>,
    norms: Vec<f64>,
}

impl ReferenceMemory {
    pub fn new(dim: usize, entries: Vec<MemoryEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.embedding.len() != dim) {
            return Err(Error::dim("memory", dim, e.embedding.len()));
        }
        let norms = entries.iter().map(|e| norm(&e.embedding)).collect();
        Ok(Self { dim, entries, norms })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for e in &self.entries {
            c[e.label.index()] += 1;
        }
        c
    }

    /// Equal space for every class.
    pub fn check_balanced(&self) -> Result<()> {
        let c = self.class_counts();
        if c.iter().any(|&n| n != c[0]) {
            return Err(Error::Numeric(format!("unequal memory class counts {c:?}")));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// References per class for a requested total; a total not divisible by the
/// class count is rounded down so every class keeps the same share.
pub fn per_class_quota(total: usize) -> usize {
    total / NUM_CLASSES
}

/// Per-class k-means; each centroid is replaced by its nearest actual member.
pub fn select_references(candidates: &[Candidate], total: usize, seed: u64) -> Result<ReferenceMemory> {
    let k = per_class_quota(total);
    if k == 0 {
        return Err(Error::Config(format!("memory size {total} leaves no room per class")));
    }
    if !total.is_multiple_of(NUM_CLASSES) {
        tracing::warn!(
            total,
            used = k * NUM_CLASSES,
            "memory size rounded down to a multiple of the class count"
        );
    }
    let dim = candidates.first().map_or(0, |c| c.embedding.len());
    let mut entries = Vec::with_capacity(k * NUM_CLASSES);
    for class in ClassLabel::ALL {
        let members: Vec<&Candidate> = candidates.iter().filter(|c| c.label == class).collect();
        if members.len() < k {
            return Err(Error::Selection {
                class: class.to_string(),
                reason: format!("{} labelled embeddings, {k} references required", members.len()),
            });
        }
        let points: Vec<&[f64]> = members.iter().map(|c| c.embedding).collect();
        let km = kmeans::kmeans(&points, k, &mut rng::stream(seed, &format!("kmeans/{class}")))?;
        for i in km.medoids {
            let m = members[i];
            entries.push(MemoryEntry {
                embedding: m.embedding.to_vec(),
                label: class,
                sequence_id: m.sequence_id.to_string(),
                expert_id: m.expert_id.to_string(),
            });
        }
    }
    let mem = ReferenceMemory::new(dim, entries)?;
    mem.check_balanced()?;
    Ok(mem)
}

/// Cosine similarity to every reference. A zero vector scores 0 everywhere.
pub fn similarity_scores(e: &[f64], mem: &ReferenceMemory) -> Result<Vec<f64>> {
    if e.len() != mem.dim {
        return Err(Error::dim("similarity", mem.dim, e.len()));
    }
    let ne = norm(e);
    Ok(mem
        .entries
        .iter()
        .zip(&mem.norms)
        .map(|(r, &nr)| {
            if ne == 0.0 || nr == 0.0 {
                0.0
            } else {
                let d: f64 = e.iter().zip(&r.embedding).map(|(a, b)| a * b).sum();
                (d / (ne * nr)).clamp(-1.0, 1.0)
            }
        })
        .collect())
}

/// Head input for one embedding: the embedding followed by its scores.
pub fn head_features(e: &[f64], mem: &ReferenceMemory, normalize_embedding: bool) -> Result<Vec<f64>> {
    let scores = similarity_scores(e, mem)?;
    let mut f = Vec::with_capacity(e.len() + scores.len());
    let n = norm(e);
    if normalize_embedding && n > 0.0 {
        f.extend(e.iter().map(|v| v / n));
    } else {
        f.extend_from_slice(e);
    }
    f.extend(scores);
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamletOutput {
    pub probs: Vec<Vec<f64>>,
    pub scores: Vec<Vec<f64>>,
}

/// Classify precomputed embeddings through memory and head.
pub fn hamlet_forward(
    embeddings: &[Vec<f64>],
    mem: &ReferenceMemory,
    head: &DenseHead,
    normalize_embedding: bool,
) -> Result<HamletOutput> {
    if head.input_dim != mem.dim + mem.len() {
        return Err(Error::dim("head", mem.dim + mem.len(), head.input_dim));
    }
    let mut probs = Vec::with_capacity(embeddings.len());
    let mut scores = Vec::with_capacity(embeddings.len());
    for chunk in embeddings.chunks(256) {
        let feats = chunk
            .iter()
            .map(|e| head_features(e, mem, normalize_embedding))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let p = head.probs(&Tensor::stack_rows(&rows, &[head.input_dim])?)?;
        probs.extend(p.data().chunks(head.classes).map(<[f64]>::to_vec));
        scores.extend(feats.into_iter().map(|f| f[mem.dim..].to_vec()));
    }
    Ok(HamletOutput { probs, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceHit {
    pub index: usize,
    pub sequence_id: String,
    pub label: ClassLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub sequence_id: String,
    pub predicted: ClassLabel,
    /// Best-scoring reference of the predicted class.
    pub rstar: ReferenceHit,
    /// Top references of every class, best first.
    pub top_by_class: Vec<(ClassLabel, Vec<ReferenceHit>)>,
}

fn ranked(scores: &[f64], mem: &ReferenceMemory, class: ClassLabel, k: usize) -> Vec<ReferenceHit> {
    let mut idx: Vec<usize> = (0..mem.len()).filter(|&i| mem.entries[i].label == class).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|i| ReferenceHit {
            index: i,
            sequence_id: mem.entries[i].sequence_id.clone(),
            label: class,
            score: scores[i],
        })
        .collect()
}

/// The most similar reference of `class`, plus the top `top_k` of every class.
pub fn nearest_reference(
    sequence_id: &str,
    scores: &[f64],
    mem: &ReferenceMemory,
    class: ClassLabel,
    top_k: usize,
) -> Result<Explanation> {
    if scores.len() != mem.len() {
        return Err(Error::dim("explanation", mem.len(), scores.len()));
    }
    let rstar = ranked(scores, mem, class, 1)
        .pop()
        .ok_or_else(|| Error::Input(format!("memory holds no {class} reference")))?;
    Ok(Explanation {
        sequence_id: sequence_id.to_string(),
        predicted: class,
        rstar,
        top_by_class: ClassLabel::ALL
            .iter()
            .map(|&c| (c, ranked(scores, mem, c, top_k)))
            .collect(),
    })
}

/// How a score input's pull on a class output is measured through the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Influence {
    /// `sum_h W1[h, dim + p] * W2[c, h]`: evidence for the class only.
    #[default]
    Excitatory,
    /// `sum_h |W1[h, dim + p] * W2[c, h]|`: evidence for or against.
    Magnitude,
}

/// Per class, the share of the `top_k` most influential score inputs whose
/// reference carries that class, with excitatory influence.
pub fn interpretability_scores(head: &DenseHead, mem: &ReferenceMemory, top_k: usize) -> Result<[f64; NUM_CLASSES]> {
    interpretability_scores_with(head, mem, top_k, Influence::default())
}

pub fn interpretability_scores_with(
    head: &DenseHead,
    mem: &ReferenceMemory,
    top_k: usize,
    influence: Influence,
) -> Result<[f64; NUM_CLASSES]> {
    let n = mem.len();
    if top_k == 0 || top_k > n {
        return Err(Error::Config(format!("top_k {top_k} must lie in 1..={n}")));
    }
    if head.input_dim != mem.dim + n {
        return Err(Error::dim("head", mem.dim + n, head.input_dim));
    }
    let (w1, w2) = head.weights();
    let mut out = [0.0; NUM_CLASSES];
    for (c, slot) in out.iter_mut().enumerate() {
        let strength: Vec<f64> = (0..n)
            .map(|p| {
                (0..head.hidden)
                    .map(|h| {
                        let path = w1[h * head.input_dim + mem.dim + p] * w2[c * head.hidden + h];
                        match influence {
                            Influence::Excitatory => path,
                            Influence::Magnitude => path.abs(),
                        }
                    })
                    .sum()
            })
            .collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]).then(a.cmp(&b)));
        let hits = idx[..top_k]
            .iter()
            .filter(|&&p| mem.entries[p].label.index() == c)
            .count();
        *slot = hits as f64 / top_k as f64;
    }
    Ok(out)
}

/// `Seizure 43.75%, LPD 50.00%, ...`
pub fn format_percentages(values: &[f64; NUM_CLASSES]) -> String {
    ClassLabel::ALL
        .iter()
        .zip(values)
        .map(|(c, v)| format!("{c} {:.2}%", v * 100.0))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryManifestEntry {
    pub sequence_id: String,
    pub label: ClassLabel,
    pub expert_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryManifest {
    pub schema_version: u32,
    pub n: usize,
    pub dim: usize,
    pub class_counts: [usize; NUM_CLASSES],
    pub entries: Vec<MemoryManifestEntry>,
}

pub fn save_memory(dir: &Path, mem: &ReferenceMemory) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(mem.len() * mem.dim * 8);
    for e in &mem.entries {
        for v in &e.embedding {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(&dir.join(MEMORY_BLOB), &blob)?;
    write_json(
        &dir.join(MEMORY_MANIFEST),
        &MemoryManifest {
            schema_version: SCHEMA_VERSION,
            n: mem.len(),
            dim: mem.dim,
            class_counts: mem.class_counts(),
            entries: mem
                .entries
                .iter()
                .map(|e| MemoryManifestEntry {
                    sequence_id: e.sequence_id.clone(),
                    label: e.label,
                    expert_id: e.expert_id.clone(),
                })
                .collect(),
        },
    )
}

pub fn load_memory(dir: &Path) -> Result<ReferenceMemory> {
    let m: MemoryManifest = read_json(&dir.join(MEMORY_MANIFEST))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!("memory schema version {}", m.schema_version)));
    }
    let path = dir.join(MEMORY_BLOB);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if m.entries.len() != m.n || bytes.len() != m.n * m.dim * 8 {
        return Err(Error::Schema("memory blob does not match its manifest".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let entries = m
        .entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| MemoryEntry {
            embedding: values[i * m.dim..(i + 1) * m.dim].to_vec(),
            label: e.label,
            sequence_id: e.sequence_id,
            expert_id: e.expert_id,
        })
        .collect();
    let mem = ReferenceMemory::new(m.dim, entries)?;
    if mem.class_counts() != m.class_counts {
        return Err(Error::Schema("memory class counts disagree with entries".into()));
    }
    Ok(mem)
}
