use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::layers::Ctx;
use super::loss::{mse, softmax, softmax_cross_entropy};
use super::model::{quantize, ArchConfig, Autoencoder, DenseHead, EmbeddingModel};
use super::sequential::Sequential;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub dropout: f64,
    pub seed: u64,
    /// Hidden width of the dense head.
    pub head_hidden: usize,
    /// Randomly mirror left and right montages of each training window.
    pub flip_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig::default(),
            dropout: 0.2,
            seed: 0,
            head_hidden: 1024,
            flip_augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 || self.head_hidden == 0 {
            return Err(Error::Config("batch size and head width must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: Option<usize>,
}

/// Windows stored channel-major as `f32`, optionally labelled.
#[derive(Debug, Clone)]
pub struct SampleSet<'a> {
    pub channels: usize,
    pub len: usize,
    pub rows: Vec<&'a [f32]>,
    pub labels: Vec<usize>,
    /// Channel permutation that mirrors the left and right hemispheres.
    pub mirror: Option<Vec<usize>>,
}

impl<'a> SampleSet<'a> {
    pub fn new(channels: usize, len: usize, rows: Vec<&'a [f32]>, labels: Vec<usize>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != channels * len) {
            return Err(Error::dim("samples", channels * len, r.len()));
        }
        if !labels.is_empty() && labels.len() != rows.len() {
            return Err(Error::dim("samples", format!("{} labels", rows.len()), labels.len()));
        }
        Ok(Self {
            channels,
            len,
            rows,
            labels,
            mirror: None,
        })
    }

    pub fn with_mirror(mut self, mirror: Vec<usize>) -> Self {
        self.mirror = Some(mirror);
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Scaled `(batch, channels, len)` tensor; `flip[i]` mirrors row `i`.
    pub fn batch(&self, idx: &[usize], scale: f64, flip: Option<&[bool]>) -> Tensor {
        let (c, t) = (self.channels, self.len);
        let mut data = Vec::with_capacity(idx.len() * c * t);
        for (k, &i) in idx.iter().enumerate() {
            let row = self.rows[i];
            let mirrored = flip.is_some_and(|f| f[k]);
            for ch in 0..c {
                let src = match (&self.mirror, mirrored) {
                    (Some(m), true) => m[ch],
                    _ => ch,
                };
                data.extend(row[src * t..(src + 1) * t].iter().map(|&v| f64::from(v) * scale));
            }
        }
        Tensor::from_vec(&[idx.len(), c, t], data).expect("batch shape")
    }
}

fn batches(n: usize, size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream_n(seed, "shuffle", epoch as u64));
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn correct(logits: &Tensor, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(r, &l)| argmax(r) == l)
        .count()
}

fn step_all(opt: &mut Adam, nets: &mut [&mut Sequential]) -> Result<()> {
    let params = nets.iter_mut().flat_map(|n| n.params_mut()).collect();
    opt.step(params)
}

/// Eval-mode embeddings of every row, computed `batch_size` at a time.
pub fn embed_all(model: &EmbeddingModel, set: &SampleSet, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let e = model.embed(&set.batch(chunk, model.arch.input_scale, None))?;
        out.extend(e.data().chunks(model.embedding_dim).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Eval-mode probabilities of the head over rows of a feature matrix.
pub fn predict_features(head: &DenseHead, features: &[Vec<f64>], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(batch_size.max(1)) {
        let rows: Vec<&[f64]> = chunk.iter().map(Vec::as_slice).collect();
        let p = head.probs(&Tensor::stack_rows(&rows, &[head.input_dim])?)?;
        out.extend(p.data().chunks(head.classes).map(<[f64]>::to_vec));
    }
    Ok(out)
}

fn classifier_eval(trunk: &EmbeddingModel, head: &DenseHead, set: &SampleSet, batch_size: usize) -> Result<(f64, f64)> {
    let (mut loss, mut hits) = (0.0, 0);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let e = trunk.embed(&set.batch(chunk, trunk.arch.input_scale, None))?;
        let logits = head.logits(&e)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        loss += softmax_cross_entropy(&logits, &labels)?.0 * chunk.len() as f64;
        hits += correct(&logits, &labels);
    }
    let n = set.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Train (or keep training) a trunk with a classification head on top.
///
/// When `eval` is given, the weights from the epoch with the best eval accuracy are kept.
pub fn fit_classifier(
    trunk: &mut EmbeddingModel,
    head: &mut DenseHead,
    train: &SampleSet,
    eval: Option<&SampleSet>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() || train.labels.len() != train.len() {
        return Err(Error::Config(
            "classifier training needs a nonempty labelled dataset".into(),
        ));
    }
    if head.input_dim != trunk.embedding_dim {
        return Err(Error::dim("head", trunk.embedding_dim, head.input_dim));
    }
    let mut opt = Adam::new(cfg.adam);
    let mut history = History::default();
    let mut best: Option<(f64, Sequential, Sequential)> = None;
    for epoch in 0..cfg.epochs {
        let mut ctx = Ctx::train(rng::stream_n(cfg.seed, "dropout", epoch as u64));
        let mut flip_rng = rng::stream_n(cfg.seed, "flip", epoch as u64);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for idx in batches(train.len(), cfg.batch_size, cfg.seed, epoch) {
            let flips: Vec<bool> = idx
                .iter()
                .map(|_| cfg.flip_augment && flip_rng.random::<bool>())
                .collect();
            let x = train.batch(&idx, trunk.arch.input_scale, Some(&flips));
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            trunk.net.zero_grad();
            head.net.zero_grad();
            ctx.pools.clear();
            let e = trunk.net.train_forward(&x, &mut ctx)?;
            let logits = head.net.train_forward(&e, &mut ctx)?;
            let (loss, g) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss diverged at epoch {epoch}")));
            }
            loss_sum += loss * idx.len() as f64;
            hits += correct(&logits, &labels);
            let ge = head.net.backward(&g)?;
            trunk.net.backward(&ge)?;
            step_all(&mut opt, &mut [&mut trunk.net, &mut head.net])?;
        }
        let n = train.len() as f64;
        let (eval_loss, eval_accuracy) = match eval.filter(|e| !e.is_empty()) {
            Some(e) => {
                let (l, a) = classifier_eval(trunk, head, e, cfg.batch_size)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        tracing::debug!(epoch, loss = loss_sum / n, ?eval_accuracy, "classifier epoch");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: Some(hits as f64 / n),
            eval_loss,
            eval_accuracy,
        });
        if let Some(acc) = eval_accuracy {
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, trunk.net.clone(), head.net.clone()));
                history.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, t, h)) = best {
        trunk.net = t;
        head.net = h;
    } else {
        history.best_epoch = cfg.epochs.checked_sub(1);
    }
    trunk.net.clear_cache();
    head.net.clear_cache();
    quantize(&mut trunk.net);
    quantize(&mut head.net);
    Ok(history)
}

/// Supervised CNN embedding. The returned head is the training-only classifier.
pub fn train_cnn(
    train: &SampleSet,
    eval: Option<&SampleSet>,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<(EmbeddingModel, DenseHead, History)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let mut trunk = EmbeddingModel::cnn(arch, cfg.dropout, cfg.seed)?;
    let mut head = DenseHead::new(
        trunk.embedding_dim,
        cfg.head_hidden,
        cfg.dropout,
        rng::derive_str(cfg.seed, "cnn-head"),
    )?;
    let h = fit_classifier(&mut trunk, &mut head, train, eval, cfg)?;
    Ok((trunk, head, h))
}

fn reconstruction_loss(ae: &Autoencoder, set: &SampleSet, batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let x = set.batch(chunk, ae.encoder.arch.input_scale, None);
        total += mse(&ae.reconstruct(&x)?, &x)?.0 * chunk.len() as f64;
    }
    Ok(total / set.len().max(1) as f64)
}

/// Train (or keep training) an auto-encoder on reconstruction error.
/// With `eval`, the epoch with the lowest held-out loss is kept.
pub fn fit_autoencoder(
    ae: &mut Autoencoder,
    train: &SampleSet,
    eval: Option<&SampleSet>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let scale = ae.encoder.arch.input_scale;
    let mut opt = Adam::new(cfg.adam);
    let mut history = History::default();
    let mut best: Option<(f64, Sequential, Sequential)> = None;
    for epoch in 0..cfg.epochs {
        let mut ctx = Ctx::train(rng::stream_n(cfg.seed, "dropout", epoch as u64));
        let mut flip_rng = rng::stream_n(cfg.seed, "flip", epoch as u64);
        let mut loss_sum = 0.0;
        for idx in batches(train.len(), cfg.batch_size, cfg.seed, epoch) {
            let flips: Vec<bool> = idx
                .iter()
                .map(|_| cfg.flip_augment && flip_rng.random::<bool>())
                .collect();
            let x = train.batch(&idx, scale, Some(&flips));
            ae.encoder.net.zero_grad();
            ae.decoder.zero_grad();
            ctx.pools.clear();
            let e = ae.encoder.net.train_forward(&x, &mut ctx)?;
            let y = ae.decoder.train_forward(&e, &mut ctx)?;
            let (loss, g) = mse(&y, &x)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("reconstruction loss diverged at epoch {epoch}")));
            }
            loss_sum += loss * idx.len() as f64;
            let ge = ae.decoder.backward(&g)?;
            ae.encoder.net.backward(&ge)?;
            step_all(&mut opt, &mut [&mut ae.encoder.net, &mut ae.decoder])?;
        }
        let eval_loss = match eval.filter(|e| !e.is_empty()) {
            Some(e) => Some(reconstruction_loss(ae, e, cfg.batch_size)?),
            None => None,
        };
        tracing::debug!(
            epoch,
            loss = loss_sum / train.len() as f64,
            ?eval_loss,
            "autoencoder epoch"
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: None,
            eval_loss,
            eval_accuracy: None,
        });
        if let Some(l) = eval_loss {
            if best.as_ref().is_none_or(|b| l < b.0) {
                best = Some((l, ae.encoder.net.clone(), ae.decoder.clone()));
                history.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, enc, dec)) = best {
        ae.encoder.net = enc;
        ae.decoder = dec;
    } else {
        history.best_epoch = cfg.epochs.checked_sub(1);
    }
    ae.encoder.net.clear_cache();
    ae.decoder.clear_cache();
    quantize(&mut ae.encoder.net);
    quantize(&mut ae.decoder);
    Ok(history)
}

/// Auto-encoder embedding. Returns the whole auto-encoder; call
/// [`Autoencoder::into_encoder`] to drop the decoder.
pub fn train_cae(
    train: &SampleSet,
    eval: Option<&SampleSet>,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<(Autoencoder, History)> {
    let mut ae = Autoencoder::new(arch, cfg.seed)?;
    let h = fit_autoencoder(&mut ae, train, eval, cfg)?;
    Ok((ae, h))
}

/// Mean held-out reconstruction error of an auto-encoder.
pub fn reconstruction_error(ae: &Autoencoder, set: &SampleSet) -> Result<f64> {
    reconstruction_loss(ae, set, 64)
}

/// Train the dense head on precomputed feature rows.
pub fn fit_head(
    head: &mut DenseHead,
    features: &[Vec<f64>],
    labels: &[usize],
    eval: Option<(&[Vec<f64>], &[usize])>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Config(
            "head training needs a nonempty labelled feature set".into(),
        ));
    }
    if let Some(r) = features.iter().find(|r| r.len() != head.input_dim) {
        return Err(Error::dim("dense", head.input_dim, r.len()));
    }
    let mut opt = Adam::new(cfg.adam);
    let mut history = History::default();
    let mut best: Option<(f64, Sequential)> = None;
    for epoch in 0..cfg.epochs {
        let mut ctx = Ctx::train(rng::stream_n(cfg.seed, "dropout", epoch as u64));
        let (mut loss_sum, mut hits) = (0.0, 0);
        for idx in batches(features.len(), cfg.batch_size, cfg.seed, epoch) {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| features[i].as_slice()).collect();
            let x = Tensor::stack_rows(&rows, &[head.input_dim])?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            head.net.zero_grad();
            let logits = head.net.train_forward(&x, &mut ctx)?;
            let (loss, g) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("head loss diverged at epoch {epoch}")));
            }
            loss_sum += loss * idx.len() as f64;
            hits += correct(&logits, &y);
            head.net.backward(&g)?;
            step_all(&mut opt, &mut [&mut head.net])?;
        }
        let n = features.len() as f64;
        let eval_accuracy = match eval.filter(|e| !e.0.is_empty()) {
            Some((f, l)) => {
                let p = predict_features(head, f, 256)?;
                let hit = p.iter().zip(l).filter(|(r, &y)| argmax(r) == y).count();
                Some(hit as f64 / f.len() as f64)
            }
            None => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: Some(hits as f64 / n),
            eval_loss: None,
            eval_accuracy,
        });
        if let Some(acc) = eval_accuracy {
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, head.net.clone()));
                history.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, net)) = best {
        head.net = net;
    } else {
        history.best_epoch = cfg.epochs.checked_sub(1);
    }
    head.net.clear_cache();
    quantize(&mut head.net);
    Ok(history)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_row(row: &[f64]) -> usize {
    argmax(row)
}

/// Softmax probabilities for a trunk-plus-head classifier.
pub fn classify(trunk: &EmbeddingModel, head: &DenseHead, set: &SampleSet, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let e = trunk.embed(&set.batch(chunk, trunk.arch.input_scale, None))?;
        let p = softmax(&head.logits(&e)?)?;
        out.extend(p.data().chunks(head.classes).map(<[f64]>::to_vec));
    }
    Ok(out)
}
