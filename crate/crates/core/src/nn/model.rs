use serde::{Deserialize, Serialize};

use super::layers::{Ctx, LayerSpec};
use super::loss::softmax;
use super::sequential::Sequential;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub channels: usize,
    pub width: usize,
    pub stride: usize,
}

/// Shape of the convolutional trunk shared by the CNN and the auto-encoder's encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_channels: usize,
    pub input_len: usize,
    pub depthwise_width: usize,
    pub pointwise_channels: usize,
    pub blocks: Vec<ConvBlock>,
    pub pool_width: usize,
    pub pool_stride: usize,
    pub bn_momentum: f64,
    /// Multiplier applied to raw microvolt samples before the first layer.
    pub input_scale: f64,
}

impl ArchConfig {
    /// Full-size trunk: 32, 64, 64 channels.
    pub fn standard(input_channels: usize, input_len: usize) -> Self {
        Self {
            input_channels,
            input_len,
            depthwise_width: 7,
            pointwise_channels: input_channels,
            blocks: [32, 64, 64]
                .map(|channels| ConvBlock {
                    channels,
                    width: 5,
                    stride: 1,
                })
                .to_vec(),
            pool_width: 4,
            pool_stride: 4,
            bn_momentum: 0.9,
            input_scale: 0.02,
        }
    }

    /// Same topology with narrower blocks, for single-core runs.
    pub fn compact(input_channels: usize, input_len: usize) -> Self {
        let mut a = Self::standard(input_channels, input_len);
        for (b, c) in a.blocks.iter_mut().zip([8, 16, 16]) {
            b.channels = c;
        }
        a
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.pointwise_channels == 0 || self.blocks.is_empty() {
            return Err(Error::Config("trunk needs channels and at least one block".into()));
        }
        if self.depthwise_width.is_multiple_of(2) || self.blocks.iter().any(|b| b.width % 2 == 0) {
            return Err(Error::Config("convolution widths must be odd".into()));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Config("input scale must be positive".into()));
        }
        self.output_shape().map(|_| ())
    }

    /// `(channels, length)` after the last block.
    pub fn output_shape(&self) -> Result<(usize, usize)> {
        let mut len = self.input_len;
        for b in &self.blocks {
            if b.stride == 0 || self.pool_stride == 0 {
                return Err(Error::Config("strides must be nonzero".into()));
            }
            len = (len - 1) / b.stride + 1;
            if len < self.pool_width {
                return Err(Error::Config(format!(
                    "input length {} too short for {} pooled blocks",
                    self.input_len,
                    self.blocks.len()
                )));
            }
            len = (len - self.pool_width) / self.pool_stride + 1;
        }
        Ok((self.blocks.last().map_or(0, |b| b.channels), len))
    }

    pub fn embedding_dim(&self) -> Result<usize> {
        let (c, l) = self.output_shape()?;
        Ok(c * l)
    }

    /// Encoder layer specs. `dropout` of `None` omits the dropout layers.
    pub fn encoder_specs(&self, dropout: Option<f64>) -> Vec<LayerSpec> {
        let m = self.bn_momentum;
        let mut s = vec![
            LayerSpec::Depthwise {
                channels: self.input_channels,
                width: self.depthwise_width,
                stride: 1,
                pad: self.depthwise_width / 2,
            },
            LayerSpec::pointwise(self.input_channels, self.pointwise_channels),
            LayerSpec::BatchNorm {
                channels: self.pointwise_channels,
                momentum: m,
            },
            LayerSpec::Elu,
        ];
        let mut cin = self.pointwise_channels;
        for b in &self.blocks {
            s.push(LayerSpec::Conv {
                in_channels: cin,
                out_channels: b.channels,
                width: b.width,
                stride: b.stride,
                pad: b.width / 2,
            });
            s.push(LayerSpec::BatchNorm {
                channels: b.channels,
                momentum: m,
            });
            s.push(LayerSpec::Elu);
            s.push(LayerSpec::MaxPool {
                width: self.pool_width,
                stride: self.pool_stride,
            });
            if let Some(p) = dropout {
                s.push(LayerSpec::Dropout { p });
            }
            cin = b.channels;
        }
        s.push(LayerSpec::Flatten);
        s
    }

    /// Decoder specs mirroring [`ArchConfig::encoder_specs`] block for block.
    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let m = self.bn_momentum;
        let last = self.blocks.last().map_or(1, |b| b.channels);
        let mut s = vec![LayerSpec::Reshape { channels: last }];
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let out = if i == 0 {
                self.pointwise_channels
            } else {
                self.blocks[i - 1].channels
            };
            s.push(LayerSpec::Unpool {
                width: self.pool_width,
                stride: self.pool_stride,
            });
            s.push(LayerSpec::ConvTranspose {
                in_channels: b.channels,
                out_channels: out,
                width: b.width,
                stride: b.stride,
                pad: b.width / 2,
            });
            s.push(LayerSpec::BatchNorm {
                channels: out,
                momentum: m,
            });
            s.push(LayerSpec::Elu);
        }
        s.push(LayerSpec::ConvTranspose {
            in_channels: self.pointwise_channels,
            out_channels: self.input_channels,
            width: 1,
            stride: 1,
            pad: 0,
        });
        s.push(LayerSpec::Depthwise {
            channels: self.input_channels,
            width: self.depthwise_width,
            stride: 1,
            pad: self.depthwise_width / 2,
        });
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Cnn,
    CaeEncoder,
}

/// The embedding network `f`: raw montage window in, fixed-length vector out.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub kind: EmbeddingKind,
    pub arch: ArchConfig,
    pub seed: u64,
    pub net: Sequential,
    pub embedding_dim: usize,
}

impl EmbeddingModel {
    pub fn cnn(arch: &ArchConfig, dropout: f64, seed: u64) -> Result<Self> {
        Self::build(EmbeddingKind::Cnn, arch, Some(dropout), seed)
    }

    fn build(kind: EmbeddingKind, arch: &ArchConfig, dropout: Option<f64>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let net = Sequential::from_specs(&arch.encoder_specs(dropout), rng::derive_str(seed, "trunk"))?;
        Ok(Self {
            kind,
            arch: arch.clone(),
            seed,
            net,
            embedding_dim: arch.embedding_dim()?,
        })
    }

    /// Depthwise temporal convolution first, pointwise cross-channel convolution second.
    pub fn check_layout(&self) -> Result<()> {
        let specs = self.net.specs();
        match specs.as_slice() {
            [LayerSpec::Depthwise { .. }, LayerSpec::Conv { width: 1, .. }, ..] => Ok(()),
            _ => Err(Error::Config(
                "embedding stack must open with depthwise then pointwise convolution".into(),
            )),
        }
    }

    /// Eval-mode embeddings, one row per input.
    pub fn embed(&self, batch: &Tensor) -> Result<Tensor> {
        let (_, c, t) = batch.dims3("embed")?;
        if (c, t) != (self.arch.input_channels, self.arch.input_len) {
            return Err(Error::dim(
                "embed",
                format!("({}, {})", self.arch.input_channels, self.arch.input_len),
                format!("({c}, {t})"),
            ));
        }
        self.net.infer(batch)
    }
}

/// Convolutional auto-encoder. Only the encoder survives training.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub encoder: EmbeddingModel,
    pub decoder: Sequential,
}

impl Autoencoder {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let encoder = EmbeddingModel::build(EmbeddingKind::CaeEncoder, arch, None, seed)?;
        let decoder = Sequential::from_specs(&arch.decoder_specs(), rng::derive_str(seed, "decoder"))?;
        let ae = Self { encoder, decoder };
        let probe = Tensor::zeros(&[1, arch.input_channels, arch.input_len]);
        let out = ae.reconstruct(&probe)?;
        if out.shape() != probe.shape() {
            return Err(Error::Config(format!(
                "decoder does not mirror encoder: {:?} from {:?}",
                out.shape(),
                probe.shape()
            )));
        }
        Ok(ae)
    }

    pub fn reconstruct(&self, batch: &Tensor) -> Result<Tensor> {
        let mut ctx = Ctx::eval();
        let e = self.encoder.net.infer_with(batch, &mut ctx)?;
        self.decoder.infer_with(&e, &mut ctx)
    }

    pub fn into_encoder(self) -> EmbeddingModel {
        self.encoder
    }
}

/// The dense classifier `g`: one hidden ELU layer, dropout, five softmax outputs.
#[derive(Debug, Clone)]
pub struct DenseHead {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub dropout: f64,
    pub net: Sequential,
}

impl DenseHead {
    pub fn new(input_dim: usize, hidden: usize, dropout: f64, seed: u64) -> Result<Self> {
        let specs = Self::specs(input_dim, hidden, NUM_CLASSES, dropout);
        Ok(Self {
            input_dim,
            hidden,
            classes: NUM_CLASSES,
            dropout,
            net: Sequential::from_specs(&specs, rng::derive_str(seed, "head"))?,
        })
    }

    pub fn specs(input_dim: usize, hidden: usize, classes: usize, dropout: f64) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense {
                inputs: input_dim,
                outputs: hidden,
            },
            LayerSpec::Elu,
            LayerSpec::Dropout { p: dropout },
            LayerSpec::Dense {
                inputs: hidden,
                outputs: classes,
            },
        ]
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.net.infer(x)
    }

    /// Eval-mode class probabilities.
    pub fn probs(&self, x: &Tensor) -> Result<Tensor> {
        softmax(&self.logits(x)?)
    }

    /// `(hidden, input)` weights of the first layer and `(classes, hidden)` of the second.
    pub fn weights(&self) -> (&[f64], &[f64]) {
        use super::layers::Layer;
        match (&self.net.layers[0], &self.net.layers[3]) {
            (Layer::Dense(a), Layer::Dense(b)) => (&a.weight, &b.weight),
            _ => unreachable!("head layout is fixed at construction"),
        }
    }

    pub fn weights_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<f64>, &mut Vec<f64>, &mut Vec<f64>) {
        use super::layers::Layer;
        let (first, rest) = self.net.layers.split_at_mut(1);
        match (&mut first[0], &mut rest[2]) {
            (Layer::Dense(a), Layer::Dense(b)) => (&mut a.weight, &mut a.bias, &mut b.weight, &mut b.bias),
            _ => unreachable!("head layout is fixed at construction"),
        }
    }
}

/// Round every persisted value to `f32`, so saving and reloading is lossless.
pub fn quantize(net: &mut Sequential) {
    for (_, v) in net.state_mut() {
        for x in v.iter_mut() {
            *x = *x as f32 as f64;
        }
    }
}
