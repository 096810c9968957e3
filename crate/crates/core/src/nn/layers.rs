use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kernels::{axpy, dot, gather_axpy, gather_dot, scatter_axpy};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Serializable description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerSpec {
    Depthwise {
        channels: usize,
        width: usize,
        stride: usize,
        pad: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        width: usize,
        stride: usize,
        pad: usize,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        width: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        channels: usize,
        momentum: f64,
    },
    Elu,
    MaxPool {
        width: usize,
        stride: usize,
    },
    Unpool {
        width: usize,
        stride: usize,
    },
    Dropout {
        p: f64,
    },
    Flatten,
    Reshape {
        channels: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            width: 1,
            stride: 1,
            pad: 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Depthwise { .. } => "depthwise",
            LayerSpec::Conv { width: 1, .. } => "pointwise",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::ConvTranspose { .. } => "conv_transpose",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Elu => "elu",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::Unpool { .. } => "unpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Argmax positions recorded by a max-pool, consumed by the matching unpool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    pub batch: usize,
    pub channels: usize,
    pub input_len: usize,
    pub output_len: usize,
    /// Absolute input position of each pooled maximum, row-major `(b, c, t)`.
    pub positions: Vec<u32>,
}

/// Per-call state threaded through a stack: dropout randomness and the pool-index stack.
#[derive(Debug, Default)]
pub struct Ctx {
    pub rng: Option<Rng>,
    pub pools: Vec<PoolIndices>,
}

impl Ctx {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train(rng: Rng) -> Self {
        Self {
            rng: Some(rng),
            pools: Vec::new(),
        }
    }
}

fn init_uniform(n: usize, fan_in: usize, rng: &mut Rng) -> Vec<f64> {
    let a = (3.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

fn missing_cache(layer: &str) -> Error {
    Error::Usage(format!("backward through {layer} without a train-mode forward"))
}

fn conv_out_len(len: usize, width: usize, stride: usize, pad: usize, layer: &str) -> Result<usize> {
    if len + 2 * pad < width {
        return Err(Error::dim(
            layer,
            format!("length >= {}", width.saturating_sub(2 * pad)),
            len,
        ));
    }
    Ok((len + 2 * pad - width) / stride + 1)
}

#[derive(Debug, Clone)]
pub struct Depthwise {
    pub channels: usize,
    pub width: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache: Option<Tensor>,
}

impl Depthwise {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t) = x.dims3("depthwise")?;
        if c != self.channels {
            return Err(Error::dim("depthwise", self.channels, c));
        }
        let to = conv_out_len(t, self.width, self.stride, self.pad, "depthwise")?;
        let mut out = Tensor::zeros(&[b, c, to]);
        let (xd, od) = (x.data(), out.data_mut());
        for bi in 0..b {
            for ci in 0..c {
                let row = &xd[(bi * c + ci) * t..][..t];
                let o = &mut od[(bi * c + ci) * to..][..to];
                o.fill(self.bias[ci]);
                for k in 0..self.width {
                    gather_axpy(o, row, self.weight[ci * self.width + k], k, self.stride, self.pad);
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache("depthwise"))?;
        let (b, c, t) = x.dims3("depthwise")?;
        let to = g.dims3("depthwise")?.2;
        let mut gx = Tensor::zeros(&[b, c, t]);
        let (xd, gd) = (x.data(), g.data());
        let gxd = gx.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let row = &xd[(bi * c + ci) * t..][..t];
                let gr = &gd[(bi * c + ci) * to..][..to];
                self.grad_bias[ci] += gr.iter().sum::<f64>();
                let gxr = &mut gxd[(bi * c + ci) * t..][..t];
                for k in 0..self.width {
                    let w = self.weight[ci * self.width + k];
                    self.grad_weight[ci * self.width + k] += gather_dot(gr, row, k, self.stride, self.pad);
                    scatter_axpy(gxr, gr, w, k, self.stride, self.pad);
                }
            }
        }
        Ok(gx)
    }
}

/// Standard 1-D convolution; width 1 gives the pointwise (cross-channel) case.
#[derive(Debug, Clone)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub stride: usize,
    pub pad: usize,
    /// `(out, in, width)`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache: Option<Tensor>,
}

impl Conv {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let name = if self.width == 1 { "pointwise" } else { "conv" };
        let (b, c, t) = x.dims3(name)?;
        if c != self.in_channels {
            return Err(Error::dim(name, self.in_channels, c));
        }
        let to = conv_out_len(t, self.width, self.stride, self.pad, name)?;
        let (ci_n, co_n, w_n) = (self.in_channels, self.out_channels, self.width);
        let mut out = Tensor::zeros(&[b, co_n, to]);
        let (xd, od) = (x.data(), out.data_mut());
        for bi in 0..b {
            for o in 0..co_n {
                let orow = &mut od[(bi * co_n + o) * to..][..to];
                orow.fill(self.bias[o]);
                for i in 0..ci_n {
                    let row = &xd[(bi * ci_n + i) * t..][..t];
                    for k in 0..w_n {
                        let w = self.weight[(o * ci_n + i) * w_n + k];
                        gather_axpy(orow, row, w, k, self.stride, self.pad);
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache("conv"))?;
        let (b, c, t) = x.dims3("conv")?;
        let to = g.dims3("conv")?.2;
        let (co_n, w_n) = (self.out_channels, self.width);
        let mut gx = Tensor::zeros(&[b, c, t]);
        let (xd, gd) = (x.data(), g.data());
        let gxd = gx.data_mut();
        for bi in 0..b {
            for o in 0..co_n {
                let gr = &gd[(bi * co_n + o) * to..][..to];
                self.grad_bias[o] += gr.iter().sum::<f64>();
                for i in 0..c {
                    let row = &xd[(bi * c + i) * t..][..t];
                    let gxr = &mut gxd[(bi * c + i) * t..][..t];
                    for k in 0..w_n {
                        let wi = (o * c + i) * w_n + k;
                        self.grad_weight[wi] += gather_dot(gr, row, k, self.stride, self.pad);
                        scatter_axpy(gxr, gr, self.weight[wi], k, self.stride, self.pad);
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Transposed 1-D convolution (the adjoint of [`Conv`] with the same geometry).
#[derive(Debug, Clone)]
pub struct ConvTranspose {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub stride: usize,
    pub pad: usize,
    /// `(in, out, width)`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache: Option<Tensor>,
}

impl ConvTranspose {
    fn out_len(&self, t: usize) -> Result<usize> {
        let full = (t.max(1) - 1) * self.stride + self.width;
        if t == 0 || full <= 2 * self.pad {
            return Err(Error::dim("conv_transpose", "longer input", t));
        }
        Ok(full - 2 * self.pad)
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t) = x.dims3("conv_transpose")?;
        if c != self.in_channels {
            return Err(Error::dim("conv_transpose", self.in_channels, c));
        }
        let to = self.out_len(t)?;
        let (co_n, w_n) = (self.out_channels, self.width);
        let mut out = Tensor::zeros(&[b, co_n, to]);
        let (xd, od) = (x.data(), out.data_mut());
        for bi in 0..b {
            for o in 0..co_n {
                let orow = &mut od[(bi * co_n + o) * to..][..to];
                orow.fill(self.bias[o]);
                for i in 0..c {
                    let row = &xd[(bi * c + i) * t..][..t];
                    for k in 0..w_n {
                        let w = self.weight[(i * co_n + o) * w_n + k];
                        scatter_axpy(orow, row, w, k, self.stride, self.pad);
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache("conv_transpose"))?;
        let (b, c, t) = x.dims3("conv_transpose")?;
        let to = g.dims3("conv_transpose")?.2;
        let (co_n, w_n) = (self.out_channels, self.width);
        let mut gx = Tensor::zeros(&[b, c, t]);
        let (xd, gd) = (x.data(), g.data());
        let gxd = gx.data_mut();
        for bi in 0..b {
            for o in 0..co_n {
                let gr = &gd[(bi * co_n + o) * to..][..to];
                self.grad_bias[o] += gr.iter().sum::<f64>();
                for i in 0..c {
                    let row = &xd[(bi * c + i) * t..][..t];
                    let gxr = &mut gxd[(bi * c + i) * t..][..t];
                    for k in 0..w_n {
                        let wi = (i * co_n + o) * w_n + k;
                        self.grad_weight[wi] += gather_dot(row, gr, k, self.stride, self.pad);
                        gather_axpy(gxr, gr, self.weight[wi], k, self.stride, self.pad);
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Batch normalisation over `(batch, time)` per channel, or over the batch for `(batch, features)`.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    cache: Option<(Tensor, Vec<f64>)>,
}

fn bn_layout(x: &Tensor, channels: usize) -> Result<(usize, usize, usize)> {
    let (b, c, t) = match x.shape() {
        [b, c] => (*b, *c, 1),
        [b, c, t] => (*b, *c, *t),
        s => return Err(Error::dim("batch_norm", "2-D or 3-D input", format!("{s:?}"))),
    };
    if c != channels {
        return Err(Error::dim("batch_norm", channels, c));
    }
    Ok((b, c, t))
}

impl BatchNorm {
    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t) = bn_layout(x, self.channels)?;
        let mut out = x.clone();
        let od = out.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let inv = 1.0 / (self.running_var[ci] + self.eps).sqrt();
                let (m, g, be) = (self.running_mean[ci], self.gamma[ci], self.beta[ci]);
                for v in &mut od[(bi * c + ci) * t..][..t] {
                    *v = g * (*v - m) * inv + be;
                }
            }
        }
        Ok(out)
    }

    fn train_forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, c, t) = bn_layout(x, self.channels)?;
        let n = (b * t) as f64;
        let xd = x.data();
        let mut xhat = x.clone();
        let mut inv_std = vec![0.0; c];
        let mut out = x.clone();
        for ci in 0..c {
            let mut sum = 0.0;
            for bi in 0..b {
                sum += xd[(bi * c + ci) * t..][..t].iter().sum::<f64>();
            }
            let mean = sum / n;
            let mut ss = 0.0;
            for bi in 0..b {
                ss += xd[(bi * c + ci) * t..][..t]
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>();
            }
            let var = ss / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = inv;
            let unbiased = if n > 1.0 { ss / (n - 1.0) } else { var };
            self.running_mean[ci] = self.momentum * self.running_mean[ci] + (1.0 - self.momentum) * mean;
            self.running_var[ci] = self.momentum * self.running_var[ci] + (1.0 - self.momentum) * unbiased;
            let (g, be) = (self.gamma[ci], self.beta[ci]);
            for bi in 0..b {
                let off = (bi * c + ci) * t;
                let src = &xd[off..off + t];
                let hrow = &mut xhat.data_mut()[off..off + t];
                for (h, v) in hrow.iter_mut().zip(src) {
                    *h = (v - mean) * inv;
                }
                let orow = &mut out.data_mut()[off..off + t];
                for (o, h) in orow.iter_mut().zip(&xhat.data()[off..off + t]) {
                    *o = g * h + be;
                }
            }
        }
        self.cache = Some((xhat, inv_std));
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let (xhat, inv_std) = self.cache.take().ok_or_else(|| missing_cache("batch_norm"))?;
        let (b, c, t) = bn_layout(&xhat, self.channels)?;
        let n = (b * t) as f64;
        let (hd, gd) = (xhat.data(), g.data());
        let mut gx = Tensor::zeros(xhat.shape());
        for ci in 0..c {
            let (mut sg, mut sgh) = (0.0, 0.0);
            for bi in 0..b {
                let off = (bi * c + ci) * t;
                sg += gd[off..off + t].iter().sum::<f64>();
                sgh += dot(&gd[off..off + t], &hd[off..off + t]);
            }
            self.grad_beta[ci] += sg;
            self.grad_gamma[ci] += sgh;
            let scale = self.gamma[ci] * inv_std[ci] / n;
            let gxd = gx.data_mut();
            for bi in 0..b {
                let off = (bi * c + ci) * t;
                for k in off..off + t {
                    gxd[k] = scale * (n * gd[k] - sg - hd[k] * sgh);
                }
            }
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool {
    pub width: usize,
    pub stride: usize,
    cache: Option<PoolIndices>,
}

impl MaxPool {
    fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolIndices)> {
        let (b, c, t) = x.dims3("max_pool")?;
        let to = conv_out_len(t, self.width, self.stride, 0, "max_pool")?;
        let mut out = Tensor::zeros(&[b, c, to]);
        let mut positions = Vec::with_capacity(b * c * to);
        let xd = x.data();
        let od = out.data_mut();
        for r in 0..b * c {
            let row = &xd[r * t..][..t];
            for j in 0..to {
                let start = j * self.stride;
                let mut best = start;
                for k in start + 1..start + self.width {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                od[r * to + j] = row[best];
                positions.push(best as u32);
            }
        }
        let idx = PoolIndices {
            batch: b,
            channels: c,
            input_len: t,
            output_len: to,
            positions,
        };
        Ok((out, idx))
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let idx = self.cache.take().ok_or_else(|| missing_cache("max_pool"))?;
        let mut gx = Tensor::zeros(&[idx.batch, idx.channels, idx.input_len]);
        let gd = g.data();
        if gd.len() != idx.positions.len() {
            return Err(Error::dim("max_pool", idx.positions.len(), gd.len()));
        }
        let gxd = gx.data_mut();
        for (j, &p) in idx.positions.iter().enumerate() {
            let r = j / idx.output_len;
            gxd[r * idx.input_len + p as usize] += gd[j];
        }
        Ok(gx)
    }
}

/// Inverse of [`MaxPool`]: places each value back at its recorded argmax, zeros elsewhere.
#[derive(Debug, Clone)]
pub struct Unpool {
    pub width: usize,
    pub stride: usize,
    cache: Option<PoolIndices>,
}

impl Unpool {
    fn forward(&self, x: &Tensor, idx: &PoolIndices) -> Result<Tensor> {
        let (b, c, t) = x.dims3("unpool")?;
        if (b, c, t) != (idx.batch, idx.channels, idx.output_len) {
            return Err(Error::dim(
                "unpool",
                format!("({}, {}, {})", idx.batch, idx.channels, idx.output_len),
                format!("({b}, {c}, {t})"),
            ));
        }
        let mut out = Tensor::zeros(&[b, c, idx.input_len]);
        let (xd, od) = (x.data(), out.data_mut());
        for (j, &p) in idx.positions.iter().enumerate() {
            let r = j / t;
            od[r * idx.input_len + p as usize] = xd[j];
        }
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let idx = self.cache.take().ok_or_else(|| missing_cache("unpool"))?;
        let gd = g.data();
        let gx: Vec<f64> = idx
            .positions
            .iter()
            .enumerate()
            .map(|(j, &p)| gd[(j / idx.output_len) * idx.input_len + p as usize])
            .collect();
        Tensor::from_vec(&[idx.batch, idx.channels, idx.output_len], gx)
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `(out, in)`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache: Option<Tensor>,
}

impl Dense {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, f) = x.dims2("dense")?;
        if f != self.inputs {
            return Err(Error::dim("dense", self.inputs, f));
        }
        let mut out = Tensor::zeros(&[b, self.outputs]);
        let od = out.data_mut();
        for bi in 0..b {
            let row = x.row(bi);
            for o in 0..self.outputs {
                od[bi * self.outputs + o] = self.bias[o] + dot(&self.weight[o * f..(o + 1) * f], row);
            }
        }
        Ok(out)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache("dense"))?;
        let (b, f) = x.dims2("dense")?;
        let gd = g.data();
        let mut gx = Tensor::zeros(&[b, f]);
        for bi in 0..b {
            let row = x.row(bi);
            for o in 0..self.outputs {
                let go = gd[bi * self.outputs + o];
                if go == 0.0 {
                    continue;
                }
                self.grad_bias[o] += go;
                axpy(&mut self.grad_weight[o * f..(o + 1) * f], row, go);
                axpy(
                    &mut gx.data_mut()[bi * f..(bi + 1) * f],
                    &self.weight[o * f..(o + 1) * f],
                    go,
                );
            }
        }
        Ok(gx)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Depthwise(Depthwise),
    Conv(Conv),
    ConvTranspose(ConvTranspose),
    BatchNorm(BatchNorm),
    Elu { cache: Option<Tensor> },
    MaxPool(MaxPool),
    Unpool(Unpool),
    Dropout { p: f64, cache: Option<Vec<f64>> },
    Flatten { cache: Option<Vec<usize>> },
    Reshape { channels: usize, cache: Option<Vec<usize>> },
    Dense(Dense),
}

impl Layer {
    /// Build a layer with seeded fan-in-scaled uniform weights and zero biases.
    pub fn from_spec(spec: &LayerSpec, rng: &mut Rng) -> Result<Self> {
        let nonzero = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Config(format!("{} needs a nonzero {what}", spec.name())))
            } else {
                Ok(())
            }
        };
        Ok(match *spec {
            LayerSpec::Depthwise {
                channels,
                width,
                stride,
                pad,
            } => {
                nonzero(channels, "channel count")?;
                nonzero(width, "width")?;
                nonzero(stride, "stride")?;
                Layer::Depthwise(Depthwise {
                    channels,
                    width,
                    stride,
                    pad,
                    weight: init_uniform(channels * width, width, rng),
                    bias: vec![0.0; channels],
                    grad_weight: vec![0.0; channels * width],
                    grad_bias: vec![0.0; channels],
                    cache: None,
                })
            }
            LayerSpec::Conv {
                in_channels,
                out_channels,
                width,
                stride,
                pad,
            } => {
                nonzero(in_channels * out_channels, "channel count")?;
                nonzero(width, "width")?;
                nonzero(stride, "stride")?;
                let n = in_channels * out_channels * width;
                Layer::Conv(Conv {
                    in_channels,
                    out_channels,
                    width,
                    stride,
                    pad,
                    weight: init_uniform(n, in_channels * width, rng),
                    bias: vec![0.0; out_channels],
                    grad_weight: vec![0.0; n],
                    grad_bias: vec![0.0; out_channels],
                    cache: None,
                })
            }
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                width,
                stride,
                pad,
            } => {
                nonzero(in_channels * out_channels, "channel count")?;
                nonzero(width, "width")?;
                nonzero(stride, "stride")?;
                let n = in_channels * out_channels * width;
                let fan_in = in_channels * width.div_ceil(stride);
                Layer::ConvTranspose(ConvTranspose {
                    in_channels,
                    out_channels,
                    width,
                    stride,
                    pad,
                    weight: init_uniform(n, fan_in, rng),
                    bias: vec![0.0; out_channels],
                    grad_weight: vec![0.0; n],
                    grad_bias: vec![0.0; out_channels],
                    cache: None,
                })
            }
            LayerSpec::BatchNorm { channels, momentum } => {
                nonzero(channels, "channel count")?;
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::Config(format!("batch norm momentum {momentum} outside [0, 1)")));
                }
                Layer::BatchNorm(BatchNorm {
                    channels,
                    momentum,
                    eps: 1e-5,
                    gamma: vec![1.0; channels],
                    beta: vec![0.0; channels],
                    running_mean: vec![0.0; channels],
                    running_var: vec![1.0; channels],
                    grad_gamma: vec![0.0; channels],
                    grad_beta: vec![0.0; channels],
                    cache: None,
                })
            }
            LayerSpec::Elu => Layer::Elu { cache: None },
            LayerSpec::MaxPool { width, stride } => {
                nonzero(width, "width")?;
                nonzero(stride, "stride")?;
                Layer::MaxPool(MaxPool {
                    width,
                    stride,
                    cache: None,
                })
            }
            LayerSpec::Unpool { width, stride } => Layer::Unpool(Unpool {
                width,
                stride,
                cache: None,
            }),
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
                }
                Layer::Dropout { p, cache: None }
            }
            LayerSpec::Flatten => Layer::Flatten { cache: None },
            LayerSpec::Reshape { channels } => {
                nonzero(channels, "channel count")?;
                Layer::Reshape { channels, cache: None }
            }
            LayerSpec::Dense { inputs, outputs } => {
                nonzero(inputs, "input count")?;
                nonzero(outputs, "output count")?;
                Layer::Dense(Dense {
                    inputs,
                    outputs,
                    weight: init_uniform(inputs * outputs, inputs, rng),
                    bias: vec![0.0; outputs],
                    grad_weight: vec![0.0; inputs * outputs],
                    grad_bias: vec![0.0; outputs],
                    cache: None,
                })
            }
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Depthwise(l) => LayerSpec::Depthwise {
                channels: l.channels,
                width: l.width,
                stride: l.stride,
                pad: l.pad,
            },
            Layer::Conv(l) => LayerSpec::Conv {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                width: l.width,
                stride: l.stride,
                pad: l.pad,
            },
            Layer::ConvTranspose(l) => LayerSpec::ConvTranspose {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                width: l.width,
                stride: l.stride,
                pad: l.pad,
            },
            Layer::BatchNorm(l) => LayerSpec::BatchNorm {
                channels: l.channels,
                momentum: l.momentum,
            },
            Layer::Elu { .. } => LayerSpec::Elu,
            Layer::MaxPool(l) => LayerSpec::MaxPool {
                width: l.width,
                stride: l.stride,
            },
            Layer::Unpool(l) => LayerSpec::Unpool {
                width: l.width,
                stride: l.stride,
            },
            Layer::Dropout { p, .. } => LayerSpec::Dropout { p: *p },
            Layer::Flatten { .. } => LayerSpec::Flatten,
            Layer::Reshape { channels, .. } => LayerSpec::Reshape { channels: *channels },
            Layer::Dense(l) => LayerSpec::Dense {
                inputs: l.inputs,
                outputs: l.outputs,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        self.spec().name()
    }

    /// Eval-mode forward: no caches, dropout off, batch norm on running statistics.
    pub fn infer(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        match self {
            Layer::Depthwise(l) => l.forward(x),
            Layer::Conv(l) => l.forward(x),
            Layer::ConvTranspose(l) => l.forward(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Elu { .. } => elu_forward(x),
            Layer::MaxPool(l) => {
                let (out, idx) = l.forward(x)?;
                ctx.pools.push(idx);
                Ok(out)
            }
            Layer::Unpool(l) => {
                let idx = ctx.pools.pop().ok_or_else(no_pool_indices)?;
                l.forward(x, &idx)
            }
            Layer::Dropout { .. } => Ok(x.clone()),
            Layer::Flatten { .. } => flatten(x),
            Layer::Reshape { channels, .. } => reshape(x, *channels),
            Layer::Dense(l) => l.forward(x),
        }
    }

    /// Train-mode forward: caches what [`Layer::backward`] needs.
    pub fn train_forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        match self {
            Layer::Depthwise(l) => {
                let out = l.forward(x)?;
                l.cache = Some(x.clone());
                Ok(out)
            }
            Layer::Conv(l) => {
                let out = l.forward(x)?;
                l.cache = Some(x.clone());
                Ok(out)
            }
            Layer::ConvTranspose(l) => {
                let out = l.forward(x)?;
                l.cache = Some(x.clone());
                Ok(out)
            }
            Layer::BatchNorm(l) => l.train_forward(x),
            Layer::Elu { cache } => {
                let out = elu_forward(x)?;
                *cache = Some(out.clone());
                Ok(out)
            }
            Layer::MaxPool(l) => {
                let (out, idx) = l.forward(x)?;
                ctx.pools.push(idx.clone());
                l.cache = Some(idx);
                Ok(out)
            }
            Layer::Unpool(l) => {
                let idx = ctx.pools.pop().ok_or_else(no_pool_indices)?;
                let out = l.forward(x, &idx)?;
                l.cache = Some(idx);
                Ok(out)
            }
            Layer::Dropout { p, cache } => {
                let rng = ctx
                    .rng
                    .as_mut()
                    .ok_or_else(|| Error::Usage("train-mode dropout needs a random stream".into()))?;
                let keep = 1.0 - *p;
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mut out = x.clone();
                for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                *cache = Some(mask);
                Ok(out)
            }
            Layer::Flatten { cache } => {
                *cache = Some(x.shape().to_vec());
                flatten(x)
            }
            Layer::Reshape { channels, cache } => {
                *cache = Some(x.shape().to_vec());
                reshape(x, *channels)
            }
            Layer::Dense(l) => {
                let out = l.forward(x)?;
                l.cache = Some(x.clone());
                Ok(out)
            }
        }
    }

    /// Accumulate parameter gradients and return the gradient with respect to the input.
    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Depthwise(l) => l.backward(g),
            Layer::Conv(l) => l.backward(g),
            Layer::ConvTranspose(l) => l.backward(g),
            Layer::BatchNorm(l) => l.backward(g),
            Layer::Elu { cache } => {
                let y = cache.take().ok_or_else(|| missing_cache("elu"))?;
                check_same(g, &y, "elu")?;
                let mut gx = g.clone();
                for (v, yv) in gx.data_mut().iter_mut().zip(y.data()) {
                    if *yv <= 0.0 {
                        *v *= yv + 1.0;
                    }
                }
                Ok(gx)
            }
            Layer::MaxPool(l) => l.backward(g),
            Layer::Unpool(l) => l.backward(g),
            Layer::Dropout { cache, .. } => {
                let mask = cache.take().ok_or_else(|| missing_cache("dropout"))?;
                if mask.len() != g.len() {
                    return Err(Error::dim("dropout", mask.len(), g.len()));
                }
                let mut gx = g.clone();
                for (v, m) in gx.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok(gx)
            }
            Layer::Flatten { cache } | Layer::Reshape { cache, .. } => {
                let shape = cache.take().ok_or_else(|| missing_cache("reshape"))?;
                g.clone().reshape(&shape)
            }
            Layer::Dense(l) => l.backward(g),
        }
    }

    /// `(parameter, gradient)` pairs in a fixed order.
    pub fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Depthwise(l) => vec![(&mut l.weight, &mut l.grad_weight), (&mut l.bias, &mut l.grad_bias)],
            Layer::Conv(l) => vec![(&mut l.weight, &mut l.grad_weight), (&mut l.bias, &mut l.grad_bias)],
            Layer::ConvTranspose(l) => {
                vec![(&mut l.weight, &mut l.grad_weight), (&mut l.bias, &mut l.grad_bias)]
            }
            Layer::BatchNorm(l) => vec![(&mut l.gamma, &mut l.grad_gamma), (&mut l.beta, &mut l.grad_beta)],
            Layer::Dense(l) => vec![(&mut l.weight, &mut l.grad_weight), (&mut l.bias, &mut l.grad_bias)],
            _ => Vec::new(),
        }
    }

    /// Everything that must be persisted: parameters plus batch-norm running statistics.
    pub fn state(&self) -> Vec<(&'static str, &Vec<f64>)> {
        match self {
            Layer::Depthwise(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Conv(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::ConvTranspose(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &l.gamma),
                ("beta", &l.beta),
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        match self {
            Layer::Depthwise(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Conv(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::ConvTranspose(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &mut l.gamma),
                ("beta", &mut l.beta),
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, g) in self.params_mut() {
            g.fill(0.0);
        }
    }

    /// Drop any train-mode caches (used before cloning a checkpoint).
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Depthwise(l) => l.cache = None,
            Layer::Conv(l) => l.cache = None,
            Layer::ConvTranspose(l) => l.cache = None,
            Layer::BatchNorm(l) => l.cache = None,
            Layer::Elu { cache } => *cache = None,
            Layer::MaxPool(l) => l.cache = None,
            Layer::Unpool(l) => l.cache = None,
            Layer::Dropout { cache, .. } => *cache = None,
            Layer::Flatten { cache } | Layer::Reshape { cache, .. } => *cache = None,
            Layer::Dense(l) => l.cache = None,
        }
    }
}

fn no_pool_indices() -> Error {
    Error::Usage("unpool without matching max-pool indices".into())
}

fn check_same(a: &Tensor, b: &Tensor, layer: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            layer,
            format!("{:?}", b.shape()),
            format!("{:?}", a.shape()),
        ));
    }
    Ok(())
}

fn elu_forward(x: &Tensor) -> Result<Tensor> {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = elu(*v);
    }
    Ok(out)
}

fn flatten(x: &Tensor) -> Result<Tensor> {
    let b = x.batch();
    let f = x.len() / b.max(1);
    x.clone().reshape(&[b, f])
}

fn reshape(x: &Tensor, channels: usize) -> Result<Tensor> {
    let (b, f) = x.dims2("reshape")?;
    if f % channels != 0 {
        return Err(Error::dim("reshape", format!("multiple of {channels}"), f));
    }
    x.clone().reshape(&[b, channels, f / channels])
}
