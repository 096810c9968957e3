use serde::{Deserialize, Serialize};

use super::layers::{Ctx, Layer, LayerSpec};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// An ordered stack of layers.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    /// Layer `i` is initialised from its own stream, so identical prefixes get identical weights.
    pub fn from_specs(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| Layer::from_spec(s, &mut rng::stream_n(seed, "init", i as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_with(x, &mut Ctx::eval())
    }

    pub fn infer_with(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h, ctx)?;
        }
        Ok(h)
    }

    pub fn train_forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.train_forward(&h, ctx)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, ctx: &mut Ctx) -> Result<Tensor> {
        match mode {
            Mode::Train => self.train_forward(x, ctx),
            Mode::Eval => self.infer_with(x, ctx),
        }
    }

    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let mut g = g.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn num_params(&mut self) -> usize {
        self.params_mut().iter().map(|(p, _)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// Persisted tensors with stable names such as `3.running_var`.
    pub fn state(&self) -> Vec<(String, &Vec<f64>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.state().into_iter().map(move |(n, v)| (format!("{i}.{n}"), v)))
            .collect()
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| l.state_mut().into_iter().map(move |(n, v)| (format!("{i}.{n}"), v)))
            .collect()
    }
}
