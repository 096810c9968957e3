use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`, shaped `(batch, channels, time)` or `(batch, features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("tensor", format!("{n} values for {shape:?}"), data.len()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// `(batch, channels, time)`, or a dimension error naming `layer`.
    pub fn dims3(&self, layer: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, c, t] => Ok((b, c, t)),
            _ => Err(Error::dim(
                layer,
                "(batch, channels, time)",
                format!("{:?}", self.shape),
            )),
        }
    }

    /// `(batch, features)`, or a dimension error naming `layer`.
    pub fn dims2(&self, layer: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [b, f] => Ok((b, f)),
            _ => Err(Error::dim(layer, "(batch, features)", format!("{:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim("reshape", format!("{:?}", self.shape), format!("{shape:?}")));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Row `i` of the leading axis.
    pub fn row(&self, i: usize) -> &[f64] {
        let stride = self.data.len() / self.batch().max(1);
        &self.data[i * stride..(i + 1) * stride]
    }

    /// Stack equally-shaped rows into a new leading axis.
    pub fn stack_rows(rows: &[&[f64]], row_shape: &[usize]) -> Result<Self> {
        let per: usize = row_shape.iter().product();
        let mut data = Vec::with_capacity(rows.len() * per);
        for r in rows {
            if r.len() != per {
                return Err(Error::dim("stack", per, r.len()));
            }
            data.extend_from_slice(r);
        }
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(row_shape);
        Ok(Self { shape, data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
