//! Minimal layers on top of candle tensor ops. All layers are written from
//! primitive ops so that every one of them has a backward pass.

use candle_core::{Tensor, D};

use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    /// `weight` is stored `(out, in)`.
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                weight: ps.uniform_fan_in("weight", &[d_out, d_in], d_in)?,
                bias: ps.zeros("bias", &[d_out])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(y.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    padding: usize,
    stride: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
    ) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                weight: ps.uniform_fan_in("weight", &[c_out, c_in, kernel, kernel], c_in * kernel * kernel)?,
                bias: ps.zeros("bias", &[c_out])?,
                padding,
                stride,
            })
        })
    }

    pub fn in_channels(&self) -> Result<usize> {
        Ok(self.weight.dim(1)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

/// Kernel-2, stride-2 transposed convolution: doubles the spatial size.
#[derive(Debug, Clone)]
pub struct UpConv {
    weight: Tensor,
    bias: Tensor,
}

impl UpConv {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                weight: ps.uniform_fan_in("weight", &[c_in, c_out, 2, 2], c_out * 4)?,
                bias: ps.zeros("bias", &[c_out])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, 0, 0, 2, 1)?;
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    const EPS: f64 = 1e-6;

    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                weight: ps.ones("weight", &[dim])?,
                bias: ps.zeros("bias", &[dim])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + Self::EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub struct Attention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                qkv: Linear::new(ps, "qkv", dim, 3 * dim)?,
                proj: Linear::new(ps, "proj", dim, dim)?,
                heads,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, l, d) = x.dims3()?;
        let hd = d / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((n, l, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.get(0)?.contiguous()?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let att = (q.matmul(&k.t()?)? * (1.0 / (hd as f64).sqrt()))?;
        let att = candle_nn::ops::softmax(&att, D::Minus1)?;
        let out = att.matmul(&v)?.transpose(1, 2)?.reshape((n, l, d))?;
        self.proj.forward(&out)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                fc1: Linear::new(ps, "fc1", dim, hidden)?,
                fc2: Linear::new(ps, "fc2", hidden, dim)?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu_erf()?)
    }
}

/// Pre-norm transformer block.
#[derive(Debug, Clone)]
pub struct Block {
    norm1: LayerNorm,
    attn: Attention,
    norm2: LayerNorm,
    mlp: Mlp,
}

impl Block {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                norm1: LayerNorm::new(ps, "norm1", dim)?,
                attn: Attention::new(ps, "attn", dim, heads)?,
                norm2: LayerNorm::new(ps, "norm2", dim)?,
                mlp: Mlp::new(ps, "mlp", dim, dim * mlp_ratio)?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.norm1.forward(x)?)?)?;
        Ok((&x + self.mlp.forward(&self.norm2.forward(&x)?)?)?)
    }
}

/// 1D sine-cosine embedding of `positions`, `dim` must be even.
pub fn sincos_1d(dim: usize, positions: &[f64]) -> Vec<f32> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(positions.len() * dim);
    for &p in positions {
        let (mut sin, mut cos) = (Vec::with_capacity(half), Vec::with_capacity(half));
        for i in 0..half {
            let omega = 1.0 / 10000f64.powf(i as f64 / half as f64);
            sin.push((p * omega).sin() as f32);
            cos.push((p * omega).cos() as f32);
        }
        out.extend(sin);
        out.extend(cos);
    }
    out
}

/// Fixed 2D sine-cosine positional table of shape `(gh * gw, dim)`; the first
/// half of each row encodes the row index, the second half the column.
pub fn sincos_2d(dim: usize, gh: usize, gw: usize) -> Result<Tensor> {
    let half = dim / 2;
    let rows: Vec<f64> = (0..gh * gw).map(|t| (t / gw) as f64).collect();
    let cols: Vec<f64> = (0..gh * gw).map(|t| (t % gw) as f64).collect();
    let er = sincos_1d(half, &rows);
    let ec = sincos_1d(half, &cols);
    let mut data = Vec::with_capacity(gh * gw * dim);
    for t in 0..gh * gw {
        data.extend_from_slice(&er[t * half..(t + 1) * half]);
        data.extend_from_slice(&ec[t * half..(t + 1) * half]);
    }
    Ok(Tensor::from_vec(data, (gh * gw, dim), &candle_core::Device::Cpu)?)
}
