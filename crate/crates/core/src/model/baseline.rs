use candle_core::Tensor;

use super::layers::{Conv2d, UpConv};
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct DoubleConv {
    a: Conv2d,
    b: Conv2d,
}

impl DoubleConv {
    fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        ps.scoped(name, |ps| {
            Ok(Self {
                a: Conv2d::new(ps, "a", c_in, c_out, 3, 1, 1)?,
                b: Conv2d::new(ps, "b", c_out, c_out, 3, 1, 1)?,
            })
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = self.a.forward(x)?.relu()?;
        Ok(self.b.forward(&x)?.relu()?)
    }
}

/// Compact U-Net: one double convolution per level, max-pool down,
/// transposed-convolution up, skip concatenation.
#[derive(Debug, Clone)]
pub struct UNet {
    down: Vec<DoubleConv>,
    up: Vec<(UpConv, DoubleConv)>,
    head: Conv2d,
}

impl UNet {
    pub fn build(ps: &mut ParamStore, in_chans: usize, widths: &[usize], classes: usize) -> Result<Self> {
        let mut down = Vec::with_capacity(widths.len());
        let mut c = in_chans;
        for (i, &w) in widths.iter().enumerate() {
            down.push(DoubleConv::new(ps, &format!("down.{i}"), c, w)?);
            c = w;
        }
        let mut up = Vec::with_capacity(widths.len() - 1);
        for i in (0..widths.len() - 1).rev() {
            let w = widths[i];
            let pair = ps.scoped(&format!("up.{i}"), |ps| {
                Ok((UpConv::new(ps, "up", c, w)?, DoubleConv::new(ps, "conv", 2 * w, w)?))
            })?;
            up.push(pair);
            c = w;
        }
        let head = Conv2d::new(ps, "head", c, classes, 1, 0, 1)?;
        Ok(Self { down, up, head })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        let m = 1 << (self.down.len() - 1);
        if h % m != 0 || w % m != 0 {
            return Err(Error::PatchGrid {
                height: h,
                width: w,
                patch: m,
            });
        }
        let mut skips = Vec::with_capacity(self.down.len());
        let mut x = x.clone();
        for (i, level) in self.down.iter().enumerate() {
            if i > 0 {
                x = x.max_pool2d(2)?;
            }
            x = level.forward(&x)?;
            skips.push(x.clone());
        }
        skips.pop();
        for (upconv, conv) in &self.up {
            let skip = skips.pop().expect("one skip per up level");
            let u = upconv.forward(&x)?.relu()?;
            x = conv.forward(&Tensor::cat(&[&skip, &u], 1)?)?;
        }
        self.head.forward(&x)
    }
}
