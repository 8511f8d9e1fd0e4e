use std::sync::Arc;

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor};

use super::LossSpec;

/// Wraps the `f64` loss kernels as a differentiable candle op over
/// `N x 2 x H x W` logits.
struct SegLoss {
    spec: LossSpec,
    labels: Arc<Vec<u8>>,
}

impl SegLoss {
    fn batch(&self, logits: &[f64], n: usize) -> candle_core::Result<(f64, Vec<f64>)> {
        self.spec
            .batch_value_and_grad(logits, &self.labels, n)
            .map_err(candle_core::Error::wrap)
    }
}

fn as_f64(storage: &CpuStorage, layout: &Layout) -> candle_core::Result<Vec<f64>> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("segmentation loss expects contiguous logits".into()))?;
    Ok(match storage {
        CpuStorage::F32(v) => v[start..end].iter().map(|&x| x as f64).collect(),
        CpuStorage::F64(v) => v[start..end].to_vec(),
        _ => candle_core::bail!("segmentation loss expects f32 or f64 logits"),
    })
}

impl CustomOp1 for SegLoss {
    fn name(&self) -> &'static str {
        "segmentation-loss"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let n = layout.dims()[0];
        let logits = as_f64(storage, layout)?;
        let (value, _) = self.batch(&logits, n)?;
        let out = match storage {
            CpuStorage::F64(_) => CpuStorage::F64(vec![value]),
            _ => CpuStorage::F32(vec![value as f32]),
        };
        Ok((out, Shape::from(())))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let n = arg.dim(0)?;
        let logits: Vec<f64> = arg
            .flatten_all()?
            .to_dtype(candle_core::DType::F64)?
            .to_vec1()?;
        let (_, grad) = self.batch(&logits, n)?;
        let grad = Tensor::from_vec(grad, arg.shape(), arg.device())?.to_dtype(arg.dtype())?;
        Ok(Some(grad.broadcast_mul(grad_res)?))
    }
}

/// Scalar loss tensor for `N x 2 x H x W` logits and row-major `N x H x W`
/// labels.
pub fn loss_tensor(spec: &LossSpec, logits: &Tensor, labels: Arc<Vec<u8>>) -> candle_core::Result<Tensor> {
    let (n, c, h, w) = logits.dims4()?;
    if c != 2 || labels.len() != n * h * w {
        candle_core::bail!("logits {:?} do not match {} labels", logits.dims(), labels.len());
    }
    logits.contiguous()?.apply_op1(SegLoss {
        spec: spec.clone(),
        labels,
    })
}
