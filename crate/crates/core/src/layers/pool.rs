use crate::error::{arg_err, dim_err, Result};
use crate::tensor::Tensor;

/// Max pooling over square windows that must tile the input exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool {
    pub window: usize,
    pub stride: usize,
}

impl MaxPool {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return arg_err(format!("pool window {window} and stride {stride} must be positive"));
        }
        Ok(Self { window, stride })
    }

    /// Output extent for one spatial axis, rejecting windows that leave a remainder.
    pub fn output_extent(&self, extent: usize) -> Result<usize> {
        if extent < self.window || !(extent - self.window).is_multiple_of(self.stride) {
            return dim_err(format!(
                "pool window {} stride {} does not tile extent {extent}",
                self.window, self.stride
            ));
        }
        Ok((extent - self.window) / self.stride + 1)
    }
}

/// Returns the pooled tensor and, per output element, the flat input index of its maximum.
///
/// Ties go to the first element in row-major scan order of the window.
pub fn maxpool_forward(x: &Tensor, pool: MaxPool) -> Result<(Tensor, Vec<u32>)> {
    let xs = x.shape();
    if xs.len() != 4 {
        return dim_err(format!("maxpool input must be [B x C x H x W], got {xs:?}"));
    }
    let (oh, ow) = (pool.output_extent(xs[2])?, pool.output_extent(xs[3])?);
    let (h, w) = (xs[2], xs[3]);
    let planes = xs[0] * xs[1];
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    let data = x.data();
    for plane in 0..planes {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let (r0, c0) = (i * pool.stride, j * pool.stride);
                let mut best = base + r0 * w + c0;
                for u in 0..pool.window {
                    for v in 0..pool.window {
                        let idx = base + (r0 + u) * w + c0 + v;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(&[xs[0], xs[1], oh, ow], out)?, argmax))
}

pub fn maxpool_backward(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return dim_err(format!(
            "maxpool grad_out has {} elements, forward produced {}",
            grad_out.len(),
            argmax.len()
        ));
    }
    let mut grad_x = Tensor::zeros(input_shape)?;
    let gx = grad_x.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gx[idx as usize] += g;
    }
    Ok(grad_x)
}
