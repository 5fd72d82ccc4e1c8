//! Valid-mode, stride-1 convolution lowered to im2col + GEMM.

use crate::error::{dim_err, Result};
use crate::tensor::{gemm, Layout, Tensor};

/// Weights `[N x d x k x k]` and biases `[N]` of one convolutional layer.
///
/// Stride is always 1 and padding always 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams {
    weights: Tensor,
    biases: Tensor,
}

impl ConvLayerParams {
    pub fn new(weights: Tensor, biases: Tensor) -> Result<Self> {
        let ws = weights.shape();
        if ws.len() != 4 || ws[2] != ws[3] {
            return dim_err(format!("conv weights must be [N x d x k x k], got {ws:?}"));
        }
        if biases.shape() != [ws[0]] {
            return dim_err(format!(
                "conv biases must be [{}], got {:?}",
                ws[0],
                biases.shape()
            ));
        }
        Ok(Self { weights, biases })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn biases(&self) -> &Tensor {
        &self.biases
    }

    pub(crate) fn data_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (self.weights.data_mut(), self.biases.data_mut())
    }

    /// `N_l`, the number of kernels.
    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `d_l`, the number of input channels.
    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.weights.shape()[2]
    }

    /// `P = d_l * k_l * k_l`, the flattened length of one kernel.
    pub fn kernel_len(&self) -> usize {
        self.in_channels() * self.kernel_size() * self.kernel_size()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Tensor,
}

struct Geometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn of(x: &Tensor, p: &ConvLayerParams) -> Result<Self> {
        let xs = x.shape();
        if xs.len() != 4 {
            return dim_err(format!("conv input must be [B x C x H x W], got {xs:?}"));
        }
        if xs[1] != p.in_channels() {
            return dim_err(format!(
                "conv input has {} channels, kernels expect {}",
                xs[1],
                p.in_channels()
            ));
        }
        let k = p.kernel_size();
        if xs[2] < k || xs[3] < k {
            return dim_err(format!("input spatial extent {}x{} smaller than kernel {k}x{k}", xs[2], xs[3]));
        }
        Ok(Self {
            batch: xs[0],
            channels: xs[1],
            height: xs[2],
            width: xs[3],
            kernel: k,
            out_h: xs[2] - k + 1,
            out_w: xs[3] - k + 1,
        })
    }

    fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Upper bound on im2col buffer elements per chunk of samples.
const COLS_BUDGET: usize = 1 << 20;

/// Writes one sample `[C x H x W]` into columns `offset..offset + oh*ow` of
/// `cols`, a `[C*k*k x row_len]` buffer.
fn im2col(sample: &[f32], g: &Geometry, cols: &mut [f32], row_len: usize, offset: usize) {
    let (k, ow, w) = (g.kernel, g.out_w, g.width);
    let plane = g.height * w;
    for c in 0..g.channels {
        for u in 0..k {
            for v in 0..k {
                let row = (c * k + u) * k + v;
                let dst = &mut cols[row * row_len + offset..];
                for i in 0..g.out_h {
                    let src = c * plane + (i + u) * w + v;
                    dst[i * ow..(i + 1) * ow].copy_from_slice(&sample[src..src + ow]);
                }
            }
        }
    }
}

/// Scatter-adds columns `offset..offset + oh*ow` of `cols` into one sample gradient.
fn col2im(cols: &[f32], g: &Geometry, row_len: usize, offset: usize, sample: &mut [f32]) {
    let (k, ow, w) = (g.kernel, g.out_w, g.width);
    let plane = g.height * w;
    for c in 0..g.channels {
        for u in 0..k {
            for v in 0..k {
                let row = (c * k + u) * k + v;
                let src = &cols[row * row_len + offset..];
                for i in 0..g.out_h {
                    let dst = c * plane + (i + u) * w + v;
                    for (d, s) in sample[dst..dst + ow].iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn chunk_len(g: &Geometry) -> usize {
    (COLS_BUDGET / (g.rows() * g.positions())).clamp(1, g.batch)
}

/// `out[b,n,i,j] = bias[n] + sum_{c,u,v} w[n,c,u,v] * x[b,c,i+u,j+v]`.
pub fn conv_forward(x: &Tensor, p: &ConvLayerParams) -> Result<Tensor> {
    let g = Geometry::of(x, p)?;
    let n = p.out_channels();
    let (rows, positions) = (g.rows(), g.positions());
    let chunk = chunk_len(&g);
    let mut cols = vec![0.0f32; rows * positions * chunk];
    let mut prod = vec![0.0f32; n * positions * chunk];
    let mut out = vec![0.0f32; g.batch * n * positions];
    let biases = p.biases.data();
    for b0 in (0..g.batch).step_by(chunk) {
        let nb = chunk.min(g.batch - b0);
        let row_len = nb * positions;
        for s in 0..nb {
            let b = b0 + s;
            im2col(&x.data()[b * g.sample_len()..(b + 1) * g.sample_len()], &g, &mut cols, row_len, s * positions);
        }
        let prod = &mut prod[..n * row_len];
        gemm(n, rows, row_len, p.weights.data(), Layout::Normal, &cols[..rows * row_len], Layout::Normal, prod, false);
        for s in 0..nb {
            let dst = &mut out[(b0 + s) * n * positions..(b0 + s + 1) * n * positions];
            for (ch, plane) in dst.chunks_exact_mut(positions).enumerate() {
                let src = &prod[ch * row_len + s * positions..ch * row_len + (s + 1) * positions];
                let bias = biases[ch];
                plane.iter_mut().zip(src).for_each(|(d, &v)| *d = v + bias);
            }
        }
    }
    Tensor::new(&[g.batch, n, g.out_h, g.out_w], out)
}

/// Gradients of the loss with respect to input, weights and biases.
pub fn conv_backward(x: &Tensor, p: &ConvLayerParams, grad_out: &Tensor) -> Result<ConvGrads> {
    let (grad_x, grad_w, grad_b) = conv_backward_impl(x, p, grad_out, true)?;
    Ok(ConvGrads { grad_x: grad_x.expect("input gradient requested"), grad_w, grad_b })
}

pub(crate) fn conv_backward_impl(
    x: &Tensor,
    p: &ConvLayerParams,
    grad_out: &Tensor,
    need_grad_x: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let g = Geometry::of(x, p)?;
    let n = p.out_channels();
    let expected = [g.batch, n, g.out_h, g.out_w];
    if grad_out.shape() != expected {
        return dim_err(format!(
            "conv grad_out must be {expected:?}, got {:?}",
            grad_out.shape()
        ));
    }
    let (rows, positions) = (g.rows(), g.positions());
    let chunk = chunk_len(&g);
    let mut cols = vec![0.0f32; rows * positions * chunk];
    let mut grad_cols = if need_grad_x { vec![0.0f32; rows * positions * chunk] } else { Vec::new() };
    let mut go = vec![0.0f32; n * positions * chunk];
    let mut grad_w = vec![0.0f32; n * rows];
    let mut grad_b = vec![0.0f64; n];
    let mut grad_x = need_grad_x.then(|| vec![0.0f32; x.len()]);
    for b0 in (0..g.batch).step_by(chunk) {
        let nb = chunk.min(g.batch - b0);
        let row_len = nb * positions;
        for s in 0..nb {
            let b = b0 + s;
            im2col(&x.data()[b * g.sample_len()..(b + 1) * g.sample_len()], &g, &mut cols, row_len, s * positions);
            let src = &grad_out.data()[b * n * positions..(b + 1) * n * positions];
            for (ch, plane) in src.chunks_exact(positions).enumerate() {
                go[ch * row_len + s * positions..ch * row_len + (s + 1) * positions].copy_from_slice(plane);
                grad_b[ch] += plane.iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        let (cols, go) = (&cols[..rows * row_len], &go[..n * row_len]);
        gemm(n, row_len, rows, go, Layout::Normal, cols, Layout::Transposed, &mut grad_w, b0 > 0);
        if let Some(gx) = grad_x.as_mut() {
            let grad_cols = &mut grad_cols[..rows * row_len];
            gemm(rows, n, row_len, p.weights.data(), Layout::Transposed, go, Layout::Normal, grad_cols, false);
            for s in 0..nb {
                let b = b0 + s;
                col2im(grad_cols, &g, row_len, s * positions, &mut gx[b * g.sample_len()..(b + 1) * g.sample_len()]);
            }
        }
    }
    let grad_x = match grad_x {
        Some(data) => Some(Tensor::new(x.shape(), data)?),
        None => None,
    };
    Ok((
        grad_x,
        Tensor::new(p.weights.shape(), grad_w)?,
        Tensor::new(&[n], grad_b.into_iter().map(|v| v as f32).collect())?,
    ))
}
