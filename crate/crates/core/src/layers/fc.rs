use crate::error::{dim_err, Result};
use crate::tensor::{gemm, Layout, Tensor};

/// Fully connected layer: weights `[out x in]`, biases `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FcLayerParams {
    weights: Tensor,
    biases: Tensor,
}

#[derive(Clone, Debug)]
pub struct FcGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Tensor,
}

impl FcLayerParams {
    pub fn new(weights: Tensor, biases: Tensor) -> Result<Self> {
        if weights.rank() != 2 {
            return dim_err(format!("fc weights must be [out x in], got {:?}", weights.shape()));
        }
        if biases.shape() != [weights.shape()[0]] {
            return dim_err(format!(
                "fc biases must be [{}], got {:?}",
                weights.shape()[0],
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

    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

fn check_input(x: &Tensor, p: &FcLayerParams) -> Result<usize> {
    if x.rank() != 2 || x.shape()[1] != p.in_features() {
        return dim_err(format!(
            "fc input must be [B x {}], got {:?}",
            p.in_features(),
            x.shape()
        ));
    }
    Ok(x.shape()[0])
}

pub fn fc_forward(x: &Tensor, p: &FcLayerParams) -> Result<Tensor> {
    let batch = check_input(x, p)?;
    let (out, inp) = (p.out_features(), p.in_features());
    let mut y = vec![0.0f32; batch * out];
    gemm(batch, inp, out, x.data(), Layout::Normal, p.weights.data(), Layout::Transposed, &mut y, false);
    for row in y.chunks_exact_mut(out) {
        row.iter_mut().zip(p.biases.data()).for_each(|(v, b)| *v += b);
    }
    Tensor::new(&[batch, out], y)
}

pub fn fc_backward(x: &Tensor, p: &FcLayerParams, grad_out: &Tensor) -> Result<FcGrads> {
    let batch = check_input(x, p)?;
    let (out, inp) = (p.out_features(), p.in_features());
    if grad_out.shape() != [batch, out] {
        return dim_err(format!("fc grad_out must be [{batch} x {out}], got {:?}", grad_out.shape()));
    }
    let g = grad_out.data();
    let mut grad_w = vec![0.0f32; out * inp];
    gemm(out, batch, inp, g, Layout::Transposed, x.data(), Layout::Normal, &mut grad_w, false);
    let mut grad_x = vec![0.0f32; batch * inp];
    gemm(batch, out, inp, g, Layout::Normal, p.weights.data(), Layout::Normal, &mut grad_x, false);
    let mut grad_b = vec![0.0f64; out];
    for row in g.chunks_exact(out) {
        grad_b.iter_mut().zip(row).for_each(|(acc, &v)| *acc += v as f64);
    }
    Ok(FcGrads {
        grad_x: Tensor::new(&[batch, inp], grad_x)?,
        grad_w: Tensor::new(&[out, inp], grad_w)?,
        grad_b: Tensor::new(&[out], grad_b.into_iter().map(|v| v as f32).collect())?,
    })
}
