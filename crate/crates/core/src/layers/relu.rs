use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// `g(x) = max(0, x)`.
pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return dim_err(format!("relu grad_out {:?} vs input {:?}", grad_out.shape(), x.shape()));
    }
    x.zip_map(grad_out, |v, g| if v > 0.0 { g } else { 0.0 })
}
