//! Layer forward/backward passes, the network container and the SGD update.

mod conv;
mod fc;
mod loss;
mod network;
mod pool;
mod relu;
mod sgd;

pub use conv::{conv_backward, conv_forward, ConvGrads, ConvLayerParams};
pub use fc::{fc_backward, fc_forward, FcGrads, FcLayerParams};
pub use loss::{softmax_xent_backward, softmax_xent_forward};
pub use network::{Gradients, InitConfig, Layer, LayerSpec, Network, ParamGrads};
pub use pool::{maxpool_backward, maxpool_forward, MaxPool};
pub use relu::{relu_backward, relu_forward};
pub use sgd::{Sgd, SgdConfig};
