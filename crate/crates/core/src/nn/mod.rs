//! A small dense feed-forward classifier trained from scratch: ReLU hidden
//! layers with inverted dropout, a softmax head, element-wise binary
//! cross-entropy and Adam. All arithmetic is `f64`.

mod adam;
pub mod checkpoint;
mod forward;
mod layer;
mod matrix;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use forward::{
    compute_gradients, compute_loss, forward, ForwardCache, ForwardMode, Gradients, LayerCache, LayerGradient,
    PROB_EPSILON,
};
pub use layer::{detector_architecture, init_params, validate_specs, Activation, DenseParams, LayerSpec, ModelParams};
pub use matrix::Matrix;
pub use train::{argmax_rows, one_hot_rows, predict_classes, train_local, LocalConfig, LocalOutcome};
