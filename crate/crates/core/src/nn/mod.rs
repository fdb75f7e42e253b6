//! Minimal reverse-mode differentiation plus the layers and optimizers the
//! learned components use.

mod gradcheck;
mod graph;
mod layers;
mod optim;
mod weights;

pub use gradcheck::finite_difference_check;
pub use graph::{row_softmax, sigmoid, Gradients, Graph, Matrix, NodeId, MASK_PENALTY};
pub use layers::{
    glorot_uniform, init_linear, linear_forward, lstm_step, LinearNodes, LstmNodes, LstmParams,
    ParamSet, LSTM_GATES,
};
pub use optim::{adam_update, rmsprop_update, OptimizerConfig, OptimizerState};
pub use weights::{LayerRecord, WeightFile, FORMAT_VERSION};

#[cfg(test)]
mod tests;
