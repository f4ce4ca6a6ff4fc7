//! Learned barrier certificate: a small MLP over robot position and
//! obstacle parameters, trained so that its zero superlevel set separates
//! safe from unsafe states and its gradient field admits safe velocities.
//!
//! The submodules split the concern cleanly:
//!
//! * [`mlp`] — the network itself with exact reverse-mode gradients and a
//!   forward-over-reverse pass for terms involving the *spatial* gradient;
//! * [`adam`] — the first-order optimiser;
//! * [`loss`] — classification hinges, the gradient-alignment hinge, the
//!   regression warm-start term, and the filter-deviation regulariser;
//! * [`train`] — two-stage training (analytic teacher, then closed-loop
//!   harvested states) plus held-out evaluation helpers;
//! * [`io`] — versioned, shape-checked, byte-deterministic model files.

pub mod adam;
pub mod io;
pub mod loss;
pub mod mlp;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use io::{load_model, model_to_json_string, save_model, sha256_hex, ModelError};
pub use loss::{batch_loss, control_reg_loss, param_gradient, CbfLossConfig, CbfSample, SampleKind};
pub use mlp::{
    directional_derivative, forward, input_gradient, MlpParams, HIDDEN_DIM, NN_INPUT_DIM,
    PARAM_COUNT,
};
pub use train::{
    regression_rmse, sign_agreement, stage1_pretrain, stage2_finetune, HarvestSample,
    SampleSpace, TrainConfig, TrainError, TrainRun,
};
