//! Hand-built recurrent/attention network with analytic gradients and the
//! AdamW training step.

pub mod attention;
pub mod gru;
mod init;
pub mod io;
pub mod model;
pub mod optim;
pub mod tensor;

pub use attention::EncoderBlock;
pub use gru::GruLayer;
pub use init::{dropout_mask, xavier_uniform};
pub use model::{ForwardCache, Mode, ModelConfig, ModelParams, Pooling, Prediction};
pub use optim::{adamw_step, clip_gradients, global_norm, AdamWConfig, AdamWState, PlateauSchedule};
pub use tensor::Tensor2;
