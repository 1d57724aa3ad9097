//! Differentiable substrate: the noise / velocity predictor, set encoders,
//! the squared-error loss with exact gradients, optimizers and checkpoints.

pub mod bundle;
pub mod checkpoint;
pub mod encoder;
pub mod eps_net;
pub mod linear;
pub mod loss;
pub mod optim;
pub mod params;

pub use bundle::{
    BatchMode, ConditioningMode, GenerativeKind, Gradients, ModelArch, ModelBundle, ModelParams, Normalization,
    TrainingMeta, VarianceKind,
};
pub use checkpoint::{load_checkpoint, load_checkpoint_for_dim, save_checkpoint};
pub use encoder::{Encoder, EncoderConfig};
pub use eps_net::{EpsNet, EpsNetConfig};
pub use linear::Linear;
pub use loss::{loss, loss_and_grad, Condition, TrainBatch};
pub use optim::{Algorithm, OptimizerState};
pub use params::{zeros_like, ParamTree};
