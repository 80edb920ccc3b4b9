//! Feedforward tanh networks with a hand-written backward pass, batch
//! normalization and AdamW.

mod adam;
mod batchnorm;
mod checkpoint;
mod mlp;
mod spec;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNormState, Mode, BN_EPSILON, BN_MOMENTUM};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use mlp::{ForwardCache, Gradient, Mlp, MlpOptimizer};
pub use spec::{lipschitz_constants, xavier_init, LipschitzConstants, NetworkSpec, Parameters};
