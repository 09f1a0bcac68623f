//! Dense MLP velocity fields, reverse-mode gradients, and optimizers.

mod checkpoint;
mod mlp;
mod optim;

pub(crate) use checkpoint::hex_digest;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{
    one_step_regression, time_embedding, velocity_regression, Activation, GradTape, LayerView,
    MlpSpec, Row, Tape, VelocityField,
};
pub use optim::{AdamConfig, AdamState, EmaState};

/// `(params, macs)` for a spec.
pub fn count_params_macs(spec: &MlpSpec) -> (usize, usize) {
    spec.count_params_macs()
}
