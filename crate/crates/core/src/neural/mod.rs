//! Policy network, reverse-mode tape and ADAM optimizer.

pub mod adam;
pub mod network;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{
    value_and_grad, Activation, Architecture, Checkpoint, Dense, ParamVars, PolicyParams,
};
pub use tape::{Gradients, Tape, Var};
