//! Dense networks, Adam and experience replay, written against `ndarray`.
//!
//! Everything is `f64`. Networks are plain affine/ReLU stacks with an identity
//! output layer; gradients are computed by hand in [`Mlp::backward`].

mod adam;
mod mlp;
mod replay;

pub use adam::{adam_update, Adam, AdamHyper};
pub use mlp::{soft_update, Deltas, Dense, ForwardCache, Gradients, Mlp, HIDDEN_UNITS};
pub use replay::{ReplayBuffer, Transition, TransitionStore};
