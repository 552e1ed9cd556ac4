//! Minimal trainable transformer stack.
//!
//! One architecture serves both roles: with bidirectional attention it is the
//! mask predictor used by diffusion decoding and deliberation, with causal
//! attention it is the first-pass autoregressive baseline. Gradients are
//! computed by an explicit reverse pass over a [`Tape`] recorded during
//! [`forward`].

mod checkpoint;
mod config;
mod layout;
mod model;
mod optim;
mod params;
mod real;
mod schedule;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, MAGIC, VERSION};
pub use config::{AttentionMode, ModelConfig, Precision};
pub use layout::PromptLayout;
pub use model::{backprop, forward, logits, Tape};
pub use optim::{adamw_update, AdamHyper, AdamState};
pub use params::{init_params, ARParams, DenoiserParams, Grads, Params};
pub use real::Real;
pub use schedule::LrSchedule;
