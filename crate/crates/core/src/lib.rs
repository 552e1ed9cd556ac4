//! Masked-diffusion sequence decoding for speech-like recognition.
//!
//! The crate is organised around the life cycle of a toy recognition system:
//!
//! - [`nncore`]: a small transformer stack with hand-written reverse mode,
//!   AdamW, a warmup/cosine schedule and a binary checkpoint format.
//! - [`diffusion`]: the forward masking process, the `1/t`-weighted masked
//!   cross-entropy objectives and the denoiser training loop.
//! - [`decoding`]: parallel confidence-ranked decoding and its
//!   semi-autoregressive sub-block variant.
//! - [`deliberation`]: second-pass refinement of first-pass transcripts.
//! - [`toytask`]: the synthetic corpus, the pooling frontend and the causal
//!   first-pass baseline.
//! - [`harness`]: WER/RTF metrics, experiment configuration, sweeps and the
//!   CLI plumbing.

pub mod decoding;
pub mod deliberation;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod nncore;
pub mod seed;
pub mod toytask;
pub mod vocab;

pub use error::{Error, Result};
pub use vocab::{TokenId, TokenSeq, Vocabulary};
