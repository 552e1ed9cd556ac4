//! Synthetic recognition task: corpus, acoustic frontend and the causal
//! first-pass baseline whose transcripts deliberation refines.

pub mod ar;
pub mod corpus;
pub mod frontend;

pub use ar::{ar_example_loss, ar_greedy_transcribe, ArTrainer};
pub use corpus::{gen_corpus, Corpus, CorpusConfig, ManifestRecord, Source, Split, Utterance};
pub use frontend::{frontend_pool, mean_pool};
