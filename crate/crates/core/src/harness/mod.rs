//! Evaluation and experiment plumbing: token error rate, real-time factor,
//! the experiment config file, training/decoding pipelines and sweeps.
//! "WER" here is token error rate; the toy task has no word segmentation.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod sweep;
mod wer;

pub use config::{EvalSpec, ExperimentConfig, ModelSpec, Paths, SweepSpec, TrainSpec};
pub use experiment::{
    audio_features, decode_label, decode_split, deliberate_split, load_model, read_hypotheses, score, train_examples,
    train_model, transcribe_split, write_bench_csv, write_hypotheses, BenchRecord, HypRecord, ModelKind, AR_PROVENANCE,
};
pub use sweep::{run_sweep, Models, PlotPoint, SweepOutput};
pub use wer::{rtf, wer, WerBreakdown};
