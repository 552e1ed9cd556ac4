//! Experiment configuration: one TOML file naming the corpus, model shapes,
//! training budgets, decoding/deliberation settings, checkpoints and sweep
//! grids. Relative paths resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoding::DecodeConfig;
use crate::deliberation::{DeliberationConfig, Strategy};
use crate::diffusion::{MaskingMode, Padding, TrainConfig};
use crate::error::{Error, Result};
use crate::nncore::{AdamHyper, AttentionMode, LrSchedule, ModelConfig, Precision};
use crate::toytask::{CorpusConfig, Split};
use crate::vocab::{TokenSeq, BOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub precision: Precision,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { model_dim: 32, num_layers: 2, num_heads: 4, ffn_dim: 64, precision: Precision::Single }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub masking: MaskingMode,
    pub length_normalize: bool,
    pub padding: Padding,
    /// Training examples drawn from the head of the train split (0 = all).
    pub train_limit: usize,
    /// Probability that a sampled example uses its bare reference as the
    /// response block (no EOS, no padding), the layout deliberation sees.
    pub exact_length_prob: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 16,
            lr_start: 1e-4,
            lr_peak: 3e-3,
            lr_min: 3e-4,
            warmup_steps: 100,
            weight_decay: 0.05,
            grad_clip: Some(1.0),
            masking: MaskingMode::Bernoulli,
            length_normalize: false,
            padding: Padding::Eos,
            train_limit: 0,
            exact_length_prob: 0.0,
        }
    }
}

impl TrainSpec {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            schedule: LrSchedule {
                lr_start: self.lr_start,
                lr_peak: self.lr_peak,
                lr_min: self.lr_min,
                warmup_steps: self.warmup_steps.min(self.steps),
                total_steps: self.steps,
            },
            adam: AdamHyper { weight_decay: self.weight_decay, ..AdamHyper::default() },
            masking: self.masking,
            length_normalize: self.length_normalize,
            grad_clip: self.grad_clip,
            seed,
        }
    }
}

/// Checkpoint and data locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data: PathBuf,
    pub denoiser: PathBuf,
    pub ar: PathBuf,
    pub refiner: PathBuf,
    /// First-pass hypotheses consumed by `deliberate`.
    pub first_pass: PathBuf,
    /// Hypotheses scored by `eval`.
    pub hypotheses: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            denoiser: "denoiser.ckpt".into(),
            ar: "ar.ckpt".into(),
            refiner: "refiner.ckpt".into(),
            first_pass: "ar.jsonl".into(),
            hypotheses: "hypotheses.jsonl".into(),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.data,
            &mut self.denoiser,
            &mut self.ar,
            &mut self.refiner,
            &mut self.first_pass,
            &mut self.hypotheses,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSpec {
    pub split: Split,
    /// Utterances taken from the head of the split (0 = all).
    pub limit: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { split: Split::TestOther, limit: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub splits: Vec<Split>,
    /// Diffusion-decoding step counts.
    pub steps: Vec<usize>,
    /// Semi-autoregressive decoding sub-block counts, each run at every `semi_ar_steps`.
    pub decode_sub_blocks: Vec<usize>,
    pub semi_ar_steps: Vec<usize>,
    pub mask_ratios: Vec<f64>,
    pub mask_strategies: Vec<Strategy>,
    /// Semi-autoregressive deliberation span counts.
    pub deliberation_sub_blocks: Vec<usize>,
    /// Also run every deliberation setting with the audio-free refiner.
    pub text_refiner: bool,
    /// Rows are run one utterance at a time so wall-clock RTF is uncontended.
    pub timed: bool,
    pub limit: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl SweepSpec {
    /// Step counts, mask ratios and sub-block partitions of the reference grids.
    pub fn full() -> Self {
        Self {
            splits: vec![Split::TestClean, Split::TestOther],
            steps: vec![1, 4, 8, 16, 32, 64, 128],
            decode_sub_blocks: vec![1, 2, 4, 8, 16],
            semi_ar_steps: vec![32],
            mask_ratios: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            mask_strategies: vec![Strategy::Random, Strategy::LowConfidence],
            deliberation_sub_blocks: vec![2, 4, 6, 8, 10],
            text_refiner: true,
            timed: true,
            limit: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory when `--out` is not given.
    pub out: Option<PathBuf>,
    /// Response block length L.
    pub block_len: usize,
    /// Frames pooled per audio embedding.
    pub window: usize,
    /// Zero-pad pooled audio to a fixed slot count.
    pub pad_audio: bool,
    pub instruction: TokenSeq,
    pub corpus: CorpusConfig,
    pub model: ModelSpec,
    pub denoiser: TrainSpec,
    pub ar: TrainSpec,
    pub refiner: TrainSpec,
    pub decode: DecodeConfig,
    pub deliberation: DeliberationConfig,
    pub paths: Paths,
    pub eval: EvalSpec,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            block_len: 32,
            window: 4,
            pad_audio: true,
            instruction: vec![BOS],
            corpus: CorpusConfig::default(),
            model: ModelSpec::default(),
            denoiser: TrainSpec::default(),
            ar: TrainSpec::default(),
            refiner: TrainSpec::default(),
            decode: DecodeConfig::default(),
            deliberation: DeliberationConfig::default(),
            paths: Paths::default(),
            eval: EvalSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|_| Error::Missing { entry: "config".into(), path: path.to_path_buf() })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        if let Some(out) = &mut cfg.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate(self.block_len)?;
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.decode.block_len != self.block_len {
            return Err(Error::Config(format!(
                "decode.block_len {} differs from block_len {}",
                self.decode.block_len, self.block_len
            )));
        }
        self.decode.validate()?;
        self.deliberation.validate()?;
        for spec in [&self.denoiser, &self.ar, &self.refiner] {
            if spec.batch_size == 0 {
                return Err(Error::Config("batch_size must be at least 1".into()));
            }
        }
        self.model_config(AttentionMode::Bidirectional, true).validate()
    }

    /// Longest audio segment after pooling.
    pub fn max_audio_len(&self) -> usize {
        (self.corpus.max_len * self.corpus.frames_per_token).div_ceil(self.window)
    }

    /// Shape shared by every model of the experiment; `audio` off drops the projection.
    pub fn model_config(&self, attention: AttentionMode, audio: bool) -> ModelConfig {
        ModelConfig {
            vocab_size: self.corpus.vocab().size(),
            model_dim: self.model.model_dim,
            num_layers: self.model.num_layers,
            num_heads: self.model.num_heads,
            ffn_dim: self.model.ffn_dim,
            max_positions: self.instruction.len() + self.max_audio_len() + self.block_len,
            feature_dim: if audio { self.corpus.feature_dim } else { 0 },
            attention,
            precision: self.model.precision,
        }
    }
}
