//! Second-pass refinement of first-pass transcripts.
//!
//! The response block is initialised with the first-pass transcript (same
//! length, no EOS). A subset of positions is replaced by MASK, chosen at
//! random, by lowest denoiser confidence, or span by span left to right, and
//! the denoiser fills the masked positions in one pass conditioned on the
//! instruction, the audio (optionally) and every unmasked token.

use std::ops::Range;

use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::decoding::{best_token, is_emittable, select_commit, MaskPredictor, TieBreak};
use crate::error::{Error, Result};
use crate::nncore::{PromptLayout, Real};
use crate::seed::Rng;
use crate::vocab::{TokenId, TokenSeq, MASK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    LowConfidence,
    SemiAr,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::LowConfidence => "low_confidence",
            Strategy::SemiAr => "semi_ar",
        }
    }
}

/// What the denoiser sees when scoring a transcript for low-confidence masking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Response block fully masked: confidence comes from prompt and audio only.
    #[default]
    Blind,
    /// Transcript tokens visible in the block.
    Visible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeliberationConfig {
    pub strategy: Strategy,
    /// Fraction of positions to remask (random and low-confidence).
    pub mask_ratio: f64,
    /// Span count (semi-autoregressive).
    pub sub_blocks: usize,
    pub use_audio: bool,
    pub scoring: Scoring,
    /// Reconstruction passes for random/low-confidence; 1 is single-pass.
    pub iterations: usize,
    /// Longest transcript the denoiser accepts.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DeliberationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Random,
            mask_ratio: 0.5,
            sub_blocks: 2,
            use_audio: true,
            scoring: Scoring::Blind,
            iterations: 1,
            max_len: 32,
            seed: 0,
        }
    }
}

impl DeliberationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!("mask ratio {} outside [0, 1]", self.mask_ratio)));
        }
        if self.sub_blocks == 0 || self.iterations == 0 {
            return Err(Error::Config("sub_blocks and iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Short provenance tag, e.g. `random:p=0.5` or `semi_ar:m=4`.
    pub fn label(&self) -> String {
        let body = match self.strategy {
            Strategy::SemiAr => format!("semi_ar:m={}", self.sub_blocks),
            s => format!("{}:p={}", s.name(), self.mask_ratio),
        };
        if self.use_audio {
            body
        } else {
            format!("{body}:text")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstPassTranscript {
    pub tokens: TokenSeq,
    pub source: String,
    pub duration_s: f64,
}

impl FirstPassTranscript {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() || self.tokens.contains(&MASK) {
            return Err(Error::Contract(format!(
                "first-pass transcript from {} must be non-empty and MASK-free",
                self.source
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub tokens: TokenSeq,
    pub denoiser_calls: usize,
    /// Positions that were remasked (every position for semi-autoregressive).
    pub remasked: Vec<usize>,
}

/// `round(p · len)`, halves rounded up.
pub fn mask_count(len: usize, p: f64) -> usize {
    ((p * len as f64 + 0.5).floor() as usize).min(len)
}

fn check_len(transcript: &[TokenId], limit: usize) -> Result<()> {
    if transcript.len() > limit {
        return Err(Error::Length { what: "transcript", got: transcript.len(), limit });
    }
    Ok(())
}

/// Probability the denoiser assigns to each transcript token from one
/// forward pass over a fully masked block of the transcript's length.
pub fn score_transcript<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    transcript: &[TokenId],
    limit: usize,
) -> Result<Vec<f64>> {
    score_with(predictor, instruction, audio, transcript, limit, Scoring::Blind)
}

pub fn score_with<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    transcript: &[TokenId],
    limit: usize,
    scoring: Scoring,
) -> Result<Vec<f64>> {
    check_len(transcript, limit)?;
    let block = match scoring {
        Scoring::Blind => vec![MASK; transcript.len()],
        Scoring::Visible => transcript.to_vec(),
    };
    let logits = predictor.predict(&PromptLayout::new(instruction, audio.map(|a| a.reborrow()), &block))?;
    Ok(transcript
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let row = logits.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.f64()));
            let sum: f64 = row.iter().map(|&x| (x.f64() - max).exp()).sum();
            (row[w as usize].f64() - max).exp() / sum
        })
        .collect())
}

/// `round(p · len)` distinct positions drawn uniformly, ascending.
pub fn plan_mask_random(len: usize, p: f64, rng: &mut Rng) -> Vec<usize> {
    let mut v = sample(rng, len, mask_count(len, p)).into_vec();
    v.sort_unstable();
    v
}

/// The `round(p · len)` lowest-confidence positions (lowest position first on ties), ascending.
pub fn plan_mask_lowconf(conf: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));
    order.truncate(mask_count(conf.len(), p));
    order.sort_unstable();
    order
}

/// Masks `positions`, runs one forward pass and fills them with the greedy
/// prediction. Unmasked tokens are copied through unchanged.
pub fn refine_once<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    transcript: &[TokenId],
    positions: &[usize],
) -> Result<TokenSeq> {
    refine_iterative(predictor, instruction, audio, transcript, positions, 1).map(|(t, _)| t)
}

/// Reconstructs `positions` over `passes` forward passes, committing the most
/// confident `ceil(|positions| / passes)` per pass. One pass is [`refine_once`].
pub fn refine_iterative<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    transcript: &[TokenId],
    positions: &[usize],
    passes: usize,
) -> Result<(TokenSeq, usize)> {
    if let Some(&p) = positions.iter().find(|&&p| p >= transcript.len()) {
        return Err(Error::Contract(format!("position {p} outside transcript of length {}", transcript.len())));
    }
    let mut block = transcript.to_vec();
    let mut masked: Vec<usize> = positions.to_vec();
    masked.sort_unstable();
    masked.dedup();
    for &p in &masked {
        block[p] = MASK;
    }
    let k = masked.len().div_ceil(passes.max(1)).max(1);
    let mut calls = 0;
    loop {
        let logits = predictor.predict(&PromptLayout::new(instruction, audio.map(|a| a.reborrow()), &block))?;
        calls += 1;
        if masked.is_empty() {
            break;
        }
        let mut conf = vec![f64::NEG_INFINITY; block.len()];
        let mut tok = vec![MASK; block.len()];
        for &p in &masked {
            let (t, c) = best_token(logits.row(p), is_emittable);
            tok[p] = t;
            conf[p] = c;
        }
        let chosen = select_commit(&masked, &conf, k, TieBreak::LowestPositionFirst);
        for &p in &chosen {
            block[p] = tok[p];
        }
        masked.retain(|p| chosen.binary_search(p).is_err());
        if masked.is_empty() {
            break;
        }
    }
    Ok((block, calls))
}

/// `n` contiguous spans covering `0..len`, sizes differing by at most one,
/// longer spans first.
pub fn span_bounds(len: usize, n: usize) -> Vec<Range<usize>> {
    let (base, extra) = (len / n, len % n);
    let mut start = 0;
    (0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Left to right, each span is fully masked and reconstructed in one pass,
/// seeing already-refined spans on its left and original tokens on its right.
pub fn refine_semi_ar<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    transcript: &[TokenId],
    sub_blocks: usize,
) -> Result<TokenSeq> {
    if sub_blocks == 0 || sub_blocks > transcript.len() {
        return Err(Error::Contract(format!("sub_blocks {sub_blocks} must lie in 1..={}", transcript.len())));
    }
    let mut current = transcript.to_vec();
    for span in span_bounds(transcript.len(), sub_blocks) {
        let positions: Vec<usize> = span.collect();
        current = refine_once(predictor, instruction, audio.map(|a| a.reborrow()), &current, &positions)?;
    }
    Ok(current)
}

/// Applies the configured strategy to one transcript.
pub fn deliberate<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    transcript: &FirstPassTranscript,
    cfg: &DeliberationConfig,
    rng: &mut Rng,
) -> Result<Refined> {
    cfg.validate()?;
    transcript.validate()?;
    let tokens = &transcript.tokens;
    check_len(tokens, cfg.max_len)?;
    let audio = if cfg.use_audio { audio } else { None };
    match cfg.strategy {
        Strategy::Random | Strategy::LowConfidence => {
            let (positions, scoring_calls) = if cfg.strategy == Strategy::Random {
                (plan_mask_random(tokens.len(), cfg.mask_ratio, rng), 0)
            } else {
                let conf =
                    score_with(predictor, instruction, audio.map(|a| a.reborrow()), tokens, cfg.max_len, cfg.scoring)?;
                (plan_mask_lowconf(&conf, cfg.mask_ratio), 1)
            };
            let (refined, calls) = refine_iterative(predictor, instruction, audio, tokens, &positions, cfg.iterations)?;
            Ok(Refined { tokens: refined, denoiser_calls: calls + scoring_calls, remasked: positions })
        }
        Strategy::SemiAr => {
            let m = cfg.sub_blocks.min(tokens.len());
            Ok(Refined {
                tokens: refine_semi_ar(predictor, instruction, audio, tokens, m)?,
                denoiser_calls: m,
                remasked: (0..tokens.len()).collect(),
            })
        }
    }
}
