//! Reverse-process inference over a masked response block.
//!
//! Decoding starts from `L` MASK tokens placed after the instruction and the
//! acoustic features. Every iteration runs the mask predictor once, takes the
//! greedy token and its softmax probability at each masked position, and
//! commits the `K` most confident ones. Once an EOS is committed, every later
//! position is forced to EOS. The semi-autoregressive variant splits the block
//! into `M` equal sub-blocks and runs the same procedure on one sub-block at a
//! time, left to right.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::diffusion::MaskedBlock;
use crate::error::{Error, Result};
use crate::nncore::{Params, PromptLayout, Real};
use crate::vocab::{format_tokens, truncate_at_eos, TokenId, TokenSeq, EOS, MASK, NUM_RESERVED};

/// Anything that maps a layout to response logits (`response_len × vocab`).
pub trait MaskPredictor<F> {
    fn predict(&self, layout: &PromptLayout<'_, F>) -> Result<Array2<F>>;
}

impl<F: Real> MaskPredictor<F> for Params<F> {
    fn predict(&self, layout: &PromptLayout<'_, F>) -> Result<Array2<F>> {
        crate::nncore::logits(self, layout)
    }
}

impl<F, P: MaskPredictor<F> + ?Sized> MaskPredictor<F> for &P {
    fn predict(&self, layout: &PromptLayout<'_, F>) -> Result<Array2<F>> {
        (**self).predict(layout)
    }
}

/// Tokens a decoder may produce: content tokens and EOS.
pub fn is_emittable(token: TokenId) -> bool {
    token == EOS || token >= NUM_RESERVED
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestPositionFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Response block length `L`.
    pub block_len: usize,
    /// Total denoising steps `N`.
    pub steps: usize,
    /// Sub-block count `M`; 1 is fully parallel decoding.
    pub sub_blocks: usize,
    pub tie_break: TieBreak,
    pub early_stop: bool,
    /// Record a per-iteration trace in the hypothesis.
    pub trace: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            block_len: 32,
            steps: 8,
            sub_blocks: 1,
            tie_break: TieBreak::LowestPositionFirst,
            early_stop: true,
            trace: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_len == 0 || self.steps == 0 {
            return Err(Error::Config("block_len and steps must be at least 1".into()));
        }
        if self.sub_blocks == 0 || self.sub_blocks > self.block_len {
            return Err(Error::Config(format!("sub_blocks {} must lie in 1..={}", self.sub_blocks, self.block_len)));
        }
        if self.block_len % self.sub_blocks != 0 {
            return Err(Error::Config(format!(
                "sub_blocks {} does not divide block_len {}",
                self.sub_blocks, self.block_len
            )));
        }
        Ok(())
    }

    pub fn sub_block_len(&self) -> usize {
        self.block_len / self.sub_blocks
    }

    /// Iterations allotted to each sub-block: `clamp(N / M, 1, L / M)`.
    pub fn steps_per_sub_block(&self) -> usize {
        (self.steps / self.sub_blocks).clamp(1, self.sub_block_len())
    }

    /// Positions committed per iteration: `ceil((L / M) / steps_per_sub_block)`.
    pub fn commits_per_step(&self) -> usize {
        self.sub_block_len().div_ceil(self.steps_per_sub_block())
    }

    /// Upper bound on predictor calls: `M · steps_per_sub_block`, which is at
    /// most `N` whenever `M ≤ N`.
    pub fn max_calls(&self) -> usize {
        self.sub_blocks * self.steps_per_sub_block()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub sub_block: usize,
    /// Masked positions of the active sub-block before this iteration.
    pub masked_before: usize,
    /// Positions chosen by confidence ranking, ascending.
    pub selected: Vec<usize>,
    /// Positions forced to EOS by early stopping.
    pub forced: Vec<usize>,
    pub confidences: Vec<f64>,
    /// Whole block after the iteration.
    pub block: TokenSeq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// EOS-truncated output.
    pub tokens: TokenSeq,
    /// Probability of each output token at the iteration it was committed.
    pub confidences: Vec<f64>,
    pub denoiser_calls: usize,
    pub elapsed_s: f64,
    /// Generation stopped at a length cap before emitting EOS.
    pub truncated: bool,
    /// Raw response block (empty for autoregressive decoding).
    pub block: TokenSeq,
    pub trace: Vec<TraceStep>,
}

impl Hypothesis {
    /// Equality on everything except wall-clock time.
    pub fn same_output(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.confidences == other.confidences
            && self.denoiser_calls == other.denoiser_calls
            && self.truncated == other.truncated
            && self.block == other.block
            && self.trace == other.trace
    }

    /// Per-iteration CSV: `iteration,sub_block,positions,tokens,confidences,forced`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,sub_block,positions,tokens,confidences,forced\n");
        for s in &self.trace {
            let tokens: Vec<TokenId> = s.selected.iter().map(|&p| s.block[p]).collect();
            let confs: Vec<String> = s.confidences.iter().map(|c| format!("{c:.6}")).collect();
            let pos: Vec<String> = s.selected.iter().map(usize::to_string).collect();
            let forced: Vec<String> = s.forced.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.iteration,
                s.sub_block,
                pos.join(" "),
                format_tokens(&tokens),
                confs.join(" "),
                forced.join(" ")
            );
        }
        out
    }
}

fn softmax_f64<F: Real>(row: ArrayView1<'_, F>) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.f64()));
    let exps: Vec<f64> = row.iter().map(|&x| (x.f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Highest-probability token among those accepted by `allow` (lowest id on
/// ties) and its probability under the full softmax.
pub fn best_token<F: Real>(row: ArrayView1<'_, F>, allow: impl Fn(TokenId) -> bool) -> (TokenId, f64) {
    let probs = softmax_f64(row);
    let mut best = (MASK, f64::NEG_INFINITY);
    for (j, &p) in probs.iter().enumerate() {
        if allow(j as TokenId) && p > best.1 {
            best = (j as TokenId, p);
        }
    }
    best
}

/// Greedy token and max softmax probability for each row.
pub fn confidences<F: Real>(logits: ArrayView2<'_, F>) -> Vec<(TokenId, f64)> {
    logits.outer_iter().map(|row| best_token(row, |_| true)).collect()
}

/// The `min(k, |masked|)` masked positions with highest confidence, ascending.
/// `conf` is indexed by absolute position.
pub fn select_commit(masked: &[usize], conf: &[f64], k: usize, tie_break: TieBreak) -> Vec<usize> {
    let mut ranked = masked.to_vec();
    match tie_break {
        TieBreak::LowestPositionFirst => {
            ranked.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
        }
    }
    ranked.truncate(k.min(masked.len()));
    ranked.sort_unstable();
    ranked
}

/// Forces every position after the first committed EOS to EOS and drops them
/// from the masked set. Returns the positions that changed.
pub fn apply_early_stop(block: &mut MaskedBlock) -> Vec<usize> {
    let first_eos = (0..block.tokens.len()).find(|&i| block.tokens[i] == EOS);
    let Some(e) = first_eos else {
        return Vec::new();
    };
    let mut forced = Vec::new();
    for i in e + 1..block.tokens.len() {
        if block.tokens[i] != EOS {
            block.tokens[i] = EOS;
            forced.push(i);
        }
    }
    block.masked.retain(|&p| p <= e);
    forced
}

struct Decoder<'a, F, P> {
    predictor: &'a P,
    instruction: &'a [TokenId],
    audio: Option<ArrayView2<'a, F>>,
    cfg: &'a DecodeConfig,
    block: MaskedBlock,
    conf: Vec<f64>,
    calls: usize,
    trace: Vec<TraceStep>,
}

impl<'a, F: Real, P: MaskPredictor<F>> Decoder<'a, F, P> {
    fn new(
        predictor: &'a P,
        instruction: &'a [TokenId],
        audio: Option<ArrayView2<'a, F>>,
        cfg: &'a DecodeConfig,
    ) -> Result<Self> {
        let len = cfg.block_len;
        let block = MaskedBlock::from_positions(&vec![MASK; len], (0..len).collect(), 1.0)?;
        Ok(Self { predictor, instruction, audio, cfg, block, conf: vec![0.0; len], calls: 0, trace: Vec::new() })
    }

    /// Runs up to `steps` iterations over positions `range`, committing `k` per iteration.
    fn denoise_range(&mut self, range: std::ops::Range<usize>, steps: usize, k: usize, sub_block: usize) -> Result<()> {
        for _ in 0..steps {
            let masked: Vec<usize> = self.block.masked.iter().copied().filter(|p| range.contains(p)).collect();
            if masked.is_empty() {
                break;
            }
            let layout = PromptLayout::new(self.instruction, self.audio.map(|a| a.reborrow()), &self.block.tokens);
            let logits = self.predictor.predict(&layout)?;
            self.calls += 1;
            if logits.nrows() != self.block.len() {
                return Err(Error::Contract(format!(
                    "predictor returned {} rows for a block of {}",
                    logits.nrows(),
                    self.block.len()
                )));
            }

            // EOS is admissible only where it cannot end up before a committed content token.
            let last_content =
                (0..self.block.len()).rev().find(|&i| !is_masked(&self.block, i) && self.block.tokens[i] != EOS);
            let mut candidate = vec![(MASK, 0.0); self.block.len()];
            let mut conf = vec![f64::NEG_INFINITY; self.block.len()];
            for &p in &masked {
                let eos_ok = !self.cfg.early_stop || last_content.is_none_or(|q| q < p);
                let best = best_token(logits.row(p), |t| is_emittable(t) && (t != EOS || eos_ok));
                candidate[p] = best;
                conf[p] = best.1;
            }
            let selected = select_commit(&masked, &conf, k, self.cfg.tie_break);
            for &p in &selected {
                self.block.tokens[p] = candidate[p].0;
                self.conf[p] = candidate[p].1;
            }
            self.block.masked.retain(|p| selected.binary_search(p).is_err());
            let forced = if self.cfg.early_stop { apply_early_stop(&mut self.block) } else { Vec::new() };
            if self.cfg.trace {
                self.trace.push(TraceStep {
                    iteration: self.trace.len(),
                    sub_block,
                    masked_before: masked.len(),
                    confidences: selected.iter().map(|&p| self.conf[p]).collect(),
                    selected,
                    forced,
                    block: self.block.tokens.clone(),
                });
            }
        }
        Ok(())
    }

    fn finish(self, started: Instant) -> Result<Hypothesis> {
        if !self.block.masked.is_empty() {
            return Err(Error::Schedule(format!(
                "{} positions still masked after {} calls",
                self.block.masked.len(),
                self.calls
            )));
        }
        let tokens = truncate_at_eos(&self.block.tokens).to_vec();
        Ok(Hypothesis {
            confidences: self.conf[..tokens.len()].to_vec(),
            tokens,
            denoiser_calls: self.calls,
            elapsed_s: started.elapsed().as_secs_f64(),
            truncated: false,
            block: self.block.tokens,
            trace: self.trace,
        })
    }
}

fn is_masked(block: &MaskedBlock, i: usize) -> bool {
    block.masked.binary_search(&i).is_ok()
}

/// Fully parallel decoding over one block: `clamp(N, 1, L)` iterations at
/// most, `K = ceil(L / iterations)` commits per iteration.
pub fn diffusion_decode<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    cfg: &DecodeConfig,
) -> Result<Hypothesis> {
    cfg.validate()?;
    if cfg.sub_blocks != 1 {
        return Err(Error::Config(format!("diffusion decoding uses one block, got sub_blocks = {}", cfg.sub_blocks)));
    }
    let started = Instant::now();
    let mut dec = Decoder::new(predictor, instruction, audio.map(|a| a.reborrow()), cfg)?;
    dec.denoise_range(0..cfg.block_len, cfg.steps_per_sub_block(), cfg.commits_per_step(), 0)?;
    dec.finish(started)
}

/// Semi-autoregressive decoding: `M` sub-blocks of `L / M` positions, each
/// denoised in turn with `clamp(N / M, 1, L / M)` iterations while earlier
/// sub-blocks stay fixed as context.
pub fn semi_ar_decode<F: Real, P: MaskPredictor<F>>(
    predictor: &P,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    cfg: &DecodeConfig,
) -> Result<Hypothesis> {
    cfg.validate()?;
    let started = Instant::now();
    let mut dec = Decoder::new(predictor, instruction, audio.map(|a| a.reborrow()), cfg)?;
    let (len, steps, k) = (cfg.sub_block_len(), cfg.steps_per_sub_block(), cfg.commits_per_step());
    for b in 0..cfg.sub_blocks {
        dec.denoise_range(b * len..(b + 1) * len, steps, k, b)?;
    }
    dec.finish(started)
}
