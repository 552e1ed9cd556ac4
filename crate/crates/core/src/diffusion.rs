//! Forward masking process and masked cross-entropy training.
//!
//! A clean response `r0` is corrupted by replacing each position with MASK
//! independently with probability `t ~ U(0,1]`. The mask predictor is trained
//! to recover the masked positions with the `1/t`-weighted cross-entropy
//!
//! ```text
//! L = -(1/t) · Σ_{i ∈ S_t} log p(r0[i] | prompt, r_t, audio)
//! ```
//!
//! The three objectives (unconditional, prompt-conditioned, prompt and audio
//! conditioned) share this loss and differ only in which layout segments are
//! present, see [`ObjectiveMode`].

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{
    adamw_update, backprop, forward, AdamHyper, AdamState, Grads, LrSchedule, Params, PromptLayout, Real,
};
use crate::seed::{self, Rng};
use crate::vocab::{TokenId, TokenSeq, EOS, MASK, PAD};

/// A corrupted response block: `tokens[i] == MASK` exactly for `i` in `masked`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBlock {
    pub tokens: TokenSeq,
    /// Masked positions, ascending.
    pub masked: Vec<usize>,
    pub t: f64,
}

impl MaskedBlock {
    /// Masks `positions` of `r0` at time `t`.
    pub fn from_positions(r0: &[TokenId], mut positions: Vec<usize>, t: f64) -> Result<Self> {
        check_t(t)?;
        positions.sort_unstable();
        positions.dedup();
        if positions.last().is_some_and(|&p| p >= r0.len()) {
            return Err(Error::Contract("masked position outside the block".into()));
        }
        let mut tokens = r0.to_vec();
        for &p in &positions {
            tokens[p] = MASK;
        }
        Ok(Self { tokens, masked: positions, t })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("masking time t = {t} is outside (0, 1]")))
    }
}

/// Draws `t` uniformly from `(0, 1]`.
pub fn sample_t(rng: &mut Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingMode {
    /// Each position masked independently with probability `t`.
    #[default]
    Bernoulli,
    /// Exactly `ceil(t · n)` positions, chosen uniformly. Variance-reduction option.
    ExactCount,
}

/// Independent Bernoulli(`t`) masking. PAD positions are never masked.
pub fn forward_mask(r0: &[TokenId], t: f64, rng: &mut Rng) -> Result<MaskedBlock> {
    forward_mask_with(r0, t, MaskingMode::Bernoulli, rng)
}

pub fn forward_mask_with(r0: &[TokenId], t: f64, mode: MaskingMode, rng: &mut Rng) -> Result<MaskedBlock> {
    check_t(t)?;
    let eligible: Vec<usize> = (0..r0.len()).filter(|&i| r0[i] != PAD).collect();
    let positions = match mode {
        MaskingMode::Bernoulli => {
            // one draw per position regardless of eligibility keeps streams aligned
            let draws: Vec<bool> = (0..r0.len()).map(|_| rng.gen::<f64>() < t).collect();
            eligible.into_iter().filter(|&i| draws[i]).collect()
        }
        MaskingMode::ExactCount => {
            let n = ((t * eligible.len() as f64).ceil() as usize).min(eligible.len());
            sample(rng, eligible.len(), n).into_iter().map(|k| eligible[k]).collect()
        }
    };
    MaskedBlock::from_positions(r0, positions, t)
}

fn log_softmax_row<F: Real>(row: ndarray::ArrayView1<'_, F>) -> (f64, Vec<f64>) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.f64()));
    let exps: Vec<f64> = row.iter().map(|&x| (x.f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// `(1/t) · Σ_{i ∈ masked} -log softmax(logits[i])[r0[i]]` and its gradient
/// with respect to `logits`. Rows of unmasked positions get exactly zero
/// gradient.
pub fn masked_ce_loss<F: Real>(
    logits: ArrayView2<'_, F>,
    r0: &[TokenId],
    block: &MaskedBlock,
) -> Result<(f64, Array2<F>)> {
    if block.masked.is_empty() {
        return Err(Error::EmptyMask);
    }
    check_t(block.t)?;
    if logits.nrows() != r0.len() || block.len() != r0.len() {
        return Err(Error::Contract(format!(
            "logits have {} rows, response has {} and block {}",
            logits.nrows(),
            r0.len(),
            block.len()
        )));
    }
    let inv_t = 1.0 / block.t;
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for &i in &block.masked {
        let target = r0[i] as usize;
        if target >= logits.ncols() {
            return Err(Error::Contract(format!("target token {target} outside vocabulary")));
        }
        let (lse, probs) = log_softmax_row(logits.row(i));
        loss += lse - logits[[i, target]].f64();
        for (j, p) in probs.into_iter().enumerate() {
            let onehot = if j == target { 1.0 } else { 0.0 };
            dlogits[[i, j]] = F::of((p - onehot) * inv_t);
        }
    }
    Ok((loss * inv_t, dlogits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// No prompt, no audio.
    Pretrain,
    /// Prompt, no audio.
    Sft,
    /// Prompt and audio.
    AudioSft,
}

/// One supervised pair. `response` is EOS-terminated and padded to the block length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample<F> {
    pub instruction: TokenSeq,
    pub audio: Option<Array2<F>>,
    pub response: TokenSeq,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Pad with EOS; padding is maskable and supervised like any other token.
    #[default]
    Eos,
    /// Pad with PAD; padding is never masked and never supervised.
    Pad,
}

impl<F: Real> TrainExample<F> {
    /// Builds a response block of length `block_len` from an unpadded reference.
    pub fn new(
        instruction: TokenSeq,
        audio: Option<Array2<F>>,
        reference: &[TokenId],
        block_len: usize,
        padding: Padding,
    ) -> Result<Self> {
        if reference.len() + 1 > block_len {
            return Err(Error::Length { what: "reference + EOS", got: reference.len() + 1, limit: block_len });
        }
        let mut response = reference.to_vec();
        response.push(EOS);
        let fill = match padding {
            Padding::Eos => EOS,
            Padding::Pad => PAD,
        };
        response.resize(block_len, fill);
        Ok(Self { instruction, audio, response })
    }

    pub fn without_audio(&self) -> Self {
        Self { audio: None, ..self.clone() }
    }

    fn layout<'a>(&'a self, mode: ObjectiveMode, response: &'a [TokenId]) -> Result<PromptLayout<'a, F>> {
        let has_audio = self.audio.is_some();
        if has_audio != (mode == ObjectiveMode::AudioSft) {
            return Err(Error::Contract(format!(
                "{mode:?} objective with audio {}",
                if has_audio { "present" } else { "absent" }
            )));
        }
        let instruction: &[TokenId] = match mode {
            ObjectiveMode::Pretrain => &[],
            _ => &self.instruction,
        };
        Ok(PromptLayout::new(instruction, self.audio.as_ref().map(|a| a.view()), response))
    }
}

/// Draws `(t, mask)` until at least one position is masked.
pub fn draw_mask(r0: &[TokenId], mode: MaskingMode, rng: &mut Rng) -> Result<MaskedBlock> {
    if !r0.iter().any(|&x| x != PAD) {
        return Err(Error::Contract("response has no maskable position".into()));
    }
    loop {
        let t = sample_t(rng);
        let block = forward_mask_with(r0, t, mode, rng)?;
        if !block.masked.is_empty() {
            return Ok(block);
        }
    }
}

/// Loss and gradients for one example with a given corrupted block.
pub fn example_loss<F: Real>(
    params: &Params<F>,
    example: &TrainExample<F>,
    mode: ObjectiveMode,
    block: &MaskedBlock,
) -> Result<(f64, Grads<F>)> {
    let layout = example.layout(mode, &block.tokens)?;
    let (logits, tape) = forward(params, &layout)?;
    let (loss, dlogits) = masked_ce_loss(logits.view(), &example.response, block)?;
    let grads = backprop(params, &tape, dlogits.view())?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: LrSchedule,
    pub adam: AdamHyper,
    pub masking: MaskingMode,
    /// Divide each example's loss by its response length (off: plain `1/t` weighting).
    pub length_normalize: bool,
    /// Global gradient-norm clip applied to the batch-mean gradient.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub t_min: f64,
    pub t_mean: f64,
    pub t_max: f64,
}

impl StepReport {
    pub const CSV_HEADER: &'static str = "step,t_min,t_mean,t_max,loss,lr";

    pub fn csv_row(&self) -> String {
        format!("{},{:.6},{:.6},{:.6},{:.6},{:.6e}", self.step, self.t_min, self.t_mean, self.t_max, self.loss, self.lr)
    }
}

/// Sum of squares over all gradient entries, accumulated in `f64`.
pub fn grad_norm<F: Real>(g: &Grads<F>) -> f64 {
    g.tensors().iter().flat_map(|(_, t)| t.iter()).map(|x| x.f64() * x.f64()).sum::<f64>().sqrt()
}

/// Denoiser training loop state. Each example's RNG is derived from
/// `(seed, step, index)`, and per-example gradients are reduced in batch
/// order, so results do not depend on the rayon thread count.
#[derive(Debug, Clone)]
pub struct Trainer<F> {
    pub params: Params<F>,
    pub state: AdamState<F>,
    pub config: TrainConfig,
    pub step: usize,
}

impl<F: Real> Trainer<F> {
    pub fn new(params: Params<F>, config: TrainConfig) -> Result<Self> {
        config.schedule.validate()?;
        Ok(Self { state: AdamState::new(&params), params, config, step: 0 })
    }

    /// Mean over the batch of `1/t`-weighted losses, one AdamW update at
    /// `lr_at(step)`.
    pub fn train_step(&mut self, batch: &[TrainExample<F>], mode: ObjectiveMode) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let step = self.step;
        let params = &self.params;
        let cfg = &self.config;
        let per_example: Vec<(f64, f64, Grads<F>)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut rng = seed::derive_rng(cfg.seed, &[step as u64, i as u64]);
                let block = draw_mask(&ex.response, cfg.masking, &mut rng)?;
                let (mut loss, mut g) = example_loss(params, ex, mode, &block)?;
                if cfg.length_normalize {
                    let n = ex.response.len() as f64;
                    loss /= n;
                    g.scale(F::of(1.0 / n));
                }
                Ok((loss, block.t, g))
            })
            .collect::<Result<_>>()?;

        let n = batch.len() as f64;
        let mut total = params.zeros_like();
        let mut loss = 0.0;
        let (mut t_min, mut t_max, mut t_sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for (l, t, g) in &per_example {
            total.add_assign(g);
            loss += l;
            t_min = t_min.min(*t);
            t_max = t_max.max(*t);
            t_sum += t;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("batch of {} with t in [{t_min}, {t_max}]", batch.len()),
            });
        }
        total.scale(F::of(1.0 / n));
        if let Some(clip) = cfg.grad_clip {
            let norm = grad_norm(&total);
            if norm > clip {
                total.scale(F::of(clip / norm));
            }
        }
        let lr = cfg.schedule.lr_at(step);
        adamw_update(&mut self.params, &total, &mut self.state, &cfg.adam, lr, step + 1)?;
        self.step += 1;
        Ok(StepReport { step, loss, lr, t_min, t_mean: t_sum / n, t_max })
    }
}

/// Mean loss over `examples` with masks drawn from a fixed evaluation seed.
pub fn eval_loss<F: Real>(
    params: &Params<F>,
    examples: &[TrainExample<F>],
    mode: ObjectiveMode,
    seed: u64,
) -> Result<f64> {
    let losses: Vec<f64> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = seed::derive_rng(seed, &[u64::MAX, i as u64]);
            let block = draw_mask(&ex.response, MaskingMode::Bernoulli, &mut rng)?;
            let layout = ex.layout(mode, &block.tokens)?;
            let logits = crate::nncore::logits(params, &layout)?;
            masked_ce_loss(logits.view(), &ex.response, &block).map(|(l, _)| l)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// CSV training log, one line per step.
pub struct TrainLog<W: Write> {
    out: W,
}

impl<W: Write> TrainLog<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{}", StepReport::CSV_HEADER)?;
        Ok(Self { out })
    }

    pub fn record(&mut self, r: &StepReport) -> Result<()> {
        writeln!(self.out, "{}", r.csv_row())?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
