//! Causal first-pass baseline trained with next-token cross-entropy.
//!
//! The response segment holds `[BOS, y0, .., y(n-1)]`; the logits at response
//! position `i` predict `y(i)`, and the last one predicts EOS.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::decoding::{best_token, is_emittable, Hypothesis};
use crate::diffusion::{grad_norm, StepReport, TrainConfig, TrainExample};
use crate::error::{Error, Result};
use crate::nncore::{adamw_update, backprop, forward, logits, AdamState, Grads, Params, PromptLayout, Real};
use crate::vocab::{truncate_at_eos, TokenId, BOS, EOS};

fn check_causal<F: Real>(params: &Params<F>) -> Result<()> {
    if params.is_causal() {
        Ok(())
    } else {
        Err(Error::Config("autoregressive model needs causal attention".into()))
    }
}

/// Mean next-token cross-entropy over the reference and the final EOS.
pub fn ar_example_loss<F: Real>(
    params: &Params<F>,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    reference: &[TokenId],
) -> Result<(f64, Grads<F>)> {
    let mut input = Vec::with_capacity(reference.len() + 1);
    input.push(BOS);
    input.extend_from_slice(reference);
    let targets: Vec<TokenId> = reference.iter().copied().chain([EOS]).collect();
    let (logits, tape) = forward(params, &PromptLayout::new(instruction, audio.map(|a| a.reborrow()), &input))?;
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for (i, &target) in targets.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.f64()));
        let exps: Vec<f64> = row.iter().map(|&x| (x.f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += max + sum.ln() - row[target as usize].f64();
        for (j, e) in exps.into_iter().enumerate() {
            let onehot = if j == target as usize { 1.0 } else { 0.0 };
            dlogits[[i, j]] = F::of((e / sum - onehot) / n);
        }
    }
    let grads = backprop(params, &tape, dlogits.view())?;
    Ok((loss / n, grads))
}

/// Training loop for the causal baseline; shares [`TrainConfig`] with the
/// denoiser trainer (masking fields are unused).
#[derive(Debug, Clone)]
pub struct ArTrainer<F> {
    pub params: Params<F>,
    pub state: AdamState<F>,
    pub config: TrainConfig,
    pub step: usize,
}

impl<F: Real> ArTrainer<F> {
    pub fn new(params: Params<F>, config: TrainConfig) -> Result<Self> {
        check_causal(&params)?;
        config.schedule.validate()?;
        Ok(Self { state: AdamState::new(&params), params, config, step: 0 })
    }

    pub fn train_step(&mut self, batch: &[TrainExample<F>]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let params = &self.params;
        let per_example: Vec<(f64, Grads<F>)> = batch
            .par_iter()
            .map(|ex| {
                let reference = truncate_at_eos(&ex.response);
                ar_example_loss(params, &ex.instruction, ex.audio.as_ref().map(|a| a.view()), reference)
            })
            .collect::<Result<_>>()?;
        let n = batch.len() as f64;
        let mut total = params.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &per_example {
            total.add_assign(g);
            loss += l;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, detail: "autoregressive batch".into() });
        }
        total.scale(F::of(1.0 / n));
        if let Some(clip) = self.config.grad_clip {
            let norm = grad_norm(&total);
            if norm > clip {
                total.scale(F::of(clip / norm));
            }
        }
        let lr = self.config.schedule.lr_at(self.step);
        adamw_update(&mut self.params, &total, &mut self.state, &self.config.adam, lr, self.step + 1)?;
        let report = StepReport { step: self.step, loss, lr, t_min: 1.0, t_mean: 1.0, t_max: 1.0 };
        self.step += 1;
        Ok(report)
    }
}

/// Greedy left-to-right decoding until EOS or `max_len` emitted tokens. One
/// forward pass per emitted token (EOS included), recomputed from scratch.
pub fn ar_greedy_transcribe<F: Real>(
    params: &Params<F>,
    instruction: &[TokenId],
    audio: Option<ArrayView2<'_, F>>,
    max_len: usize,
) -> Result<Hypothesis> {
    check_causal(params)?;
    let started = Instant::now();
    let mut input = vec![BOS];
    let mut confidences = Vec::new();
    let mut calls = 0;
    let mut truncated = false;
    loop {
        if input.len() > max_len {
            truncated = true;
            break;
        }
        let layout = PromptLayout::new(instruction, audio.map(|a| a.reborrow()), &input);
        let l = logits(params, &layout)?;
        calls += 1;
        let (tok, p) = best_token(l.row(l.nrows() - 1), is_emittable);
        if tok == EOS {
            break;
        }
        input.push(tok);
        confidences.push(p);
    }
    Ok(Hypothesis {
        tokens: input[1..].to_vec(),
        confidences,
        denoiser_calls: calls,
        elapsed_s: started.elapsed().as_secs_f64(),
        truncated,
        block: Vec::new(),
        trace: Vec::new(),
    })
}
