//! Oracles and fixtures shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use mdasr::decoding::{DecodeConfig, Hypothesis, MaskPredictor};
use mdasr::diffusion::forward_mask;
use mdasr::nncore::{init_params, AttentionMode, ModelConfig, Params, Precision, PromptLayout};
use mdasr::seed;
use mdasr::vocab::{TokenId, EOS, MASK};
use ndarray::Array2;
use rand::Rng;

/// Fraction of masked positions over `blocks` Bernoulli draws of 32 positions.
pub fn masked_fraction(t: f64, blocks: usize, seed_value: u64) -> f64 {
    let r0: Vec<TokenId> = (0..32).map(|i| 4 + (i % 7)).collect();
    let mut rng = seed::rng(seed_value);
    let mut masked = 0usize;
    for _ in 0..blocks {
        masked += forward_mask(&r0, t, &mut rng).unwrap().masked.len();
    }
    masked as f64 / (blocks * r0.len()) as f64
}

/// Edit distance by memoised recursion over suffixes, written independently
/// of the table-filling implementation under test.
pub fn oracle_edit_distance(a: &[TokenId], b: &[TokenId]) -> usize {
    fn go(a: &[TokenId], b: &[TokenId], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j + 1, memo).min(go(a, b, i + 1, j, memo)).min(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Random (reference, hypothesis) pairs: lengths up to 12, alphabet of 5.
pub fn random_pairs(n: usize, seed_value: u64) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|_| {
            let rl = rng.gen_range(1..=12);
            let hl = rng.gen_range(0..=12);
            let r = (0..rl).map(|_| 4 + rng.gen_range(0..5)).collect();
            let h = (0..hl).map(|_| 4 + rng.gen_range(0..5)).collect();
            (r, h)
        })
        .collect()
}

/// Deterministic pseudo-random logits keyed on the whole layout, with EOS
/// boosted at a few positions so early stopping triggers.
pub struct HashPredictor {
    pub seed: u64,
    pub vocab: usize,
}

impl MaskPredictor<f64> for HashPredictor {
    fn predict(&self, layout: &PromptLayout<'_, f64>) -> mdasr::Result<Array2<f64>> {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.seed.hash(&mut h);
        layout.instruction.hash(&mut h);
        layout.response.hash(&mut h);
        let mut rng = seed::rng(h.finish());
        let eos_from = 3 + (self.seed as usize % 20);
        Ok(Array2::from_shape_fn((layout.response.len(), self.vocab), |(i, j)| {
            let base: f64 = rng.gen_range(-3.0..3.0);
            if j as TokenId == EOS && i >= eos_from {
                base + 4.0
            } else {
                base
            }
        }))
    }
}

pub fn tiny_config(attention: AttentionMode) -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        model_dim: 8,
        num_layers: 1,
        num_heads: 2,
        ffn_dim: 16,
        max_positions: 64,
        feature_dim: 3,
        attention,
        precision: Precision::Double,
    }
}

pub fn tiny_denoiser(seed_value: u64) -> Params<f64> {
    init_params(&tiny_config(AttentionMode::Bidirectional), seed_value).unwrap()
}

pub fn tiny_audio(rows: usize, seed_value: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed_value);
    Array2::from_shape_fn((rows, 3), |_| rng.gen_range(-1.0..1.0))
}

/// Checks the decode-schedule invariants on a traced hypothesis; returns a
/// description of the first violation.
pub fn check_schedule(h: &Hypothesis, cfg: &DecodeConfig) -> Result<(), String> {
    if h.denoiser_calls > cfg.max_calls() {
        return Err(format!("{} calls exceed bound {}", h.denoiser_calls, cfg.max_calls()));
    }
    if cfg.sub_blocks == 1 && h.denoiser_calls > cfg.steps {
        return Err(format!("{} calls exceed N = {}", h.denoiser_calls, cfg.steps));
    }
    if h.trace.len() != h.denoiser_calls {
        return Err("trace length differs from call count".into());
    }
    let k = cfg.commits_per_step();
    let mut prev = vec![MASK; cfg.block_len];
    for s in &h.trace {
        if !cfg.early_stop && s.selected.len() != k.min(s.masked_before) {
            return Err(format!(
                "iteration {} committed {} with {} masked, K = {k}",
                s.iteration,
                s.selected.len(),
                s.masked_before
            ));
        }
        if s.selected.len() > k {
            return Err(format!("iteration {} committed more than K = {k}", s.iteration));
        }
        for (i, (&a, &b)) in prev.iter().zip(&s.block).enumerate() {
            if a != MASK && a != b {
                return Err(format!("position {i} rewritten from {a} to {b} at iteration {}", s.iteration));
            }
        }
        if cfg.early_stop {
            if let Some(first) = s.block.iter().position(|&t| t == EOS) {
                if let Some(j) = (first..s.block.len()).find(|&j| s.block[j] != EOS) {
                    return Err(format!("token {} at {j} after EOS at {first}", s.block[j]));
                }
            }
        }
        prev = s.block.clone();
    }
    if h.block.contains(&MASK) {
        return Err("masked positions remain".into());
    }
    if h.block != prev {
        return Err("final block differs from last trace step".into());
    }
    Ok(())
}

/// Median of a small sample.
pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
