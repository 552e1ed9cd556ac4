//! Central finite-difference oracle for the reverse pass.

use mdasr::diffusion::{example_loss, MaskedBlock, ObjectiveMode, Padding, TrainExample};
use mdasr::nncore::{init_params, AttentionMode, ModelConfig, Params, Precision};
use ndarray::Array2;
use rand::Rng;

fn config(attention: AttentionMode) -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        model_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 16,
        max_positions: 24,
        feature_dim: 3,
        attention,
        precision: Precision::Double,
    }
}

fn fixture() -> (TrainExample<f64>, MaskedBlock) {
    let audio = Array2::from_shape_fn((5, 3), |(i, j)| ((3 * i + j) as f64 * 0.71).sin());
    let ex = TrainExample::new(vec![1, 5], Some(audio), &[4, 9, 7, 11, 6], 8, Padding::Eos).unwrap();
    let block = MaskedBlock::from_positions(&ex.response, vec![0, 2, 3, 5, 7], 0.37).unwrap();
    (ex, block)
}

fn perturbed(p: &Params<f64>, tensor: usize, index: usize, delta: f64) -> Params<f64> {
    let mut q = p.clone();
    let (_, t) = q.tensors_mut().into_iter().nth(tensor).unwrap();
    t.as_slice_mut().unwrap()[index] += delta;
    q
}

/// |a − n| / max(|a|, |n|); two values both below 1e-10 count as agreeing zeros.
fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

fn check(attention: AttentionMode, seed: u64, samples_per_tensor: usize) -> Vec<(String, f64, f64, f64)> {
    let p = init_params::<f64>(&config(attention), seed).unwrap();
    let (ex, block) = fixture();
    let (_, grads) = example_loss(&p, &ex, ObjectiveMode::AudioSft, &block).unwrap();
    let mut rng = mdasr::seed::rng(seed + 100);
    let h = 1e-4;
    let mut out = Vec::new();
    for (ti, (name, g)) in grads.tensors().into_iter().enumerate() {
        for _ in 0..samples_per_tensor {
            let idx = rng.gen_range(0..g.len());
            let analytic = g.as_slice().unwrap()[idx];
            let lp = example_loss(&perturbed(&p, ti, idx, h), &ex, ObjectiveMode::AudioSft, &block).unwrap().0;
            let lm = example_loss(&perturbed(&p, ti, idx, -h), &ex, ObjectiveMode::AudioSft, &block).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            out.push((format!("{name}[{idx}]"), analytic, numeric, rel_err(analytic, numeric)));
        }
    }
    out
}

#[test]
fn bidirectional_gradients_match_finite_differences() {
    let cfg = config(AttentionMode::Bidirectional);
    assert!(cfg.num_params() <= 10_000);
    let results = check(AttentionMode::Bidirectional, 3, 2);
    assert!(results.len() >= 50);
    let worst = results.iter().max_by(|a, b| a.3.total_cmp(&b.3)).unwrap();
    for r in &results {
        assert!(r.3 < 1e-5, "{r:?}");
    }
    eprintln!("worst relative error {worst:?}");
}

#[test]
fn causal_gradients_match_finite_differences() {
    for r in check(AttentionMode::Causal, 4, 2) {
        assert!(r.3 < 1e-5, "{r:?}");
    }
}
