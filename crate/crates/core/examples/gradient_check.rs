//! Compares the hand-written reverse pass with central finite differences
//! on a small double-precision denoiser.

use mdasr::diffusion::{example_loss, MaskedBlock, ObjectiveMode, Padding, TrainExample};
use mdasr::nncore::{init_params, AttentionMode, ModelConfig, Precision};
use ndarray::Array2;
use rand::Rng;

pub fn run(samples: usize) -> mdasr::Result<f64> {
    let cfg = ModelConfig {
        vocab_size: 12,
        model_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 16,
        max_positions: 24,
        feature_dim: 3,
        attention: AttentionMode::Bidirectional,
        precision: Precision::Double,
    };
    let params = init_params::<f64>(&cfg, 7)?;
    let audio = Array2::from_shape_fn((5, 3), |(i, j)| ((3 * i + j) as f64 * 0.71).sin());
    let ex = TrainExample::new(vec![1, 5], Some(audio), &[4, 9, 7, 11, 6], 8, Padding::Eos)?;
    let block = MaskedBlock::from_positions(&ex.response, vec![0, 2, 3, 5, 7], 0.37)?;
    let loss = |p: &_| example_loss(p, &ex, ObjectiveMode::AudioSft, &block).map(|r| r.0);
    let (_, grads) = example_loss(&params, &ex, ObjectiveMode::AudioSft, &block)?;
    let tensors = grads.tensors();
    let mut rng = mdasr::seed::rng(1);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let ti = rng.gen_range(0..tensors.len());
        let (name, g) = &tensors[ti];
        let idx = rng.gen_range(0..g.len());
        let shifted = |delta: f64| {
            let mut q = params.clone();
            q.tensors_mut().into_iter().nth(ti).unwrap().1.as_slice_mut().unwrap()[idx] += delta;
            loss(&q)
        };
        let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        let analytic = g.as_slice().unwrap()[idx];
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-10 { 0.0 } else { (analytic - numeric).abs() / scale };
        worst = worst.max(rel);
        println!("{name}[{idx}] analytic {analytic:+.8e} numeric {numeric:+.8e} rel {rel:.2e}");
    }
    println!("{} parameters, {samples} sampled, worst relative error {worst:.2e}", params.num_params());
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run(60).map(drop)
}
