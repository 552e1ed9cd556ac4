//! Trains the audio-conditioned masked denoiser on the synthetic corpus,
//! prints the loss curve and saves a checkpoint.

use std::path::Path;

use mdasr::harness::{train_model, ExperimentConfig, ModelKind};
use mdasr::nncore::{load_checkpoint_expecting, save_checkpoint};
use mdasr::toytask::{gen_corpus, Split};

pub fn run(out: &Path, steps: usize) -> mdasr::Result<(f64, f64)> {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.train = 500;
    cfg.denoiser.steps = steps;
    let corpus = gen_corpus(&cfg.corpus);
    let mut log = Vec::new();
    let params = train_model::<f32>(&cfg, ModelKind::Denoiser, corpus.split(Split::Train), cfg.seed, Some(&mut log))?;
    let log = String::from_utf8(log).expect("log is ASCII");
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    let window = (losses.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    for (i, chunk) in losses.chunks(window).enumerate() {
        println!("steps {:>5}..{:<5} mean loss {:.3}", i * window, i * window + chunk.len(), mean(chunk));
    }
    std::fs::create_dir_all(out)?;
    let path = out.join("denoiser.ckpt");
    save_checkpoint(&params, &path)?;
    let reloaded = load_checkpoint_expecting::<f32>(&path, &ModelKind::Denoiser.model_config(&cfg))?;
    assert_eq!(reloaded, params);
    println!("{} parameters saved to {}", params.num_params(), path.display());
    Ok((mean(&losses[..window]), mean(&losses[losses.len() - window..])))
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run(Path::new("."), 1500).map(drop)
}
