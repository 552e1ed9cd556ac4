//! Second-pass deliberation: an autoregressive first pass is remasked and
//! reconstructed by the denoiser, with and without audio.

use mdasr::deliberation::{DeliberationConfig, Strategy};
use mdasr::harness::{deliberate_split, score, train_model, transcribe_split, ExperimentConfig, ModelKind};
use mdasr::toytask::{gen_corpus, Split};

pub fn run(steps: usize) -> mdasr::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.train = 1000;
    cfg.corpus.test_other = 50;
    for spec in [&mut cfg.denoiser, &mut cfg.ar, &mut cfg.refiner] {
        spec.steps = steps;
        spec.exact_length_prob = 0.3;
    }
    let corpus = gen_corpus(&cfg.corpus);
    let train = corpus.split(Split::Train);
    let denoiser = train_model::<f32>(&cfg, ModelKind::Denoiser, train, 0, None)?;
    let ar = train_model::<f32>(&cfg, ModelKind::Ar, train, 0, None)?;
    let refiner = train_model::<f32>(&cfg, ModelKind::Refiner, train, 0, None)?;
    let utts = corpus.split(Split::TestOther);
    let first = transcribe_split(&cfg, &ar, utts, false)?;
    println!("{:<24} WER {:.4}", "first pass", score("ar", "", Split::TestOther, utts, &first)?.wer);
    let plans = [
        (Strategy::Random, 0.5, 1),
        (Strategy::Random, 0.9, 1),
        (Strategy::LowConfidence, 0.5, 1),
        (Strategy::LowConfidence, 0.9, 1),
        (Strategy::SemiAr, 1.0, 2),
        (Strategy::SemiAr, 1.0, 4),
    ];
    for use_audio in [true, false] {
        let model = if use_audio { &denoiser } else { &refiner };
        for (strategy, mask_ratio, sub_blocks) in plans {
            let d = DeliberationConfig { strategy, mask_ratio, sub_blocks, use_audio, ..DeliberationConfig::default() };
            let hyps = deliberate_split(&cfg, model, utts, &first, &d, false)?;
            println!("{:<24} WER {:.4}", d.label(), score("delib", "", Split::TestOther, utts, &hyps)?.wer);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run(1500)
}
