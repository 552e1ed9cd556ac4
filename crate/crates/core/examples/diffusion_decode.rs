//! Parallel confidence-ranked decoding: WER and denoiser calls as the step
//! count grows, plus the commit trace of one utterance.

use mdasr::decoding::{diffusion_decode, DecodeConfig};
use mdasr::harness::{audio_features, decode_split, score, train_model, ExperimentConfig, ModelKind};
use mdasr::toytask::{gen_corpus, Split};

pub fn run(steps: usize) -> mdasr::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.train = 1000;
    cfg.corpus.test_other = 50;
    cfg.denoiser.steps = steps;
    let corpus = gen_corpus(&cfg.corpus);
    let model = train_model::<f32>(&cfg, ModelKind::Denoiser, corpus.split(Split::Train), 0, None)?;
    let utts = corpus.split(Split::TestOther);
    for n in [1, 4, 8, 16, 32] {
        let d = DecodeConfig { steps: n, ..cfg.decode.clone() };
        let hyps = decode_split(&cfg, &model, utts, &d, false)?;
        let row = score("diffusion", "", Split::TestOther, utts, &hyps)?;
        println!("N={n:<3} WER {:.4} mean calls {:.2}", row.wer, row.denoiser_calls);
    }
    let u = &utts[0];
    let audio = audio_features::<f32>(&cfg, u)?;
    let d = DecodeConfig { steps: 8, trace: true, ..cfg.decode.clone() };
    let h = diffusion_decode(&model, &cfg.instruction, Some(audio.view()), &d)?;
    println!("reference  {:?}", u.reference);
    print!("{}", h.trace_csv());
    println!("hypothesis {:?} after {} calls", h.tokens, h.denoiser_calls);
    Ok(())
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run(1500)
}
