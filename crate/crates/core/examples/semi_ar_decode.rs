//! Semi-autoregressive decoding: the block is split into sub-blocks that are
//! denoised left to right, trading parallelism for left context.

use mdasr::decoding::{diffusion_decode, semi_ar_decode, DecodeConfig};
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
    for m in [1, 2, 4, 8, 16] {
        let d = DecodeConfig { steps: 32, sub_blocks: m, ..cfg.decode.clone() };
        let hyps = decode_split(&cfg, &model, utts, &d, false)?;
        let row = score("semi_ar", "", Split::TestOther, utts, &hyps)?;
        println!("M={m:<2} N=32 WER {:.4} mean calls {:.2} bound {}", row.wer, row.denoiser_calls, d.max_calls());
    }
    let audio = audio_features::<f32>(&cfg, &utts[0])?;
    let d = DecodeConfig { steps: 8, ..cfg.decode.clone() };
    let one = semi_ar_decode(&model, &cfg.instruction, Some(audio.view()), &d)?;
    let full = diffusion_decode(&model, &cfg.instruction, Some(audio.view()), &d)?;
    println!("one sub-block matches parallel decoding: {}", one.same_output(&full));
    Ok(())
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run(1500)
}
