mod common;

use common::{check_schedule, tiny_audio, tiny_denoiser, HashPredictor};
use mdasr::decoding::{diffusion_decode, semi_ar_decode, DecodeConfig};
use mdasr::vocab::{BOS, EOS};

fn cfg(steps: usize, sub_blocks: usize, early_stop: bool) -> DecodeConfig {
    DecodeConfig { block_len: 32, steps, sub_blocks, early_stop, trace: true, ..DecodeConfig::default() }
}

#[test]
fn diffusion_schedule_invariants_hold_for_every_step_count() {
    for n in [1, 4, 8, 16, 32] {
        for early_stop in [false, true] {
            let c = cfg(n, 1, early_stop);
            for seed in 0..40 {
                let p = HashPredictor { seed, vocab: 12 };
                let h = diffusion_decode(&p, &[BOS], None, &c).unwrap();
                check_schedule(&h, &c).unwrap_or_else(|e| panic!("N={n} early_stop={early_stop} seed={seed}: {e}"));
                if !early_stop {
                    assert_eq!(h.denoiser_calls, n, "without early stop every step runs");
                }
            }
            let model = tiny_denoiser(n as u64);
            let audio = tiny_audio(6, 1);
            let h = diffusion_decode(&model, &[BOS], Some(audio.view()), &c).unwrap();
            check_schedule(&h, &c).unwrap();
        }
    }
}

#[test]
fn semi_ar_schedule_invariants_hold() {
    for m in [1, 2, 4, 8, 16] {
        for n in [1, 4, 8, 16, 32, 64, 128] {
            let c = cfg(n, m, true);
            for seed in 0..10 {
                let p = HashPredictor { seed, vocab: 12 };
                let h = semi_ar_decode(&p, &[BOS], None, &c).unwrap();
                check_schedule(&h, &c).unwrap_or_else(|e| panic!("N={n} M={m} seed={seed}: {e}"));
                for s in &h.trace {
                    let len = c.sub_block_len();
                    assert!(s.selected.iter().all(|&p| p / len == s.sub_block));
                }
            }
        }
    }
}

#[test]
fn early_stop_saves_calls_once_eos_is_committed() {
    let c = cfg(32, 1, true);
    let mut saved = 0;
    for seed in 0..40 {
        let h = diffusion_decode(&HashPredictor { seed, vocab: 12 }, &[BOS], None, &c).unwrap();
        if let Some(e) = h.block.iter().position(|&t| t == EOS) {
            assert!(h.block[e..].iter().all(|&t| t == EOS));
            assert_eq!(h.tokens.len(), e);
        }
        saved += 32 - h.denoiser_calls;
    }
    assert!(saved > 0);
}

#[test]
fn decoding_is_pure() {
    let model = tiny_denoiser(9);
    let audio = tiny_audio(5, 2);
    let c = cfg(8, 1, true);
    let a = diffusion_decode(&model, &[BOS], Some(audio.view()), &c).unwrap();
    let b = diffusion_decode(&model, &[BOS], Some(audio.view()), &c).unwrap();
    assert!(a.same_output(&b));
}
