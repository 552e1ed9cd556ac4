mod common;

use std::thread::sleep;
use std::time::Duration;

use common::HashPredictor;
use mdasr::decoding::{diffusion_decode, DecodeConfig, MaskPredictor};
use mdasr::harness::rtf;
use mdasr::nncore::PromptLayout;
use mdasr::vocab::BOS;
use ndarray::Array2;

/// Hash logits behind a fixed per-call cost, so wall-clock time tracks calls.
struct Slow(HashPredictor);

impl MaskPredictor<f64> for Slow {
    fn predict(&self, layout: &PromptLayout<'_, f64>) -> mdasr::Result<Array2<f64>> {
        sleep(Duration::from_millis(5));
        self.0.predict(layout)
    }
}

#[test]
fn rtf_scales_with_step_count() {
    let slow = Slow(HashPredictor { seed: 3, vocab: 12 });
    let run = |steps| {
        let cfg = DecodeConfig { steps, early_stop: false, ..DecodeConfig::default() };
        let h = diffusion_decode(&slow, &[BOS], None, &cfg).unwrap();
        assert_eq!(h.denoiser_calls, steps);
        rtf(h.elapsed_s, 2.0).unwrap()
    };
    let (fast, full) = (run(8), run(32));
    let ratio = fast / full;
    assert!((ratio - 0.25).abs() <= 0.05, "RTF ratio {ratio}");
}

#[test]
fn rtf_rejects_empty_audio() {
    assert!(rtf(1.0, 0.0).is_err());
    assert!(rtf(1.0, -1.0).is_err());
    assert_eq!(rtf(1.0, 4.0).unwrap(), 0.25);
}
