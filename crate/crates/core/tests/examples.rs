//! Runs every example at reduced scale.

#[path = "../examples/deliberation.rs"]
mod deliberation;
#[path = "../examples/diffusion_decode.rs"]
mod diffusion_decode;
#[path = "../examples/gen_corpus.rs"]
mod gen_corpus;
#[path = "../examples/gradient_check.rs"]
mod gradient_check;
#[path = "../examples/semi_ar_decode.rs"]
mod semi_ar_decode;
#[path = "../examples/sweep.rs"]
mod sweep;
#[path = "../examples/train_denoiser.rs"]
mod train_denoiser;
#[path = "../examples/wer_eval.rs"]
mod wer_eval;

#[test]
fn gen_corpus_example() {
    gen_corpus::run(tempfile::tempdir().unwrap().path(), 50).unwrap();
}

#[test]
fn gradient_check_example() {
    assert!(gradient_check::run(20).unwrap() < 1e-5);
}

#[test]
fn train_denoiser_example() {
    let (first, last) = train_denoiser::run(tempfile::tempdir().unwrap().path(), 60).unwrap();
    assert!(last < first, "loss {first} -> {last}");
}

#[test]
fn diffusion_decode_example() {
    diffusion_decode::run(10).unwrap();
}

#[test]
fn semi_ar_decode_example() {
    semi_ar_decode::run(10).unwrap();
}

#[test]
fn deliberation_example() {
    deliberation::run(10).unwrap();
}

#[test]
fn wer_eval_example() {
    wer_eval::run().unwrap();
}

#[test]
fn sweep_example() {
    let dir = tempfile::tempdir().unwrap();
    sweep::run(dir.path(), 10).unwrap();
    assert!(dir.path().join("plot.csv").exists());
}
