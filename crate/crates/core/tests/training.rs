mod common;

use mdasr::diffusion::{eval_loss, forward_mask, masked_ce_loss, sample_t, MaskedBlock, ObjectiveMode, TrainExample};
use mdasr::harness::{train_examples, train_model, ExperimentConfig, ModelKind};
use mdasr::seed;
use mdasr::toytask::{gen_corpus, Split};
use ndarray::arr2;

#[test]
fn t_draws_average_one_half() {
    let mut rng = seed::rng(11);
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let t = sample_t(&mut rng);
        assert!(t > 0.0 && t <= 1.0);
        sum += t;
    }
    let mean = sum / n as f64;
    assert!((0.499..=0.501).contains(&mean), "mean {mean}");
}

#[test]
fn long_sequence_masked_fraction() {
    let r0 = vec![7u32; 100_000];
    let b = forward_mask(&r0, 0.3, &mut seed::rng(5)).unwrap();
    let f = b.masked.len() as f64 / r0.len() as f64;
    assert!((f - 0.3).abs() < 0.01, "fraction {f}");
}

#[test]
fn loss_matches_brute_force_log_softmax() {
    let logits = arr2(&[[0.3, -1.2, 2.0, 0.1], [1.5, 0.2, -0.7, 0.0], [-0.4, 0.9, 0.3, 2.2]]);
    let r0 = vec![2, 0, 3];
    let block = MaskedBlock::from_positions(&r0, vec![0, 2], 0.4).unwrap();
    let (loss, d) = masked_ce_loss(logits.view(), &r0, &block).unwrap();
    let nll = |row: usize, tok: usize| {
        let z: f64 = logits.row(row).iter().map(|x: &f64| x.exp()).sum();
        -(logits[[row, tok]].exp() / z).ln()
    };
    let want = (nll(0, 2) + nll(2, 3)) / 0.4;
    assert!((loss - want).abs() < 1e-12);
    assert!(d.row(1).iter().all(|&x| x == 0.0));
}

fn memorization_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.train = 50;
    cfg.corpus.dev = 0;
    cfg.corpus.test_clean = 0;
    cfg.corpus.test_other = 0;
    cfg.corpus.noise_sigma_other = 0.31;
    cfg.corpus.max_len = 12;
    cfg.denoiser.steps = 200;
    cfg.denoiser.warmup_steps = 20;
    cfg.denoiser.lr_min = 3e-3;
    cfg.model.precision = mdasr::nncore::Precision::Double;
    cfg
}

#[test]
fn denoiser_memorizes_fifty_examples_in_two_hundred_steps() {
    let cfg = memorization_config();
    let corpus = gen_corpus(&cfg.corpus);
    let utts = corpus.split(Split::Train);
    let examples: Vec<TrainExample<f64>> = train_examples(&cfg, utts, true, &cfg.denoiser).unwrap();
    let before = {
        let mut c = cfg.clone();
        c.denoiser.steps = 0;
        train_model::<f64>(&c, ModelKind::Denoiser, utts, 1, None).unwrap()
    };
    let after = train_model::<f64>(&cfg, ModelKind::Denoiser, utts, 1, None).unwrap();
    let l0 = eval_loss(&before, &examples, ObjectiveMode::AudioSft, 9).unwrap();
    let l1 = eval_loss(&after, &examples, ObjectiveMode::AudioSft, 9).unwrap();
    println!("memorization loss {l0:.3} -> {l1:.3}");
    assert!(l1 < 0.1 * l0, "loss {l0} -> {l1}");
}
