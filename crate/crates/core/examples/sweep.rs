//! A reduced benchmark sweep: step counts, sub-block counts and deliberation
//! grids on both test splits, written as `bench.csv` and `plot.csv`.

use std::path::Path;

use mdasr::deliberation::Strategy;
use mdasr::harness::{run_sweep, train_model, ExperimentConfig, ModelKind, Models, SweepSpec};
use mdasr::toytask::{gen_corpus, Split};

pub fn run(out: &Path, steps: usize) -> mdasr::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.train = 1000;
    cfg.corpus.test_clean = 30;
    cfg.corpus.test_other = 30;
    for spec in [&mut cfg.denoiser, &mut cfg.ar, &mut cfg.refiner] {
        spec.steps = steps;
    }
    cfg.sweep = SweepSpec {
        steps: vec![1, 4, 16],
        decode_sub_blocks: vec![1, 4],
        mask_ratios: vec![0.5, 1.0],
        mask_strategies: vec![Strategy::Random, Strategy::LowConfidence],
        deliberation_sub_blocks: vec![2, 4],
        ..SweepSpec::full()
    };
    let corpus = gen_corpus(&cfg.corpus);
    let train = corpus.split(Split::Train);
    let models = Models {
        denoiser: train_model::<f32>(&cfg, ModelKind::Denoiser, train, 0, None)?,
        ar: Some(train_model::<f32>(&cfg, ModelKind::Ar, train, 0, None)?),
        refiner: Some(train_model::<f32>(&cfg, ModelKind::Refiner, train, 0, None)?),
    };
    let result = run_sweep(&cfg, &models, &corpus)?;
    result.write(out)?;
    for r in &result.rows {
        println!(
            "{:<10} {:<28} {:<10} WER {:.4} RTF {:.5} calls {:.2}",
            r.system,
            r.config,
            r.split.name(),
            r.wer,
            r.rtf,
            r.denoiser_calls
        );
    }
    println!("{} rows written to {}", result.rows.len(), out.join("bench.csv").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run(Path::new("."), 1500)
}
