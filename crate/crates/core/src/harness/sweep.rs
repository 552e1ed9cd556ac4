//! Grid sweeps over decoding steps, sub-blocks, mask ratios and deliberation
//! spans, producing bench rows and `(x, y, series)` plot data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoding::DecodeConfig;
use crate::deliberation::{DeliberationConfig, Strategy};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{
    decode_label, decode_split, deliberate_split, score, transcribe_split, BenchRecord, AR_PROVENANCE,
};
use crate::nncore::{Params, Real};
use crate::toytask::Corpus;

/// Models a sweep draws on; rows needing an absent model are skipped.
pub struct Models<F> {
    pub denoiser: Params<F>,
    pub ar: Option<Params<F>>,
    pub refiner: Option<Params<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub figure: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<BenchRecord>,
    pub plot: Vec<PlotPoint>,
}

impl SweepOutput {
    fn push(&mut self, row: BenchRecord, figure: &str, series: String, x: f64) {
        self.plot.push(PlotPoint { figure: figure.into(), series, x, y: row.wer });
        self.rows.push(row);
    }

    /// Writes `bench.csv` and `plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::harness::experiment::write_bench_csv(&dir.join("bench.csv"), &self.rows)?;
        let mut w = BufWriter::new(File::create(dir.join("plot.csv"))?);
        writeln!(w, "figure,series,x,y")?;
        for p in &self.plot {
            writeln!(w, "{},{},{},{:.6}", p.figure, p.series, p.x, p.y)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every configured grid on every configured split.
pub fn run_sweep<F: Real>(cfg: &ExperimentConfig, models: &Models<F>, corpus: &Corpus) -> Result<SweepOutput> {
    let sw = &cfg.sweep;
    let seq = sw.timed;
    let mut out = SweepOutput::default();
    for &split in &sw.splits {
        let utts = corpus.split(split);
        let utts = match sw.limit {
            0 => utts,
            n => &utts[..n.min(utts.len())],
        };
        let series = split.name().to_string();

        for &n in &sw.steps {
            let d = DecodeConfig { steps: n, sub_blocks: 1, trace: false, ..cfg.decode.clone() };
            let hyps = decode_split(cfg, &models.denoiser, utts, &d, seq)?;
            out.push(score("diffusion", &decode_label(&d), split, utts, &hyps)?, "steps", series.clone(), n as f64);
        }

        for &n in &sw.semi_ar_steps {
            for &m in &sw.decode_sub_blocks {
                if m > cfg.block_len || cfg.block_len % m != 0 {
                    continue;
                }
                let d = DecodeConfig { steps: n, sub_blocks: m, trace: false, ..cfg.decode.clone() };
                let hyps = decode_split(cfg, &models.denoiser, utts, &d, seq)?;
                let system = if m == 1 { "diffusion" } else { "semi_ar" };
                out.push(
                    score(system, &decode_label(&d), split, utts, &hyps)?,
                    "decode_sub_blocks",
                    format!("{}:n={n}", split.name()),
                    m as f64,
                );
            }
        }

        let Some(ar) = &models.ar else { continue };
        let first = transcribe_split(cfg, ar, utts, seq)?;
        let base = score("ar", AR_PROVENANCE, split, utts, &first)?;
        out.plot.push(PlotPoint { figure: "baseline".into(), series: series.clone(), x: 0.0, y: base.wer });
        out.rows.push(base);

        let mut refiners = vec![(&models.denoiser, true)];
        if sw.text_refiner {
            if let Some(r) = &models.refiner {
                refiners.push((r, false));
            }
        }
        for (params, use_audio) in refiners {
            let tag = if use_audio { "" } else { ":text" };
            for &strategy in &sw.mask_strategies {
                for &p in &sw.mask_ratios {
                    let d = DeliberationConfig { strategy, mask_ratio: p, use_audio, ..cfg.deliberation.clone() };
                    let hyps = deliberate_split(cfg, params, utts, &first, &d, seq)?;
                    out.push(
                        score("deliberation", &d.label(), split, utts, &hyps)?,
                        "mask_ratio",
                        format!("{}:{}{tag}", split.name(), strategy.name()),
                        p,
                    );
                }
            }
            for &m in &sw.deliberation_sub_blocks {
                let d = DeliberationConfig {
                    strategy: Strategy::SemiAr,
                    sub_blocks: m,
                    use_audio,
                    ..cfg.deliberation.clone()
                };
                let hyps = deliberate_split(cfg, params, utts, &first, &d, seq)?;
                out.push(
                    score("deliberation", &d.label(), split, utts, &hyps)?,
                    "deliberation_sub_blocks",
                    format!("{}{tag}", split.name()),
                    m as f64,
                );
            }
        }
    }
    Ok(out)
}
