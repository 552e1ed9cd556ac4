//! Command-line surface. Every subcommand takes `--config`, `--seed` and
//! `--out`; the seed and output directory fall back to the config file.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{
    decode_label, decode_split, deliberate_split, load_model, read_hypotheses, score, train_model, transcribe_split,
    write_bench_csv, write_hypotheses, ModelKind, AR_PROVENANCE,
};
use crate::harness::sweep::{run_sweep, Models};
use crate::nncore::{save_checkpoint, Precision, Real};
use crate::toytask::{gen_corpus, Corpus, Split};

#[derive(Debug, Parser)]
#[command(name = "mdasr", about = "Masked diffusion speech recognition on a synthetic task")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeSystem {
    /// Diffusion or semi-autoregressive decoding per `[decode]`.
    Diffusion,
    /// Autoregressive baseline (first pass for deliberation).
    Ar,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    GenData(Common),
    /// Train the masked denoiser (or the audio-free refiner with `--text-only`).
    TrainDenoiser {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        text_only: bool,
    },
    /// Train the autoregressive baseline.
    TrainAr(Common),
    /// Transcribe the eval split.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "diffusion")]
        system: DecodeSystem,
    },
    /// Refine first-pass hypotheses with the configured strategy.
    Deliberate(Common),
    /// Score a hypothesis file against the eval split.
    Eval(Common),
    /// Run the configured grids.
    Sweep(Common),
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        Self::with_default_out(c, None)
    }

    fn with_default_out(c: &Common, fallback: Option<PathBuf>) -> Result<Self> {
        let cfg = ExperimentConfig::load(&c.config)?;
        let seed = c.seed.unwrap_or(cfg.seed);
        let out = c
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .or(fallback)
            .ok_or_else(|| Error::Config("no output directory: pass --out or set `out`".into()))?;
        fs::create_dir_all(&out)?;
        Ok(Self { cfg, seed, out })
    }

    fn corpus(&self, splits: &[Split]) -> Result<Corpus> {
        let corpus = Corpus::load(&self.cfg.paths.data, splits)?;
        let expected = crate::toytask::CorpusConfig { seed: corpus.config.seed, ..self.cfg.corpus.clone() };
        if corpus.config != expected {
            return Err(Error::ConfigMismatch {
                expected: "the [corpus] section of the config".into(),
                found: format!("a different corpus in {}", self.cfg.paths.data.display()),
            });
        }
        Ok(corpus)
    }

    fn eval_utts<'a>(&self, corpus: &'a Corpus) -> &'a [crate::toytask::Utterance] {
        let utts = corpus.split(self.cfg.eval.split);
        match self.cfg.eval.limit {
            0 => utts,
            n => &utts[..n.min(utts.len())],
        }
    }
}

/// Runs a parsed command, returning a one-line summary.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData(c) => {
            let data = ExperimentConfig::load(&c.config)?.paths.data;
            let ctx = Ctx::with_default_out(&c, Some(data))?;
            let mut cc = ctx.cfg.corpus.clone();
            cc.seed = c.seed.unwrap_or(cc.seed);
            let corpus = gen_corpus(&cc);
            corpus.write(&ctx.out)?;
            Ok(format!("wrote corpus to {}", ctx.out.display()))
        }
        Command::TrainDenoiser { common, text_only } => {
            let kind = if text_only { ModelKind::Refiner } else { ModelKind::Denoiser };
            dispatch(&common, |ctx| train::<f32>(ctx, kind), |ctx| train::<f64>(ctx, kind))
        }
        Command::TrainAr(c) => {
            dispatch(&c, |ctx| train::<f32>(ctx, ModelKind::Ar), |ctx| train::<f64>(ctx, ModelKind::Ar))
        }
        Command::Decode { common, system } => {
            dispatch(&common, |ctx| decode::<f32>(ctx, system), |ctx| decode::<f64>(ctx, system))
        }
        Command::Deliberate(c) => dispatch(&c, deliberate::<f32>, deliberate::<f64>),
        Command::Eval(c) => {
            let ctx = Ctx::new(&c)?;
            let corpus = ctx.corpus(&[ctx.cfg.eval.split])?;
            let utts = ctx.eval_utts(&corpus);
            let hyps = read_hypotheses(&ctx.cfg.paths.hypotheses)?;
            let provenance = hyps.first().map_or("", |h| h.provenance.as_str()).to_string();
            let row = score("eval", &provenance, ctx.cfg.eval.split, utts, &hyps)?;
            write_bench_csv(&ctx.out.join("eval.csv"), std::slice::from_ref(&row))?;
            Ok(serde_json::to_string(&row)?)
        }
        Command::Sweep(c) => dispatch(&c, sweep::<f32>, sweep::<f64>),
    }
}

fn dispatch(
    c: &Common,
    single: impl FnOnce(&Ctx) -> Result<String>,
    double: impl FnOnce(&Ctx) -> Result<String>,
) -> Result<String> {
    let ctx = Ctx::new(c)?;
    match ctx.cfg.model.precision {
        Precision::Single => single(&ctx),
        Precision::Double => double(&ctx),
    }
}

fn train<F: Real>(ctx: &Ctx, kind: ModelKind) -> Result<String> {
    let corpus = ctx.corpus(&[Split::Train])?;
    let mut log = Vec::new();
    let params = train_model::<F>(&ctx.cfg, kind, corpus.split(Split::Train), ctx.seed, Some(&mut log))?;
    let path = ctx.out.join(format!("{}.ckpt", kind.name()));
    save_checkpoint(&params, &path)?;
    fs::write(ctx.out.join(format!("{}_log.csv", kind.name())), log)?;
    Ok(format!("wrote {}", path.display()))
}

fn decode<F: Real>(ctx: &Ctx, system: DecodeSystem) -> Result<String> {
    let corpus = ctx.corpus(&[ctx.cfg.eval.split])?;
    let utts = ctx.eval_utts(&corpus);
    let (hyps, label) = match system {
        DecodeSystem::Diffusion => {
            let params = load_model::<F>(&ctx.cfg, ModelKind::Denoiser)?;
            (decode_split(&ctx.cfg, &params, utts, &ctx.cfg.decode, false)?, decode_label(&ctx.cfg.decode))
        }
        DecodeSystem::Ar => {
            let params = load_model::<F>(&ctx.cfg, ModelKind::Ar)?;
            (transcribe_split(&ctx.cfg, &params, utts, false)?, AR_PROVENANCE.to_string())
        }
    };
    let path = ctx.out.join(match system {
        DecodeSystem::Diffusion => "hypotheses.jsonl",
        DecodeSystem::Ar => "ar.jsonl",
    });
    write_hypotheses(&path, &hyps)?;
    Ok(format!("wrote {} {label} hypotheses to {}", hyps.len(), path.display()))
}

fn deliberate<F: Real>(ctx: &Ctx) -> Result<String> {
    let corpus = ctx.corpus(&[ctx.cfg.eval.split])?;
    let utts = ctx.eval_utts(&corpus);
    let first = read_hypotheses(&ctx.cfg.paths.first_pass)?;
    let dcfg = crate::deliberation::DeliberationConfig { seed: ctx.seed, ..ctx.cfg.deliberation.clone() };
    let kind = if dcfg.use_audio { ModelKind::Denoiser } else { ModelKind::Refiner };
    let params = load_model::<F>(&ctx.cfg, kind)?;
    let hyps = deliberate_split(&ctx.cfg, &params, utts, &first, &dcfg, false)?;
    let path = ctx.out.join("deliberated.jsonl");
    write_hypotheses(&path, &hyps)?;
    Ok(format!("wrote {} {} hypotheses to {}", hyps.len(), dcfg.label(), path.display()))
}

fn sweep<F: Real>(ctx: &Ctx) -> Result<String> {
    let sw = &ctx.cfg.sweep;
    let corpus = ctx.corpus(&sw.splits)?;
    let needs_ar = !sw.mask_ratios.is_empty() || !sw.deliberation_sub_blocks.is_empty();
    let mut cfg = ctx.cfg.clone();
    cfg.deliberation.seed = ctx.seed;
    let models = Models {
        denoiser: load_model::<F>(&cfg, ModelKind::Denoiser)?,
        ar: needs_ar.then(|| load_model::<F>(&cfg, ModelKind::Ar)).transpose()?,
        refiner: (needs_ar && sw.text_refiner).then(|| load_model::<F>(&cfg, ModelKind::Refiner)).transpose()?,
    };
    let out = run_sweep(&cfg, &models, &corpus)?;
    out.write(&ctx.out)?;
    Ok(format!("wrote {} rows to {}", out.rows.len(), ctx.out.join("bench.csv").display()))
}

/// Single-line error text: `error: <kind>: <message>`.
pub fn error_line(e: &Error) -> String {
    format!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "))
}
