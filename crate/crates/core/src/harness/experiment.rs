//! End-to-end pipeline on the toy corpus: build training examples, train the
//! denoiser, the autoregressive baseline and the audio-free refiner, decode
//! or deliberate whole splits, and score hypotheses.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{diffusion_decode, semi_ar_decode, DecodeConfig, Hypothesis};
use crate::deliberation::{deliberate, DeliberationConfig, FirstPassTranscript};
use crate::diffusion::{ObjectiveMode, StepReport, TrainExample, TrainLog, Trainer};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, TrainSpec};
use crate::harness::wer::{rtf, wer, WerBreakdown};
use crate::nncore::{init_params, load_checkpoint_expecting, AttentionMode, Params, Real};
use crate::seed;
use crate::toytask::{ar_greedy_transcribe, mean_pool, ArTrainer, Split, Utterance};
use crate::vocab::{truncate_at_eos, TokenSeq};

const TAG_DENOISER: u64 = 1;
const TAG_AR: u64 = 2;
const TAG_REFINER: u64 = 3;
const TAG_BATCH: u64 = 100;

/// Which network a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Denoiser,
    Ar,
    /// Denoiser trained without audio.
    Refiner,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Denoiser => "denoiser",
            ModelKind::Ar => "ar",
            ModelKind::Refiner => "refiner",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ModelKind::Denoiser => TAG_DENOISER,
            ModelKind::Ar => TAG_AR,
            ModelKind::Refiner => TAG_REFINER,
        }
    }

    pub fn attention(self) -> AttentionMode {
        match self {
            ModelKind::Ar => AttentionMode::Causal,
            _ => AttentionMode::Bidirectional,
        }
    }

    pub fn uses_audio(self) -> bool {
        self != ModelKind::Refiner
    }

    pub fn train_spec(self, cfg: &ExperimentConfig) -> &TrainSpec {
        match self {
            ModelKind::Denoiser => &cfg.denoiser,
            ModelKind::Ar => &cfg.ar,
            ModelKind::Refiner => &cfg.refiner,
        }
    }

    pub fn model_config(self, cfg: &ExperimentConfig) -> crate::nncore::ModelConfig {
        cfg.model_config(self.attention(), self.uses_audio())
    }
}

/// Pooled acoustic features of one utterance, zero-padded to
/// `max_audio_len` rows when `pad_audio` is set so that every response
/// position sits at a fixed offset from its audio slot.
pub fn audio_features<F: Real>(cfg: &ExperimentConfig, utt: &Utterance) -> Result<Array2<F>> {
    let pooled = mean_pool::<F>(utt.frames.view(), cfg.window)?;
    let slots = cfg.max_audio_len();
    if !cfg.pad_audio || pooled.nrows() >= slots {
        return Ok(pooled);
    }
    let mut out = Array2::zeros((slots, pooled.ncols()));
    out.slice_mut(ndarray::s![..pooled.nrows(), ..]).assign(&pooled);
    Ok(out)
}

pub fn train_examples<F: Real>(
    cfg: &ExperimentConfig,
    utts: &[Utterance],
    with_audio: bool,
    spec: &TrainSpec,
) -> Result<Vec<TrainExample<F>>> {
    utts.par_iter()
        .map(|u| {
            let audio = if with_audio { Some(audio_features(cfg, u)?) } else { None };
            TrainExample::new(cfg.instruction.clone(), audio, &u.reference, cfg.block_len, spec.padding)
        })
        .collect()
}

/// Trains one model from scratch on `train`, drawing each batch uniformly
/// with replacement from a per-step seed. `log` receives one CSV row per step.
pub fn train_model<F: Real>(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    train: &[Utterance],
    seed: u64,
    log: Option<&mut dyn Write>,
) -> Result<Params<F>> {
    let spec = kind.train_spec(cfg);
    let train = match spec.train_limit {
        0 => train,
        n => &train[..n.min(train.len())],
    };
    if train.is_empty() {
        return Err(Error::Contract("empty training split".into()));
    }
    let examples = train_examples::<F>(cfg, train, kind.uses_audio(), spec)?;
    let model_seed = seed::derive_seed(seed, &[kind.tag()]);
    let params = init_params::<F>(&kind.model_config(cfg), model_seed)?;
    let tc = spec.train_config(model_seed);
    let mut log = log.map(TrainLog::new).transpose()?;
    let batch_for = |step: usize| -> Vec<TrainExample<F>> {
        let mut rng = seed::derive_rng(model_seed, &[TAG_BATCH, step as u64]);
        (0..spec.batch_size)
            .map(|_| {
                let mut ex = examples[rng.gen_range(0..examples.len())].clone();
                if kind != ModelKind::Ar && rng.gen_bool(spec.exact_length_prob) {
                    ex.response = truncate_at_eos(&ex.response).to_vec();
                }
                ex
            })
            .collect()
    };
    let mut record = |r: &StepReport| -> Result<()> {
        if let Some(l) = log.as_mut() {
            l.record(r)?;
        }
        Ok(())
    };
    match kind {
        ModelKind::Ar => {
            let mut t = ArTrainer::new(params, tc)?;
            for step in 0..spec.steps {
                record(&t.train_step(&batch_for(step))?)?;
            }
            Ok(t.params)
        }
        _ => {
            let mode = if kind.uses_audio() { ObjectiveMode::AudioSft } else { ObjectiveMode::Sft };
            let mut t = Trainer::new(params, tc)?;
            for step in 0..spec.steps {
                record(&t.train_step(&batch_for(step), mode)?)?;
            }
            Ok(t.params)
        }
    }
}

/// Loads a checkpoint, naming the config entry when the file is absent.
pub fn load_model<F: Real>(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Params<F>> {
    let path = match kind {
        ModelKind::Denoiser => &cfg.paths.denoiser,
        ModelKind::Ar => &cfg.paths.ar,
        ModelKind::Refiner => &cfg.paths.refiner,
    };
    if !path.exists() {
        return Err(Error::Missing { entry: format!("paths.{}", kind.name()), path: path.clone() });
    }
    load_checkpoint_expecting(path, &kind.model_config(cfg))
}

/// One line of a hypothesis file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypRecord {
    pub id: String,
    pub tokens: TokenSeq,
    pub confidences: Vec<f64>,
    pub duration_s: f64,
    pub elapsed_s: f64,
    /// System and settings that produced the tokens.
    pub provenance: String,
    #[serde(default)]
    pub denoiser_calls: usize,
    #[serde(default)]
    pub truncated: bool,
}

impl HypRecord {
    fn from_hypothesis(utt: &Utterance, h: Hypothesis, provenance: &str) -> Self {
        Self {
            id: utt.id.clone(),
            tokens: h.tokens,
            confidences: h.confidences,
            duration_s: utt.duration_s,
            elapsed_s: h.elapsed_s,
            provenance: provenance.to_string(),
            denoiser_calls: h.denoiser_calls,
            truncated: h.truncated,
        }
    }

    /// Same output ignoring wall-clock time.
    pub fn same_output(&self, other: &Self) -> bool {
        Self { elapsed_s: 0.0, ..self.clone() } == Self { elapsed_s: 0.0, ..other.clone() }
    }
}

pub fn write_hypotheses(path: &Path, records: &[HypRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hypotheses(path: &Path) -> Result<Vec<HypRecord>> {
    let file = File::open(path).map_err(|_| Error::Missing { entry: "hypotheses".into(), path: path.to_path_buf() })?;
    BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Maps `f` over utterances, in parallel unless `sequential` (timed runs).
fn map_utts<T: Send>(
    utts: &[Utterance],
    sequential: bool,
    f: impl Fn(usize, &Utterance) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if sequential {
        utts.iter().enumerate().map(|(i, u)| f(i, u)).collect()
    } else {
        utts.par_iter().enumerate().map(|(i, u)| f(i, u)).collect()
    }
}

pub fn decode_label(d: &DecodeConfig) -> String {
    if d.sub_blocks == 1 {
        format!("diffusion:n={}", d.steps)
    } else {
        format!("semi_ar:n={}:m={}", d.steps, d.sub_blocks)
    }
}

/// Diffusion (one sub-block) or semi-autoregressive decoding of every utterance.
pub fn decode_split<F: Real>(
    cfg: &ExperimentConfig,
    denoiser: &Params<F>,
    utts: &[Utterance],
    decode: &DecodeConfig,
    sequential: bool,
) -> Result<Vec<HypRecord>> {
    let label = decode_label(decode);
    map_utts(utts, sequential, |_, u| {
        let audio = audio_features::<F>(cfg, u)?;
        let h = if decode.sub_blocks == 1 {
            diffusion_decode(denoiser, &cfg.instruction, Some(audio.view()), decode)?
        } else {
            semi_ar_decode(denoiser, &cfg.instruction, Some(audio.view()), decode)?
        };
        Ok(HypRecord::from_hypothesis(u, h, &label))
    })
}

pub const AR_PROVENANCE: &str = "ar-baseline";

/// Greedy autoregressive transcription, at most `block_len - 1` tokens.
pub fn transcribe_split<F: Real>(
    cfg: &ExperimentConfig,
    ar: &Params<F>,
    utts: &[Utterance],
    sequential: bool,
) -> Result<Vec<HypRecord>> {
    map_utts(utts, sequential, |_, u| {
        let audio = audio_features::<F>(cfg, u)?;
        let h = ar_greedy_transcribe(ar, &cfg.instruction, Some(audio.view()), cfg.block_len - 1)?;
        Ok(HypRecord::from_hypothesis(u, h, AR_PROVENANCE))
    })
}

/// Refines first-pass records aligned with `utts`. Empty transcripts have
/// nothing to remask and pass through unchanged. Randomness is drawn per
/// utterance index from the deliberation seed.
pub fn deliberate_split<F: Real>(
    cfg: &ExperimentConfig,
    refiner: &Params<F>,
    utts: &[Utterance],
    first_pass: &[HypRecord],
    dcfg: &DeliberationConfig,
    sequential: bool,
) -> Result<Vec<HypRecord>> {
    check_aligned(utts, first_pass)?;
    let dcfg = DeliberationConfig { max_len: cfg.block_len, ..dcfg.clone() };
    let provenance_suffix = dcfg.label();
    map_utts(utts, sequential, |i, u| {
        let first = &first_pass[i];
        let provenance = format!("{}+{provenance_suffix}", first.provenance);
        if first.tokens.is_empty() {
            return Ok(HypRecord { provenance, denoiser_calls: 0, elapsed_s: 0.0, ..first.clone() });
        }
        let started = std::time::Instant::now();
        let audio = audio_features::<F>(cfg, u)?;
        let transcript = FirstPassTranscript {
            tokens: first.tokens.clone(),
            source: first.provenance.clone(),
            duration_s: first.duration_s,
        };
        let mut rng = seed::derive_rng(dcfg.seed, &[i as u64]);
        let r = deliberate(refiner, &cfg.instruction, Some(audio.view()), &transcript, &dcfg, &mut rng)?;
        Ok(HypRecord {
            id: u.id.clone(),
            confidences: Vec::new(),
            tokens: r.tokens,
            duration_s: u.duration_s,
            elapsed_s: started.elapsed().as_secs_f64(),
            provenance,
            denoiser_calls: r.denoiser_calls,
            truncated: first.truncated,
        })
    })
}

fn check_aligned(utts: &[Utterance], records: &[HypRecord]) -> Result<()> {
    if utts.len() != records.len() {
        return Err(Error::Contract(format!("{} hypotheses for {} utterances", records.len(), utts.len())));
    }
    if let Some((u, r)) = utts.iter().zip(records).find(|(u, r)| u.id != r.id) {
        return Err(Error::Contract(format!("hypothesis {} does not match utterance {}", r.id, u.id)));
    }
    Ok(())
}

/// One system scored on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub system: String,
    pub config: String,
    pub split: Split,
    pub utterances: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub wer: f64,
    pub rtf: f64,
    pub denoiser_calls: f64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str =
        "system,config,split,utterances,substitutions,insertions,deletions,reference_length,wer,rtf,denoiser_calls";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.4}",
            self.system,
            self.config,
            self.split.name(),
            self.utterances,
            self.substitutions,
            self.insertions,
            self.deletions,
            self.reference_length,
            self.wer,
            self.rtf,
            self.denoiser_calls
        )
    }

    pub fn breakdown(&self) -> WerBreakdown {
        WerBreakdown {
            substitutions: self.substitutions,
            insertions: self.insertions,
            deletions: self.deletions,
            reference_length: self.reference_length,
            wer: self.wer,
        }
    }
}

/// Corpus-level WER, ratio-of-sums RTF and mean call count.
pub fn score(system: &str, config: &str, split: Split, utts: &[Utterance], hyps: &[HypRecord]) -> Result<BenchRecord> {
    check_aligned(utts, hyps)?;
    if utts.is_empty() {
        return Err(Error::Contract("nothing to score".into()));
    }
    let per: Vec<WerBreakdown> =
        utts.iter().zip(hyps).map(|(u, h)| wer(&u.reference, &h.tokens)).collect::<Result<_>>()?;
    let total = WerBreakdown::total(&per);
    let elapsed: f64 = hyps.iter().map(|h| h.elapsed_s).sum();
    let duration: f64 = hyps.iter().map(|h| h.duration_s).sum();
    Ok(BenchRecord {
        system: system.to_string(),
        config: config.to_string(),
        split,
        utterances: utts.len(),
        substitutions: total.substitutions,
        insertions: total.insertions,
        deletions: total.deletions,
        reference_length: total.reference_length,
        wer: total.wer,
        rtf: rtf(elapsed, duration)?,
        denoiser_calls: hyps.iter().map(|h| h.denoiser_calls as f64).sum::<f64>() / hyps.len() as f64,
    })
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", BenchRecord::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
