//! Synthetic speech-like corpus.
//!
//! References come from a token bigram source with a fixed random transition
//! table per seed. Each token emits `frames_per_token` feature frames equal to
//! a fixed unit-norm prototype for that token plus Gaussian noise. The two
//! test splits differ only in noise level, so `test_other` is the harder one.
//! Training utterances draw their noise level uniformly between the two.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::vocab::{format_tokens, parse_tokens, TokenSeq, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Number of content tokens (reserved ids come on top).
    pub vocab_size: u32,
    pub min_len: usize,
    pub max_len: usize,
    pub frames_per_token: usize,
    pub feature_dim: usize,
    pub frame_period_s: f64,
    pub noise_sigma_clean: f64,
    pub noise_sigma_other: f64,
    /// Scale of the Gaussian logits behind each bigram row; larger is more predictable.
    pub bigram_sharpness: f64,
    pub train: usize,
    pub dev: usize,
    pub test_clean: usize,
    pub test_other: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            min_len: 3,
            max_len: 24,
            frames_per_token: 4,
            feature_dim: 16,
            frame_period_s: 0.025,
            noise_sigma_clean: 0.3,
            noise_sigma_other: 0.9,
            bigram_sharpness: 3.0,
            train: 20_000,
            dev: 1_000,
            test_clean: 1_000,
            test_other: 1_000,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    /// `block_len` is the response block the corpus must fit (length + EOS).
    pub fn validate(&self, block_len: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.feature_dim == 0 || self.frames_per_token == 0 {
            return fail("vocab_size, feature_dim and frames_per_token must be positive".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail(format!("bad length range {}..={}", self.min_len, self.max_len));
        }
        if self.max_len + 1 > block_len {
            return fail(format!("max_len {} + EOS does not fit block length {block_len}", self.max_len));
        }
        if self.noise_sigma_other <= self.noise_sigma_clean || self.noise_sigma_clean < 0.0 {
            return fail("noise_sigma_other must exceed noise_sigma_clean >= 0".into());
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocabulary {
        Vocabulary::new(self.vocab_size)
    }

    pub fn split_size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::TestClean => self.test_clean,
            Split::TestOther => self.test_other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    TestClean,
    TestOther,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::TestClean, Split::TestOther];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::TestClean => "test_clean",
            Split::TestOther => "test_other",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Split::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Parse(format!("unknown split {s:?}")))
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub reference: TokenSeq,
    /// `num_frames × feature_dim`.
    pub frames: Array2<f32>,
    pub duration_s: f64,
}

/// Fixed per-seed generative tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    /// Unit-norm prototype per content token (`vocab_size × feature_dim`).
    pub prototypes: Array2<f64>,
    /// Row 0: first-token distribution; row `k + 1`: successors of content token `k`.
    pub bigram: Array2<f64>,
}

impl Source {
    pub fn new(cfg: &CorpusConfig) -> Self {
        let v = cfg.vocab_size as usize;
        let mut rng = seed::derive_rng(cfg.seed, &[0]);
        let mut prototypes = Array2::zeros((v, cfg.feature_dim));
        for mut row in prototypes.outer_iter_mut() {
            row.mapv_inplace(|_| -> f64 { StandardNormal.sample(&mut rng) });
            let norm = row.dot(&row).sqrt();
            row.mapv_inplace(|x: f64| x / norm);
        }
        let mut bigram = Array2::zeros((v + 1, v));
        for mut row in bigram.outer_iter_mut() {
            row.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (cfg.bigram_sharpness * z).exp()
            });
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        Self { prototypes, bigram }
    }

    /// Index of the prototype nearest to `frame` (Euclidean).
    pub fn nearest_prototype(&self, frame: ndarray::ArrayView1<'_, f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, p) in self.prototypes.outer_iter().enumerate() {
            let d: f64 = p.iter().zip(frame.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub source: Source,
    pub splits: BTreeMap<Split, Vec<Utterance>>,
}

fn noise_sigma(cfg: &CorpusConfig, split: Split, rng: &mut seed::Rng) -> f64 {
    match split {
        Split::Train => rng.gen_range(cfg.noise_sigma_clean..=cfg.noise_sigma_other),
        Split::Dev | Split::TestClean => cfg.noise_sigma_clean,
        Split::TestOther => cfg.noise_sigma_other,
    }
}

fn gen_utterance(cfg: &CorpusConfig, source: &Source, split: Split, index: usize) -> Utterance {
    let mut rng = seed::derive_rng(cfg.seed, &[split.code(), index as u64]);
    let vocab = cfg.vocab();
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let mut reference = Vec::with_capacity(len);
    let mut prev = 0usize;
    for _ in 0..len {
        let row = source.bigram.row(prev);
        let k = WeightedIndex::new(row.iter()).expect("bigram rows are normalised").sample(&mut rng);
        reference.push(vocab.content(k as u32));
        prev = k + 1;
    }
    let sigma = noise_sigma(cfg, split, &mut rng);
    let num_frames = len * cfg.frames_per_token;
    let mut frames = Array2::zeros((num_frames, cfg.feature_dim));
    for (f, mut row) in frames.outer_iter_mut().enumerate() {
        let tok = vocab.content_index(reference[f / cfg.frames_per_token]).expect("content token");
        for (j, x) in row.iter_mut().enumerate() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *x = (source.prototypes[[tok, j]] + sigma * n) as f32;
        }
    }
    Utterance {
        id: format!("{}-{index:06}", split.name()),
        reference,
        frames,
        duration_s: num_frames as f64 * cfg.frame_period_s,
    }
}

/// Generates every split. Utterances are produced in parallel from
/// per-utterance seeds, so the output is independent of the thread count.
pub fn gen_corpus(cfg: &CorpusConfig) -> Corpus {
    let source = Source::new(cfg);
    let splits = Split::ALL
        .into_iter()
        .map(|split| {
            let utts =
                (0..cfg.split_size(split)).into_par_iter().map(|i| gen_utterance(cfg, &source, split, i)).collect();
            (split, utts)
        })
        .collect();
    Corpus { config: cfg.clone(), source, splits }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Space-separated integer token ids.
    pub reference: String,
    pub feature_path: String,
    pub num_frames: usize,
    pub duration_s: f64,
}

pub const CORPUS_CONFIG_FILE: &str = "corpus.toml";

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.name()))
}

/// Feature file: `id_len: u32 | id | rows: u32 | cols: u32 | f32 data`, little-endian, row-major.
pub fn write_features(path: &Path, id: &str, frames: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<LittleEndian>(id.len() as u32)?;
    w.write_all(id.as_bytes())?;
    w.write_u32::<LittleEndian>(frames.nrows() as u32)?;
    w.write_u32::<LittleEndian>(frames.ncols() as u32)?;
    for &x in frames.iter() {
        w.write_f32::<LittleEndian>(x)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(String, Array2<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let eof = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Corruption(format!("truncated feature file {}", path.display()))
        } else {
            Error::Io(e)
        }
    };
    let len = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let mut id = vec![0u8; len];
    r.read_exact(&mut id).map_err(eof)?;
    let id = String::from_utf8(id).map_err(|_| Error::Corruption("feature id is not utf-8".into()))?;
    let rows = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(r.read_f32::<LittleEndian>().map_err(eof)?);
    }
    let frames = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Corruption(e.to_string()))?;
    Ok((id, frames))
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Utterance] {
        self.splits.get(&split).map_or(&[], Vec::as_slice)
    }

    /// Writes `corpus.toml`, one JSON-lines manifest per split and one
    /// feature file per utterance under `features/<split>/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let cfg = toml::to_string(&self.config).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join(CORPUS_CONFIG_FILE), cfg)?;
        for (split, utts) in &self.splits {
            let feat_dir = dir.join("features").join(split.name());
            fs::create_dir_all(&feat_dir)?;
            let mut manifest = BufWriter::new(File::create(manifest_path(dir, *split))?);
            for u in utts {
                let rel = format!("features/{}/{}.feat", split.name(), u.id);
                write_features(&dir.join(&rel), &u.id, &u.frames)?;
                let rec = ManifestRecord {
                    id: u.id.clone(),
                    reference: format_tokens(&u.reference),
                    feature_path: rel,
                    num_frames: u.frames.nrows(),
                    duration_s: u.duration_s,
                };
                serde_json::to_writer(&mut manifest, &rec)?;
                manifest.write_all(b"\n")?;
            }
            manifest.flush()?;
        }
        Ok(())
    }

    /// Loads the requested splits of a corpus written by [`Corpus::write`].
    pub fn load(dir: &Path, splits: &[Split]) -> Result<Self> {
        let cfg_path = dir.join(CORPUS_CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path)
            .map_err(|_| Error::Missing { entry: "corpus".into(), path: cfg_path.clone() })?;
        let config: CorpusConfig = toml::from_str(&text)?;
        let mut out = BTreeMap::new();
        for &split in splits {
            out.insert(split, load_manifest(dir, split)?);
        }
        Ok(Self { source: Source::new(&config), config, splits: out })
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path).map_err(|_| Error::Missing { entry: "manifest".into(), path: path.to_path_buf() })?;
    BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

fn load_manifest(dir: &Path, split: Split) -> Result<Vec<Utterance>> {
    read_manifest(&manifest_path(dir, split))?
        .into_iter()
        .map(|rec| {
            let (id, frames) = read_features(&dir.join(&rec.feature_path))?;
            if id != rec.id || frames.nrows() != rec.num_frames {
                return Err(Error::Corruption(format!("feature file for {} does not match manifest", rec.id)));
            }
            let reference = parse_tokens(&rec.reference).map_err(|e| Error::Parse(format!("{}: {e}", rec.id)))?;
            Ok(Utterance { id: rec.id, reference, frames, duration_s: rec.duration_s })
        })
        .collect()
}
