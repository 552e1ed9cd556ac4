//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "MDAS" | version: u16 | config block | tensor count: u32 | tensors...
//! config block: vocab_size, model_dim, num_layers, num_heads, ffn_dim,
//!               max_positions, feature_dim (u32 each), attention (u8),
//!               precision (u8)
//! tensor: name_len: u32 | name (utf-8) | dtype: u8 | rank: u8 | dims: u32 × rank | data
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::config::{AttentionMode, ModelConfig, Precision};
use super::params::Params;
use super::real::Real;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MDAS";
pub const VERSION: u16 = 1;

const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;

fn dtype_tag(p: Precision) -> u8 {
    match p {
        Precision::Single => DTYPE_F32,
        Precision::Double => DTYPE_F64,
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Corruption("checkpoint is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn write_config<W: Write>(w: &mut W, c: &ModelConfig) -> std::io::Result<()> {
    for v in [c.vocab_size, c.model_dim, c.num_layers, c.num_heads, c.ffn_dim, c.max_positions, c.feature_dim] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_u8(match c.attention {
        AttentionMode::Bidirectional => 0,
        AttentionMode::Causal => 1,
    })?;
    w.write_u8(dtype_tag(c.precision))
}

fn read_config<R: Read>(r: &mut R) -> Result<ModelConfig> {
    let mut f = [0usize; 7];
    for v in f.iter_mut() {
        *v = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    }
    let attention = match r.read_u8().map_err(truncated)? {
        0 => AttentionMode::Bidirectional,
        1 => AttentionMode::Causal,
        x => return Err(Error::Format(format!("unknown attention tag {x}"))),
    };
    let precision = match r.read_u8().map_err(truncated)? {
        DTYPE_F32 => Precision::Single,
        DTYPE_F64 => Precision::Double,
        x => return Err(Error::Format(format!("unknown precision tag {x}"))),
    };
    let config = ModelConfig {
        vocab_size: f[0],
        model_dim: f[1],
        num_layers: f[2],
        num_heads: f[3],
        ffn_dim: f[4],
        max_positions: f[5],
        feature_dim: f[6],
        attention,
        precision,
    };
    config.validate().map_err(|e| Error::Corruption(format!("stored config is invalid: {e}")))?;
    Ok(config)
}

pub fn save_checkpoint<F: Real>(params: &Params<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    write_config(&mut w, &params.config)?;
    let tensors = params.tensors();
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, t) in tensors {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(dtype_tag(F::PRECISION))?;
        w.write_u8(2)?;
        w.write_u32::<LittleEndian>(t.nrows() as u32)?;
        w.write_u32::<LittleEndian>(t.ncols() as u32)?;
        for &x in t.iter() {
            x.write_le(&mut w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint whose element type is `F`.
pub fn load_checkpoint<F: Real>(path: impl AsRef<Path>) -> Result<(Params<F>, ModelConfig)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}")));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let config = read_config(&mut r)?;
    if config.precision != F::PRECISION {
        return Err(Error::Format(format!(
            "checkpoint stores {:?} precision, requested {:?}",
            config.precision,
            F::PRECISION
        )));
    }
    let mut params = Params::<F>::zeros(&config);
    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(Error::Corruption(format!("checkpoint holds {count} tensors, config implies {}", slots.len())));
    }
    for (expected, t) in slots.iter_mut() {
        let len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        if len > 256 {
            return Err(Error::Corruption(format!("implausible tensor name length {len}")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Corruption("tensor name is not utf-8".into()))?;
        if &name != expected {
            return Err(Error::Corruption(format!("expected tensor {expected}, found {name}")));
        }
        let dtype = r.read_u8().map_err(truncated)?;
        if dtype != dtype_tag(F::PRECISION) {
            return Err(Error::Format(format!("tensor {name} has dtype tag {dtype}")));
        }
        let rank = r.read_u8().map_err(truncated)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        if dims != [t.nrows(), t.ncols()] {
            return Err(Error::Corruption(format!("tensor {name} has dims {dims:?}, expected {:?}", t.dim())));
        }
        for x in t.iter_mut() {
            *x = F::read_le(&mut r).map_err(truncated)?;
        }
    }
    drop(slots);
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Corruption(format!("{} trailing bytes", rest.len())));
    }
    Ok((params, config))
}

/// Like [`load_checkpoint`], but fails unless the stored config equals `expected`.
pub fn load_checkpoint_expecting<F: Real>(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Params<F>> {
    let (params, config) = load_checkpoint::<F>(path)?;
    if &config != expected {
        return Err(Error::ConfigMismatch { expected: format!("{expected:?}"), found: format!("{config:?}") });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::init_params;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 8,
            model_dim: 4,
            num_layers: 2,
            num_heads: 2,
            ffn_dim: 6,
            max_positions: 10,
            feature_dim: 3,
            attention: AttentionMode::Causal,
            precision: Precision::Single,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = init_params::<f32>(&cfg(), 5).unwrap();
        save_checkpoint(&p, &path).unwrap();
        let (q, c) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(c, cfg());
        for ((_, a), (_, b)) in p.tensors().into_iter().zip(q.tensors()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&init_params::<f32>(&cfg(), 5).unwrap(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_a_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&init_params::<f32>(&cfg(), 5).unwrap(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Corruption(_))), "cut at {cut}");
        }
    }

    #[test]
    fn config_and_precision_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&init_params::<f32>(&cfg(), 5).unwrap(), &path).unwrap();
        let other = ModelConfig { ffn_dim: 8, ..cfg() };
        assert!(matches!(load_checkpoint_expecting::<f32>(&path, &other), Err(Error::ConfigMismatch { .. })));
        assert!(load_checkpoint_expecting::<f32>(&path, &cfg()).is_ok());
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Format(_))));
    }
}
