use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::NUM_RESERVED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Bidirectional,
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
    Double,
}

/// Shape of one network. `feature_dim` is the width of the pooled acoustic
/// features consumed by the audio projection; 0 means the model takes no
/// audio at all.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub feature_dim: usize,
    pub attention: AttentionMode,
    pub precision: Precision,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size <= NUM_RESERVED as usize {
            return fail(format!("vocab_size {} leaves no room past the {NUM_RESERVED} reserved ids", self.vocab_size));
        }
        if self.model_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            return fail("model_dim, num_heads and ffn_dim must be positive".into());
        }
        if self.model_dim % self.num_heads != 0 {
            return fail(format!("model_dim {} is not divisible by num_heads {}", self.model_dim, self.num_heads));
        }
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1".into());
        }
        if self.max_positions == 0 {
            return fail("max_positions must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    /// Checks that a layout of the given total length fits the positional table.
    pub fn check_layout_len(&self, len: usize) -> Result<()> {
        if len > self.max_positions {
            return Err(Error::Length { what: "layout", got: len, limit: self.max_positions });
        }
        Ok(())
    }

    pub fn with_attention(&self, attention: AttentionMode) -> Self {
        Self { attention, ..self.clone() }
    }

    pub fn num_params(&self) -> usize {
        let (v, d, h, f) = (self.vocab_size, self.model_dim, self.ffn_dim, self.feature_dim);
        let layer = 4 * (d * d + d) + 2 * d * h + h + d + 4 * d;
        v * d + self.max_positions * d + f * d + d + self.num_layers * layer + 2 * d + d * v + v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            model_dim: 8,
            num_layers: 1,
            num_heads: 2,
            ffn_dim: 16,
            max_positions: 20,
            feature_dim: 4,
            attention: AttentionMode::Bidirectional,
            precision: Precision::Double,
        }
    }

    #[test]
    fn head_divisibility_is_enforced() {
        assert!(cfg().validate().is_ok());
        let bad = ModelConfig { num_heads: 3, ..cfg() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ModelConfig { vocab_size: 4, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn overflow_is_a_length_error() {
        assert!(cfg().check_layout_len(20).is_ok());
        assert!(matches!(cfg().check_layout_len(21), Err(Error::Length { .. })));
    }
}
