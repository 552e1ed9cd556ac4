//! Token ids and the reserved symbols shared by every model in the crate.

use serde::{Deserialize, Serialize};

pub type TokenId = u32;
pub type TokenSeq = Vec<TokenId>;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const MASK: TokenId = 3;
pub const NUM_RESERVED: u32 = 4;

/// Content tokens occupy ids `NUM_RESERVED..NUM_RESERVED + content_tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub content_tokens: u32,
}

impl Vocabulary {
    pub fn new(content_tokens: u32) -> Self {
        Self { content_tokens }
    }

    pub fn size(&self) -> usize {
        (NUM_RESERVED + self.content_tokens) as usize
    }

    pub fn content(&self, index: u32) -> TokenId {
        debug_assert!(index < self.content_tokens);
        NUM_RESERVED + index
    }

    pub fn content_index(&self, token: TokenId) -> Option<usize> {
        (token >= NUM_RESERVED && token < NUM_RESERVED + self.content_tokens).then(|| (token - NUM_RESERVED) as usize)
    }

    pub fn is_content(&self, token: TokenId) -> bool {
        self.content_index(token).is_some()
    }

    /// Tokens a decoder is allowed to emit: content plus EOS.
    pub fn is_emittable(&self, token: TokenId) -> bool {
        token == EOS || self.is_content(token)
    }
}

/// Truncate at the first EOS (exclusive).
pub fn truncate_at_eos(tokens: &[TokenId]) -> &[TokenId] {
    match tokens.iter().position(|&t| t == EOS) {
        Some(i) => &tokens[..i],
        None => tokens,
    }
}

pub fn format_tokens(tokens: &[TokenId]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_tokens(s: &str) -> Result<TokenSeq, std::num::ParseIntError> {
    s.split_whitespace().map(str::parse).collect()
}
