use ndarray::ArrayView2;

use crate::vocab::TokenId;

/// Ordered model input: instruction tokens, pooled acoustic features, then
/// the response block. Audio rows bypass the token embedding and go through
/// the model's audio projection instead.
#[derive(Debug, Clone, Copy)]
pub struct PromptLayout<'a, F> {
    pub instruction: &'a [TokenId],
    pub audio: Option<ArrayView2<'a, F>>,
    pub response: &'a [TokenId],
}

impl<'a, F> PromptLayout<'a, F> {
    pub fn new(instruction: &'a [TokenId], audio: Option<ArrayView2<'a, F>>, response: &'a [TokenId]) -> Self {
        Self { instruction, audio, response }
    }

    pub fn audio_len(&self) -> usize {
        self.audio.as_ref().map_or(0, |a| a.nrows())
    }

    pub fn response_start(&self) -> usize {
        self.instruction.len() + self.audio_len()
    }

    pub fn len(&self) -> usize {
        self.response_start() + self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
