use crate::model::TokenId;

pub type ClientId = u64;

/// One simulated device's text, sentences in temporal order.
///
/// Sentences hold word ids only; BOS and EOS are added by the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientDataset {
    pub id: ClientId,
    sentences: Vec<Vec<TokenId>>,
    target_tokens: u64,
}

impl ClientDataset {
    pub fn new(id: ClientId, sentences: Vec<Vec<TokenId>>) -> Self {
        let target_tokens = sentences.iter().map(|s| s.len() as u64 + 1).sum();
        Self { id, sentences, target_tokens }
    }

    pub fn sentences(&self) -> &[Vec<TokenId>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Every word plus one EOS per sentence.
    pub fn target_tokens(&self) -> u64 {
        self.target_tokens
    }
}
