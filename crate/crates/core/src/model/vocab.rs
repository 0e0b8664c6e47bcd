use std::collections::HashMap;

use super::TokenId;
use crate::error::{Error, Result};

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const OOV: TokenId = 2;

/// Surface forms of the reserved ids, in id order.
pub const RESERVED_TOKENS: [&str; 3] = ["<s>", "</s>", "<unk>"];

/// Bijection between token strings and dense ids. Ids 0, 1 and 2 are always
/// BOS, EOS and OOV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from word forms in id order (reserved tokens are prepended).
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(Into::into));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 4 {
            return Err(Error::config("vocabulary needs at least one word besides the reserved tokens"));
        }
        for (id, reserved) in RESERVED_TOKENS.iter().enumerate() {
            if tokens[id] != *reserved {
                return Err(Error::parse(id + 1, format!("expected reserved token `{reserved}`")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::parse(id + 1, "tokens must be non-empty and contain no whitespace"));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::parse(id + 1, format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Synthetic vocabulary `<s> </s> <unk> w3 w4 ...` of the given size.
    pub fn synthetic(size: usize) -> Result<Self> {
        Self::from_words((RESERVED_TOKENS.len()..size).map(|id| format!("w{id}")))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or OOV.
    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }
}
